// Copyright 2026 The pairmerge Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"

#include "pairmerge/bitcodec.hpp"
#include "pairmerge/matrix.hpp"
#include "pairmerge/quantization.hpp"

namespace pairmerge {

// On-disk layout ("PZM1" container):
//
//   bytes 0-3   magic "PZM1"
//   bytes 4-7   header_len, u32 little-endian
//   header      UTF-8 JSON, header_len bytes:
//                 {"format_version": 1,
//                  "tensors": [{"name", "dtype", "shape", "byte_offset", "byte_len"}],
//                  "metadata": {...}}
//   payload     starts at 8 + header_len rounded up to 64; byte_offset is
//               relative to the payload start and a multiple of 64; tensor
//               bytes are little-endian, row-major. Gaps are zero-filled.
//
// A container without tensors ends right after the header. Otherwise the file
// ends exactly at the end of the last tensor.
//
// dtypes: f32 (4 bytes), bf16 and pbf16 (2 bytes), q{b}g{g} (ceil(n*b/8)).

inline constexpr int kContainerFormatVersion = 1;
inline constexpr std::size_t kPayloadAlignment = 64;

struct TensorRecord {
  std::string name;
  std::string dtype;
  std::vector<std::uint64_t> shape;
  std::vector<std::uint8_t> bytes;

  std::uint64_t element_count() const;
  friend bool operator==(const TensorRecord&, const TensorRecord&) = default;
};

struct Container {
  std::vector<TensorRecord> tensors;
  nlohmann::json metadata = nlohmann::json::object();

  const TensorRecord* find(const std::string& name) const;
  const TensorRecord& at(const std::string& name) const;  // throws CorruptHeader
  void add(TensorRecord record);                          // throws DuplicateName
};

// Expected payload length of a tensor; throws CorruptHeader for an unknown
// dtype.
std::uint64_t dtype_byte_len(const std::string& dtype, std::uint64_t elements);

std::vector<std::uint8_t> serialize_container(const Container& c);
Container parse_container(const std::vector<std::uint8_t>& bytes);

// Throws IoError on filesystem failures.
void write_container(const std::filesystem::path& path, const Container& c);
Container read_container(const std::filesystem::path& path);

// Typed views.
TensorRecord make_f32(const std::string& name, const MatrixF& m);
TensorRecord make_bf16(const std::string& name, const MatrixF& m);  // values must be bf16-exact
TensorRecord make_pbf16(const std::string& name, const PackedExpertPair& p);
// Codes tensor under `name`, scales (f32) under `name + "/scales"`.
std::vector<TensorRecord> make_quantized(const std::string& name, const QuantizedTensor& q);

MatrixF to_matrix(const TensorRecord& r);  // f32 or bf16, rank 2 (rank 1 -> 1 x n)
std::vector<float> to_vector(const TensorRecord& r);
PackedExpertPair to_packed(const TensorRecord& r, std::array<int, 2> pair_id = {0, 1});
QuantizedTensor to_quantized(const TensorRecord& codes, const TensorRecord& scales);

}  // namespace pairmerge
