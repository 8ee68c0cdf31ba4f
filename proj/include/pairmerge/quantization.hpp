// Copyright 2026 The pairmerge Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "pairmerge/matrix.hpp"

namespace pairmerge {

// Unsigned symmetric group quantization of non-negative magnitudes: each
// contiguous group of the flattened tensor has scale = max / (2^bits - 1)
// (1 for an all-zero group) and codes round(v / scale).
struct QuantizedTensor {
  std::size_t rows = 0;
  std::size_t cols = 0;
  int bits = 0;
  int group_size = 0;
  std::vector<std::uint16_t> codes;  // row-major, one per element
  std::vector<float> scales;         // one per group

  MatrixF dequantize() const;
  std::string dtype() const;  // "q{bits}g{group}"

  friend bool operator==(const QuantizedTensor&, const QuantizedTensor&) = default;
};

// Throws InvalidBits for bits outside [2, 16], InvalidArgument for
// group_size < 1 or a negative value.
QuantizedTensor quantize_group(const MatrixF& magnitudes, int bits, int group_size);

// Average bits per original weight for a merged pair: two signs, the
// radix-3 mask pair (log2 3), the code, and the amortized group scale, shared
// by the two experts.
double avg_bitwidth(int quant_bits, int group_size, int scale_bits);

// Little-endian LSB-first bit stream of the codes; ceil(n * bits / 8) bytes.
std::vector<std::uint8_t> pack_codes(const std::vector<std::uint16_t>& codes, int bits);
std::vector<std::uint16_t> unpack_codes(const std::vector<std::uint8_t>& bytes, int bits,
                                        std::size_t count);

// Parses "q{bits}g{group}"; returns false if `dtype` is not of that form.
bool parse_quant_dtype(const std::string& dtype, int& bits, int& group_size);

}  // namespace pairmerge
