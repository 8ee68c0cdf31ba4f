// Copyright 2026 The pairmerge Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "pairmerge/bitcodec.hpp"
#include "pairmerge/matrix.hpp"

namespace pairmerge {

// All three paths accumulate each row in one f32 accumulator in ascending
// column order, so for finite x they agree bit-exactly on the same weights.
// Rows are split across workers.

void gemv_reference(const MatrixF& w, std::span<const float> x, std::span<float> y);
std::vector<float> gemv_reference(const MatrixF& w, std::span<const float> x);

// Decodes each packed word in the inner loop; no decoded matrix is built.
void gemv_fused(const PackedExpertPair& packed, ExpertPos pos, std::span<const float> x,
                std::span<float> y);
std::vector<float> gemv_fused(const PackedExpertPair& packed, ExpertPos pos,
                              std::span<const float> x);

// Dense matrix of raw bf16 words.
void gemv_bf16(const Matrix<std::uint16_t>& w, std::span<const float> x, std::span<float> y);

// Decodes the whole pair into a bf16 buffer, then runs gemv_bf16 on it.
std::vector<float> gemv_decode_then_dense(const PackedExpertPair& packed, ExpertPos pos,
                                          std::span<const float> x);

struct BenchReport {
  std::size_t rows = 0;
  std::size_t cols = 0;
  int iters = 0;
  std::uint64_t seed = 0;
  double fused_ns_per_call = 0;
  double reference_ns_per_call = 0;  // dense bf16 matrix, pre-decoded
  double decode_then_dense_ns_per_call = 0;
  std::uint64_t fused_bytes_per_call = 0;
  std::uint64_t reference_bytes_per_call = 0;
  std::uint64_t decode_then_dense_bytes_per_call = 0;
  bool low_confidence = false;  // fewer than 3 samples per path
};

// Median wall time of `iters` calls per path on a random packed pair.
// Byte counts cover weight traffic only.
BenchReport bench_gemv(std::size_t rows, std::size_t cols, int iters, std::uint64_t seed);

}  // namespace pairmerge
