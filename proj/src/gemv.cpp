// Copyright 2026 The pairmerge Authors
// SPDX-License-Identifier: Apache-2.0

#include "pairmerge/gemv.hpp"

#include <algorithm>
#include <bit>
#include <chrono>
#include <cmath>
#include <random>
#include <string>

#include "pairmerge/parallel.hpp"
#include "pairmerge/rng.hpp"

namespace pairmerge {

namespace {

void check_dims(std::size_t rows, std::size_t cols, std::span<const float> x, std::span<float> y,
                const char* what) {
  if (x.size() != cols || y.size() != rows) {
    throw DimensionMismatch(std::string(what) + ": matrix " + std::to_string(rows) + "x" +
                            std::to_string(cols) + ", x " + std::to_string(x.size()) + ", y " +
                            std::to_string(y.size()));
  }
}

constexpr std::size_t kRowsPerTask = 64;
constexpr std::size_t kTile = 64;

inline float bf16_bits_to_float(std::uint32_t bits) {
  return std::bit_cast<float>(bits << 16);
}

}  // namespace

void gemv_reference(const MatrixF& w, std::span<const float> x, std::span<float> y) {
  check_dims(w.rows(), w.cols(), x, y, "gemv_reference");
  parallel_for(w.rows(), [&](std::size_t begin, std::size_t end) {
    for (std::size_t r = begin; r < end; ++r) {
      const auto row = w.row(r);
      float acc = 0.0f;
      for (std::size_t c = 0; c < row.size(); ++c) acc += row[c] * x[c];
      y[r] = acc;
    }
  }, kRowsPerTask);
}

std::vector<float> gemv_reference(const MatrixF& w, std::span<const float> x) {
  std::vector<float> y(w.rows());
  gemv_reference(w, x, y);
  return y;
}

namespace {

template <int Pos>
void fused_rows(const PackedExpertPair& packed, std::span<const float> x, std::span<float> y,
                std::size_t begin, std::size_t end) {
  // Decoded weights live only in this register-sized tile.
  alignas(64) float tile[kTile];
  for (std::size_t r = begin; r < end; ++r) {
    const auto row = packed.words.row(r);
    float acc = 0.0f;
    for (std::size_t base = 0; base < row.size(); base += kTile) {
      const std::size_t n = std::min(kTile, row.size() - base);
      for (std::size_t k = 0; k < n; ++k) {
        tile[k] = bf16_bits_to_float(decode_word_bits(row[base + k], Pos));
      }
      for (std::size_t k = 0; k < n; ++k) acc += tile[k] * x[base + k];
    }
    y[r] = acc;
  }
}

}  // namespace

void gemv_fused(const PackedExpertPair& packed, ExpertPos pos, std::span<const float> x,
                std::span<float> y) {
  check_dims(packed.rows(), packed.cols(), x, y, "gemv_fused");
  parallel_for(packed.rows(), [&](std::size_t begin, std::size_t end) {
    if (pos == ExpertPos::first) {
      fused_rows<0>(packed, x, y, begin, end);
    } else {
      fused_rows<1>(packed, x, y, begin, end);
    }
  }, kRowsPerTask);
}

std::vector<float> gemv_fused(const PackedExpertPair& packed, ExpertPos pos,
                              std::span<const float> x) {
  std::vector<float> y(packed.rows());
  gemv_fused(packed, pos, x, y);
  return y;
}

void gemv_bf16(const Matrix<std::uint16_t>& w, std::span<const float> x, std::span<float> y) {
  check_dims(w.rows(), w.cols(), x, y, "gemv_bf16");
  parallel_for(w.rows(), [&](std::size_t begin, std::size_t end) {
    for (std::size_t r = begin; r < end; ++r) {
      const auto row = w.row(r);
      float acc = 0.0f;
      for (std::size_t c = 0; c < row.size(); ++c) acc += bf16_bits_to_float(row[c]) * x[c];
      y[r] = acc;
    }
  }, kRowsPerTask);
}

namespace {

void decode_into(const PackedExpertPair& packed, ExpertPos pos, Matrix<std::uint16_t>& out) {
  const auto src = packed.words.flat();
  auto dst = out.flat();
  const int p = static_cast<int>(pos);
  for (std::size_t k = 0; k < src.size(); ++k) dst[k] = decode_word_bits(src[k], p);
}

}  // namespace

std::vector<float> gemv_decode_then_dense(const PackedExpertPair& packed, ExpertPos pos,
                                          std::span<const float> x) {
  Matrix<std::uint16_t> decoded(packed.rows(), packed.cols());
  decode_into(packed, pos, decoded);
  std::vector<float> y(packed.rows());
  gemv_bf16(decoded, x, y);
  return y;
}

BenchReport bench_gemv(std::size_t rows, std::size_t cols, int iters, std::uint64_t seed) {
  if (rows == 0 || cols == 0 || iters < 1) {
    throw InvalidArgument("bench_gemv needs rows, cols, iters >= 1");
  }
  Rng rng(seed);
  std::normal_distribution<float> normal(0.0f, 0.02f);
  std::uniform_int_distribution<int> coin(0, 1);

  PackedExpertPair packed{Matrix<std::uint16_t>(rows, cols), {0, 1}};
  for (auto& word : packed.words.flat()) {
    const Bf16 mag = shift_exponent(Bf16::from_float(std::fabs(normal(rng))));
    const unsigned m0 = coin(rng);
    const unsigned m1 = m0 ? coin(rng) : 1u;
    word = pack_word(mag, coin(rng), coin(rng), m0, m1).bits;
  }
  std::vector<float> x(cols);
  for (auto& v : x) v = normal(rng) * 50.0f;

  Matrix<std::uint16_t> dense(rows, cols);
  decode_into(packed, ExpertPos::first, dense);
  Matrix<std::uint16_t> scratch(rows, cols);
  std::vector<float> y(rows);

  using Clock = std::chrono::steady_clock;
  auto median_ns = [&](auto&& call) {
    std::vector<double> samples;
    samples.reserve(static_cast<std::size_t>(iters));
    for (int i = 0; i < iters; ++i) {
      const auto t0 = Clock::now();
      call();
      const auto t1 = Clock::now();
      samples.push_back(std::chrono::duration<double, std::nano>(t1 - t0).count());
    }
    std::nth_element(samples.begin(), samples.begin() + samples.size() / 2, samples.end());
    return std::max(samples[samples.size() / 2], 1.0);
  };

  BenchReport report;
  report.rows = rows;
  report.cols = cols;
  report.iters = iters;
  report.seed = seed;
  report.fused_ns_per_call = median_ns([&] { gemv_fused(packed, ExpertPos::first, x, y); });
  report.reference_ns_per_call = median_ns([&] { gemv_bf16(dense, x, y); });
  report.decode_then_dense_ns_per_call = median_ns([&] {
    decode_into(packed, ExpertPos::first, scratch);
    gemv_bf16(scratch, x, y);
  });

  const std::uint64_t weights = static_cast<std::uint64_t>(rows) * cols;
  report.fused_bytes_per_call = 2 * weights;
  report.reference_bytes_per_call = 2 * weights;
  // read packed, write decoded, read decoded again
  report.decode_then_dense_bytes_per_call = 6 * weights;
  report.low_confidence = iters < 3;
  return report;
}

}  // namespace pairmerge
