// Copyright 2026 The pairmerge Authors
// SPDX-License-Identifier: Apache-2.0

#include "pairmerge/analysis.hpp"

#include <cmath>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "pairmerge/bf16.hpp"
#include "pairmerge/bitcodec.hpp"
#include "pairmerge/merge.hpp"
#include "pairmerge/parallel.hpp"
#include "pairmerge/rng.hpp"

namespace pairmerge {

double ExponentHistogram::fraction_in_range() const {
  if (total == 0) return 0.0;
  std::uint64_t in = 0;
  for (unsigned e = kExponentFloor; e <= kExponentCeil; ++e) in += counts[e];
  return static_cast<double>(in) / static_cast<double>(total);
}

void ExponentHistogram::add(const MatrixF& values) {
  for (float v : values.flat()) ++counts[Bf16::from_float(v).exponent()];
  total += values.size();
}

void ExponentHistogram::merge(const ExponentHistogram& other) {
  for (std::size_t e = 0; e < counts.size(); ++e) counts[e] += other.counts[e];
  total += other.total;
}

ExponentHistogram exponent_histogram(const MatrixF& values) {
  ExponentHistogram h;
  h.add(values);
  return h;
}

double pearson_pairwise(const MatrixF& a, const MatrixF& b) {
  require_same_shape(a, b, "pearson_pairwise");
  const std::size_t n = a.size();
  if (n < 2) throw DegenerateVariance("pearson needs at least 2 entries");
  double mean_a = 0.0;
  double mean_b = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    mean_a += a[k];
    mean_b += b[k];
  }
  mean_a /= static_cast<double>(n);
  mean_b /= static_cast<double>(n);
  double cov = 0.0;
  double var_a = 0.0;
  double var_b = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    const double da = a[k] - mean_a;
    const double db = b[k] - mean_b;
    cov += da * db;
    var_a += da * da;
    var_b += db * db;
  }
  if (var_a == 0.0 || var_b == 0.0) throw DegenerateVariance("pearson input has zero variance");
  return std::clamp(cov / std::sqrt(var_a * var_b), -1.0, 1.0);
}

double similarity_fraction_closed(double sigma_ratio, double tau) {
  if (!(sigma_ratio > 0.0) || !std::isfinite(sigma_ratio)) {
    throw DomainError("sigma_ratio must be positive and finite");
  }
  if (!(tau >= 0.0 && tau < 1.0)) throw DomainError("tau must lie in [0, 1)");
  const double hi = (1.0 + tau) / (1.0 - tau);
  const double lo = (1.0 - tau) / (1.0 + tau);
  return 2.0 / std::numbers::pi * (std::atan(sigma_ratio * hi) - std::atan(sigma_ratio * lo));
}

double similarity_fraction_mc(double sigma1, double sigma2, double tau, std::uint64_t n_samples,
                              std::uint64_t seed) {
  if (!(sigma1 > 0.0) || !(sigma2 > 0.0)) throw DomainError("sigmas must be positive");
  if (n_samples < 1) throw DomainError("n_samples must be >= 1");
  constexpr std::uint64_t kShards = 16;
  std::vector<std::uint64_t> hits(kShards, 0);
  parallel_for(kShards, [&](std::size_t begin, std::size_t end) {
    for (std::size_t shard = begin; shard < end; ++shard) {
      const std::uint64_t lo = n_samples * shard / kShards;
      const std::uint64_t hi = n_samples * (shard + 1) / kShards;
      Rng rng(mix_seed(seed, shard));
      std::normal_distribution<double> d1(0.0, sigma1);
      std::normal_distribution<double> d2(0.0, sigma2);
      std::uint64_t count = 0;
      for (std::uint64_t s = lo; s < hi; ++s) {
        const double a = std::fabs(d1(rng));
        const double b = std::fabs(d2(rng));
        const double sum = a + b;
        if (sum > 0.0 && std::fabs(a - b) / sum < tau) ++count;
      }
      hits[shard] = count;
    }
  });
  std::uint64_t total = 0;
  for (auto h : hits) total += h;
  return static_cast<double>(total) / static_cast<double>(n_samples);
}

double measured_similarity_fraction(const MatrixF& a, const MatrixF& b, double tau) {
  const MatrixF delta = similarity_delta(a, b);
  if (delta.empty()) return 0.0;
  std::uint64_t count = 0;
  for (float d : delta.flat()) {
    if (static_cast<double>(d) <= tau) ++count;
  }
  return static_cast<double>(count) / static_cast<double>(delta.size());
}

}  // namespace pairmerge
