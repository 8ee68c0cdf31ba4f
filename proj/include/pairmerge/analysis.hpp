// Copyright 2026 The pairmerge Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstdint>

#include "pairmerge/matrix.hpp"

namespace pairmerge {

struct ExponentHistogram {
  std::array<std::uint64_t, 256> counts{};
  std::uint64_t total = 0;

  // Share of entries whose bf16 exponent lies in [112, 143].
  double fraction_in_range() const;
  void add(const MatrixF& values);
  void merge(const ExponentHistogram& other);
};

ExponentHistogram exponent_histogram(const MatrixF& values);

// Pearson coefficient over flattened entries, accumulated in f64.
// Throws ShapeMismatch, or DegenerateVariance for < 2 entries or a constant
// input.
double pearson_pairwise(const MatrixF& a, const MatrixF& b);

// Probability that two independent zero-mean Gaussians with std ratio
// sigma_ratio = sigma2/sigma1 have symmetric percent difference below tau.
// Domain: sigma_ratio > 0, 0 <= tau < 1 (the tau -> 1 limit is 1).
double similarity_fraction_closed(double sigma_ratio, double tau);

// Monte Carlo estimate of the same probability, strict inequality.
// Sharded over fixed seeded streams, so the result does not depend on the
// worker count.
double similarity_fraction_mc(double sigma1, double sigma2, double tau, std::uint64_t n_samples,
                              std::uint64_t seed);

// Fraction of entries of (a, b) whose delta is <= tau.
double measured_similarity_fraction(const MatrixF& a, const MatrixF& b, double tau);

}  // namespace pairmerge
