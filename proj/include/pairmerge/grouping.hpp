// Copyright 2026 The pairmerge Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "pairmerge/calibration.hpp"
#include "pairmerge/toy_moe.hpp"

namespace pairmerge {

struct LayerPairing {
  std::vector<std::pair<int, int>> pairs;  // each (a, b) with a < b, sorted by a
  std::vector<int> untouched;              // ascending

  friend bool operator==(const LayerPairing&, const LayerPairing&) = default;
};

struct PairingPlan {
  std::vector<LayerPairing> layers;
  double ratio = 0.0;
  std::uint64_t seed = 0;
  std::string strategy = "random";

  friend bool operator==(const PairingPlan&, const PairingPlan&) = default;
};

// round(ratio * n) with ties rounding up. Throws RatioOutOfRange unless
// 0 <= ratio <= 0.5 and the pairs fit.
int pair_count(int n_experts, double ratio);

LayerPairing group_random(int n_experts, double ratio, std::uint64_t seed);

struct SearchResult {
  LayerPairing pairing;
  double objective = 0.0;
  int evaluations = 0;
};

// Sum over pairs, slots and both experts of ||W_hat - W||_F^2 / ||W||_F^2.
double pairing_objective(const LayerPairing& pairing, std::span<const DenseExpert> experts,
                         const CalibrationStats& stats, int layer, float tau);

// Local search over pairings: the first candidate is group_random(seed); the
// remaining budget alternates pair-swap moves with random restarts. Returns
// the best plan seen.
SearchResult group_search(int n_experts, double ratio, std::span<const DenseExpert> experts,
                          const CalibrationStats& stats, int layer, float tau, int budget,
                          std::uint64_t seed);

// Seed used for layer `layer` of a plan built from `seed`.
std::uint64_t layer_seed(std::uint64_t seed, int layer);

void to_json(nlohmann::json& j, const LayerPairing& p);
void from_json(const nlohmann::json& j, LayerPairing& p);
void to_json(nlohmann::json& j, const PairingPlan& p);
void from_json(const nlohmann::json& j, PairingPlan& p);

}  // namespace pairmerge
