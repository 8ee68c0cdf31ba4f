// Copyright 2026 The pairmerge Authors
// SPDX-License-Identifier: Apache-2.0

#include "pairmerge/grouping.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <string>

#include "pairmerge/merge.hpp"
#include "pairmerge/rng.hpp"

namespace pairmerge {

int pair_count(int n_experts, double ratio) {
  if (n_experts < 2) {
    throw RatioOutOfRange("pairing needs at least 2 experts, got " + std::to_string(n_experts));
  }
  if (!(ratio >= 0.0 && ratio <= 0.5)) {
    throw RatioOutOfRange("ratio must lie in [0, 0.5], got " + std::to_string(ratio));
  }
  const int p = static_cast<int>(std::floor(ratio * n_experts + 0.5));
  if (2 * p > n_experts) {
    throw RatioOutOfRange(std::to_string(p) + " pairs do not fit in " +
                          std::to_string(n_experts) + " experts");
  }
  return p;
}

namespace {

LayerPairing from_permutation(const std::vector<int>& perm, int pairs) {
  LayerPairing out;
  for (int k = 0; k < pairs; ++k) {
    const int a = perm[2 * k];
    const int b = perm[2 * k + 1];
    out.pairs.emplace_back(std::min(a, b), std::max(a, b));
  }
  out.untouched.assign(perm.begin() + 2 * pairs, perm.end());
  std::sort(out.pairs.begin(), out.pairs.end());
  std::sort(out.untouched.begin(), out.untouched.end());
  return out;
}

std::vector<int> shuffled(int n, Rng& rng) {
  std::vector<int> perm(static_cast<std::size_t>(n));
  std::iota(perm.begin(), perm.end(), 0);
  for (std::size_t i = perm.size(); i > 1; --i) {
    std::swap(perm[i - 1], perm[uniform_below(rng, i)]);
  }
  return perm;
}

double relative_error(const MatrixF& approx, const MatrixF& exact) {
  double num = 0.0;
  double den = 0.0;
  for (std::size_t k = 0; k < exact.size(); ++k) {
    const double d = static_cast<double>(approx[k]) - exact[k];
    num += d * d;
    den += static_cast<double>(exact[k]) * exact[k];
  }
  if (den == 0.0) return num == 0.0 ? 0.0 : num;
  return num / den;
}

class PairCostCache {
 public:
  PairCostCache(std::span<const DenseExpert> experts, const CalibrationStats& stats, int layer,
                float tau)
      : experts_(experts), stats_(stats), layer_(layer), tau_(tau) {}

  double cost(int a, int b) {
    if (a > b) std::swap(a, b);
    const auto key = std::make_pair(a, b);
    if (auto it = cache_.find(key); it != cache_.end()) return it->second;
    double total = 0.0;
    for (Slot s : kSlots) {
      const MatrixF& wa = experts_[a][s].values;
      const MatrixF& wb = experts_[b][s].values;
      const MergeArtifacts m = merge_experts(wa, wb, stats_.norm(layer_, a, s),
                                             stats_.norm(layer_, b, s), tau_);
      total += relative_error(reconstruct(m, ExpertPos::first), wa);
      total += relative_error(reconstruct(m, ExpertPos::second), wb);
    }
    cache_.emplace(key, total);
    return total;
  }

  double objective(const LayerPairing& p) {
    double sum = 0.0;
    for (const auto& [a, b] : p.pairs) sum += cost(a, b);
    return sum;
  }

 private:
  std::span<const DenseExpert> experts_;
  const CalibrationStats& stats_;
  int layer_;
  float tau_;
  std::map<std::pair<int, int>, double> cache_;
};

}  // namespace

std::uint64_t layer_seed(std::uint64_t seed, int layer) {
  return mix_seed(seed, static_cast<std::uint64_t>(layer));
}

LayerPairing group_random(int n_experts, double ratio, std::uint64_t seed) {
  const int pairs = pair_count(n_experts, ratio);
  Rng rng(seed);
  return from_permutation(shuffled(n_experts, rng), pairs);
}

double pairing_objective(const LayerPairing& pairing, std::span<const DenseExpert> experts,
                         const CalibrationStats& stats, int layer, float tau) {
  PairCostCache cache(experts, stats, layer, tau);
  return cache.objective(pairing);
}

SearchResult group_search(int n_experts, double ratio, std::span<const DenseExpert> experts,
                          const CalibrationStats& stats, int layer, float tau, int budget,
                          std::uint64_t seed) {
  if (budget < 1) throw InvalidArgument("search budget must be >= 1");
  const int pairs = pair_count(n_experts, ratio);
  if (experts.size() != static_cast<std::size_t>(n_experts)) {
    throw InvalidArgument("group_search: expert list has " + std::to_string(experts.size()) +
                          " entries, expected " + std::to_string(n_experts));
  }
  PairCostCache cache(experts, stats, layer, tau);

  Rng restart_rng(seed);
  Rng move_rng(mix_seed(seed, 0xC0FFEE));

  // Current candidate as a permutation: slots [0, 2p) hold the pairs.
  std::vector<int> current = shuffled(n_experts, restart_rng);
  double current_obj = cache.objective(from_permutation(current, pairs));
  SearchResult best{from_permutation(current, pairs), current_obj, 1};

  constexpr int kMovesPerRestart = 16;
  int stale = 0;
  const auto n = static_cast<std::uint64_t>(n_experts);
  while (best.evaluations < budget && pairs > 0) {
    const bool restart = stale >= kMovesPerRestart || n < 3;
    std::vector<int> candidate;
    if (restart) {
      candidate = shuffled(n_experts, restart_rng);
    } else {
      // Swap a pair member with any position outside its own pair.
      candidate = current;
      const auto i = uniform_below(move_rng, static_cast<std::uint64_t>(2 * pairs));
      const auto partner_base = i - i % 2;
      auto j = uniform_below(move_rng, n - 2);
      if (j >= partner_base) j += 2;
      std::swap(candidate[i], candidate[j]);
    }
    const LayerPairing plan = from_permutation(candidate, pairs);
    const double obj = cache.objective(plan);
    ++best.evaluations;
    if (restart || obj < current_obj) {
      current = std::move(candidate);
      current_obj = obj;
      stale = 0;
    } else {
      ++stale;
    }
    if (obj < best.objective) {
      best.pairing = plan;
      best.objective = obj;
    }
  }
  return best;
}

void to_json(nlohmann::json& j, const LayerPairing& p) {
  nlohmann::json pairs = nlohmann::json::array();
  for (const auto& [a, b] : p.pairs) pairs.push_back({a, b});
  j = nlohmann::json{{"pairs", pairs}, {"untouched", p.untouched}};
}

void from_json(const nlohmann::json& j, LayerPairing& p) {
  p.pairs.clear();
  for (const auto& pr : j.at("pairs")) p.pairs.emplace_back(pr.at(0).get<int>(), pr.at(1).get<int>());
  p.untouched = j.at("untouched").get<std::vector<int>>();
}

void to_json(nlohmann::json& j, const PairingPlan& p) {
  j = nlohmann::json{{"layers", p.layers}, {"ratio", p.ratio}, {"seed", p.seed},
                     {"strategy", p.strategy}};
}

void from_json(const nlohmann::json& j, PairingPlan& p) {
  p.layers = j.at("layers").get<std::vector<LayerPairing>>();
  p.ratio = j.at("ratio").get<double>();
  p.seed = j.at("seed").get<std::uint64_t>();
  p.strategy = j.value("strategy", std::string("random"));
}

}  // namespace pairmerge
