// Copyright 2026 The pairmerge Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "pairmerge/toy_moe.hpp"

namespace pairmerge {

// Per (layer, expert, slot) L2 norms of the activations feeding that linear,
// one entry per input feature. w1 and w3 share the expert input norms; w2
// holds the intermediate-activation norms.
struct CalibrationStats {
  std::vector<std::vector<std::array<std::vector<float>, 3>>> norms;
  std::vector<std::vector<std::uint64_t>> token_counts;  // [layer][expert]

  std::span<const float> norm(int layer, int expert, Slot slot) const {
    return norms.at(layer).at(expert)[static_cast<int>(slot)];
  }
  std::size_t n_layers() const { return norms.size(); }

  friend bool operator==(const CalibrationStats&, const CalibrationStats&) = default;
};

// Runs the inputs through the model with its own routing and accumulates
// sqrt(sum_t x_t[c]^2) over the tokens each expert receives. Experts that
// receive no tokens get all-ones norms. Throws DimensionMismatch.
CalibrationStats collect_norms(const ToyMoEModel& model, const MatrixF& inputs);

// All-ones stats for a model (magnitude-only saliency).
CalibrationStats uniform_norms(const ToyMoEConfig& config);

}  // namespace pairmerge
