// Copyright 2026 The pairmerge Authors
// SPDX-License-Identifier: Apache-2.0

#include "pairmerge/calibration.hpp"

#include <cmath>
#include <string>

namespace pairmerge {

namespace {

std::array<std::vector<float>, 3> ones(const ToyMoEConfig& c) {
  const auto d_model = static_cast<std::size_t>(c.d_model);
  const auto d_ff = static_cast<std::size_t>(c.d_ff);
  return {std::vector<float>(d_model, 1.0f), std::vector<float>(d_ff, 1.0f),
          std::vector<float>(d_model, 1.0f)};
}

}  // namespace

CalibrationStats uniform_norms(const ToyMoEConfig& config) {
  CalibrationStats stats;
  const auto layers = static_cast<std::size_t>(config.n_layers);
  const auto experts = static_cast<std::size_t>(config.n_experts);
  stats.norms.assign(layers, std::vector<std::array<std::vector<float>, 3>>(experts, ones(config)));
  stats.token_counts.assign(layers, std::vector<std::uint64_t>(experts, 0));
  return stats;
}

CalibrationStats collect_norms(const ToyMoEModel& model, const MatrixF& inputs) {
  const ToyMoEConfig& c = model.config;
  if (inputs.rows() < 1) throw DimensionMismatch("collect_norms needs at least one token");
  if (inputs.cols() != static_cast<std::size_t>(c.d_model)) {
    throw DimensionMismatch("calibration width " + std::to_string(inputs.cols()) +
                            " != d_model " + std::to_string(c.d_model));
  }
  const auto layers = static_cast<std::size_t>(c.n_layers);
  const auto experts = static_cast<std::size_t>(c.n_experts);

  // Sums of squares in f64: [layer][expert] -> input, intermediate.
  struct Accum {
    std::vector<double> input;
    std::vector<double> inter;
  };
  std::vector<std::vector<Accum>> sq(
      layers, std::vector<Accum>(experts, Accum{std::vector<double>(c.d_model, 0.0),
                                                std::vector<double>(c.d_ff, 0.0)}));
  CalibrationStats stats = uniform_norms(c);

  forward(model, inputs,
          [&](int layer, int expert, std::span<const float> input,
              std::span<const float> intermediate) {
            Accum& a = sq[layer][expert];
            for (std::size_t k = 0; k < input.size(); ++k) {
              a.input[k] += static_cast<double>(input[k]) * input[k];
            }
            for (std::size_t k = 0; k < intermediate.size(); ++k) {
              a.inter[k] += static_cast<double>(intermediate[k]) * intermediate[k];
            }
            ++stats.token_counts[layer][expert];
          });

  for (std::size_t l = 0; l < layers; ++l) {
    for (std::size_t e = 0; e < experts; ++e) {
      if (stats.token_counts[l][e] == 0) continue;
      auto& out = stats.norms[l][e];
      const Accum& a = sq[l][e];
      for (std::size_t k = 0; k < a.input.size(); ++k) {
        const auto v = static_cast<float>(std::sqrt(a.input[k]));
        out[static_cast<int>(Slot::w1)][k] = v;
        out[static_cast<int>(Slot::w3)][k] = v;
      }
      for (std::size_t k = 0; k < a.inter.size(); ++k) {
        out[static_cast<int>(Slot::w2)][k] = static_cast<float>(std::sqrt(a.inter[k]));
      }
    }
  }
  return stats;
}

}  // namespace pairmerge
