// Copyright 2026 The pairmerge Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <span>
#include <variant>
#include <vector>

#include "pairmerge/bitcodec.hpp"
#include "pairmerge/matrix.hpp"
#include "pairmerge/merge.hpp"

namespace pairmerge {

struct ToyMoEConfig {
  int n_layers = 4;
  int n_experts = 8;
  int top_k = 2;
  int d_model = 64;
  int d_ff = 128;
  std::uint64_t seed = 0;

  // Throws InvalidArgument naming the offending field.
  void validate() const;
  friend bool operator==(const ToyMoEConfig&, const ToyMoEConfig&) = default;
};

// SwiGLU linear slots: w1 gate (d_ff x d_model), w2 down (d_model x d_ff),
// w3 up (d_ff x d_model).
enum class Slot : int { w1 = 0, w2 = 1, w3 = 2 };
inline constexpr std::array<Slot, 3> kSlots{Slot::w1, Slot::w2, Slot::w3};
const char* slot_name(Slot s);

struct DenseExpert {
  std::array<ExpertTensor, 3> w;
  const ExpertTensor& operator[](Slot s) const { return w[static_cast<int>(s)]; }
  ExpertTensor& operator[](Slot s) { return w[static_cast<int>(s)]; }
  friend bool operator==(const DenseExpert&, const DenseExpert&) = default;
};

// The three slots of one merged expert pair. experts[0] sits at
// ExpertPos::first, experts[1] at ExpertPos::second.
struct PackedExpertSet {
  std::array<PackedExpertPair, 3> w;
  std::array<int, 2> experts{0, 1};
  const PackedExpertPair& operator[](Slot s) const { return w[static_cast<int>(s)]; }
  friend bool operator==(const PackedExpertSet&, const PackedExpertSet&) = default;
};

struct PackedRef {
  int pair = 0;
  ExpertPos pos = ExpertPos::first;
  friend bool operator==(const PackedRef&, const PackedRef&) = default;
};

using ExpertSlot = std::variant<DenseExpert, PackedRef>;

struct MoELayer {
  MatrixF router;  // n_experts x d_model, never packed
  std::vector<ExpertSlot> experts;
  std::vector<PackedExpertSet> pairs;
};

struct ToyMoEModel {
  ToyMoEConfig config;
  std::vector<MoELayer> layers;

  // Checks shapes and that every packed reference resolves.
  void validate() const;
};

ToyMoEModel generate_toy(const ToyMoEConfig& config, bool duplicate_pairs = false,
                         double noise = 0.0);

struct Routing {
  std::vector<int> experts;    // top_k indices, descending logit
  std::vector<float> weights;  // softmax renormalized over the selection
};

Routing route(const MoELayer& layer, int top_k, std::span<const float> hidden);

// One SwiGLU expert. If `intermediate` is non-empty it receives
// silu(W1 h) * (W3 h) (length d_ff).
void expert_forward(const MoELayer& layer, int expert, std::span<const float> hidden,
                    std::span<float> out, std::span<float> intermediate = {});

// Called for every (token, selected expert) during a forward pass with the
// expert's input and intermediate activation.
using ForwardObserver = std::function<void(int layer, int expert, std::span<const float> input,
                                           std::span<const float> intermediate)>;

// Residual MoE stack: h <- h + sum_k weight_k * expert_k(h) per layer.
// Token-parallel unless an observer is supplied.
MatrixF forward(const ToyMoEModel& model, const MatrixF& x, const ForwardObserver& observer = {});

struct Deviation {
  double mean_rel_l2 = 0.0;
  double max_rel_l2 = 0.0;
};

// Per-token ||y_c - y_o|| / (||y_o|| + 1e-12). Throws ConfigMismatch.
Deviation eval_deviation(const ToyMoEModel& original, const ToyMoEModel& compressed,
                         const MatrixF& inputs);

// Replaces every packed reference by its dense bf16 reconstruction.
ToyMoEModel unpack_model(const ToyMoEModel& model);

// Dense view of one expert; decodes packed storage if needed.
DenseExpert materialize_expert(const MoELayer& layer, int expert);

// Standard normal T x width matrix.
MatrixF gaussian_inputs(std::size_t tokens, std::size_t width, std::uint64_t seed);

}  // namespace pairmerge
