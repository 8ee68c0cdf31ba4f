// Copyright 2026 The pairmerge Authors
// SPDX-License-Identifier: Apache-2.0

#include "pairmerge/toy_moe.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <string>

#include "pairmerge/bf16.hpp"
#include "pairmerge/gemv.hpp"
#include "pairmerge/parallel.hpp"
#include "pairmerge/rng.hpp"

namespace pairmerge {

void ToyMoEConfig::validate() const {
  auto need = [](bool ok, const char* field, const std::string& why) {
    if (!ok) throw InvalidArgument(std::string(field) + ": " + why);
  };
  need(n_layers >= 1, "layers", "must be >= 1");
  need(n_experts >= 1, "experts", "must be >= 1");
  need(top_k >= 1, "top_k", "must be >= 1");
  need(top_k <= n_experts, "top_k", "must not exceed experts");
  need(d_model >= 1, "d_model", "must be >= 1");
  need(d_ff >= 1, "d_ff", "must be >= 1");
}

const char* slot_name(Slot s) {
  switch (s) {
    case Slot::w1: return "w1";
    case Slot::w2: return "w2";
    case Slot::w3: return "w3";
  }
  return "?";
}

namespace {

std::size_t slot_rows(const ToyMoEConfig& c, Slot s) {
  return static_cast<std::size_t>(s == Slot::w2 ? c.d_model : c.d_ff);
}
std::size_t slot_cols(const ToyMoEConfig& c, Slot s) {
  return static_cast<std::size_t>(s == Slot::w2 ? c.d_ff : c.d_model);
}

MatrixF gaussian(std::size_t rows, std::size_t cols, float stddev, Rng& rng, bool to_bf16) {
  std::normal_distribution<float> normal(0.0f, stddev);
  MatrixF m(rows, cols);
  for (auto& v : m.flat()) v = to_bf16 ? round_to_bf16(normal(rng)) : normal(rng);
  return m;
}

float silu(float v) { return v / (1.0f + std::exp(-v)); }

}  // namespace

void ToyMoEModel::validate() const {
  config.validate();
  if (layers.size() != static_cast<std::size_t>(config.n_layers)) {
    throw ConfigMismatch("model has " + std::to_string(layers.size()) + " layers, config says " +
                         std::to_string(config.n_layers));
  }
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const MoELayer& layer = layers[l];
    const std::string where = "layer " + std::to_string(l);
    if (layer.router.rows() != static_cast<std::size_t>(config.n_experts) ||
        layer.router.cols() != static_cast<std::size_t>(config.d_model)) {
      throw ShapeMismatch(where + ": router shape");
    }
    if (layer.experts.size() != static_cast<std::size_t>(config.n_experts)) {
      throw ConfigMismatch(where + ": expert count");
    }
    for (const auto& set : layer.pairs) {
      for (Slot s : kSlots) {
        if (set[s].rows() != slot_rows(config, s) || set[s].cols() != slot_cols(config, s)) {
          throw ShapeMismatch(where + ": packed pair slot " + slot_name(s));
        }
      }
    }
    for (std::size_t e = 0; e < layer.experts.size(); ++e) {
      if (const auto* ref = std::get_if<PackedRef>(&layer.experts[e])) {
        if (ref->pair < 0 || static_cast<std::size_t>(ref->pair) >= layer.pairs.size()) {
          throw ConfigMismatch(where + ": expert " + std::to_string(e) + " refers to missing pair");
        }
        const auto& members = layer.pairs[ref->pair].experts;
        if (members[static_cast<int>(ref->pos)] != static_cast<int>(e)) {
          throw ConfigMismatch(where + ": expert " + std::to_string(e) +
                               " not recorded at its pair position");
        }
      } else {
        const auto& dense = std::get<DenseExpert>(layer.experts[e]);
        for (Slot s : kSlots) {
          if (dense[s].rows() != slot_rows(config, s) || dense[s].cols() != slot_cols(config, s)) {
            throw ShapeMismatch(where + ": expert " + std::to_string(e) + " slot " + slot_name(s));
          }
        }
      }
    }
  }
}

ToyMoEModel generate_toy(const ToyMoEConfig& config, bool duplicate_pairs, double noise) {
  config.validate();
  if (!(noise >= 0.0)) throw InvalidArgument("noise must be >= 0");
  Rng rng(config.seed);
  const float std_in = 1.0f / std::sqrt(static_cast<float>(config.d_model));
  const float std_ff = 1.0f / std::sqrt(static_cast<float>(config.d_ff));

  ToyMoEModel model{config, {}};
  model.layers.resize(static_cast<std::size_t>(config.n_layers));
  for (auto& layer : model.layers) {
    layer.router = gaussian(config.n_experts, config.d_model, std_in, rng, false);
    for (int e = 0; e < config.n_experts; ++e) {
      const bool twin = duplicate_pairs && e % 2 == 1;
      DenseExpert expert;
      for (Slot s : kSlots) {
        const float stddev = s == Slot::w2 ? std_ff : std_in;
        MatrixF w;
        if (twin) {
          const auto& base = std::get<DenseExpert>(layer.experts.back())[s].values;
          w = base;
          if (noise > 0.0) {
            std::normal_distribution<float> normal(0.0f, static_cast<float>(noise) * stddev);
            for (auto& v : w.flat()) v = round_to_bf16(v + normal(rng));
          }
        } else {
          w = gaussian(slot_rows(config, s), slot_cols(config, s), stddev, rng, true);
        }
        expert[s] = ExpertTensor{std::move(w), DType::bf16};
      }
      layer.experts.emplace_back(std::move(expert));
    }
  }
  return model;
}

Routing route(const MoELayer& layer, int top_k, std::span<const float> hidden) {
  const std::vector<float> logits = gemv_reference(layer.router, hidden);
  std::vector<int> order(logits.size());
  std::iota(order.begin(), order.end(), 0);
  std::partial_sort(order.begin(), order.begin() + top_k, order.end(), [&](int a, int b) {
    return logits[a] > logits[b] || (logits[a] == logits[b] && a < b);
  });
  Routing r;
  r.experts.assign(order.begin(), order.begin() + top_k);
  const float top = logits[r.experts.front()];
  float denom = 0.0f;
  for (int e : r.experts) {
    const float w = std::exp(logits[e] - top);
    r.weights.push_back(w);
    denom += w;
  }
  for (auto& w : r.weights) w /= denom;
  return r;
}

void expert_forward(const MoELayer& layer, int expert, std::span<const float> hidden,
                    std::span<float> out, std::span<float> intermediate) {
  const ExpertSlot& slot = layer.experts.at(static_cast<std::size_t>(expert));
  std::vector<float> gate;
  std::vector<float> up;
  std::vector<float> act;
  auto finish_act = [&] {
    act.resize(gate.size());
    for (std::size_t k = 0; k < gate.size(); ++k) act[k] = silu(gate[k]) * up[k];
    if (!intermediate.empty()) std::copy(act.begin(), act.end(), intermediate.begin());
  };
  if (const auto* dense = std::get_if<DenseExpert>(&slot)) {
    gate = gemv_reference((*dense)[Slot::w1].values, hidden);
    up = gemv_reference((*dense)[Slot::w3].values, hidden);
    finish_act();
    gemv_reference((*dense)[Slot::w2].values, act, out);
  } else {
    const auto& ref = std::get<PackedRef>(slot);
    const PackedExpertSet& set = layer.pairs.at(static_cast<std::size_t>(ref.pair));
    gate = gemv_fused(set[Slot::w1], ref.pos, hidden);
    up = gemv_fused(set[Slot::w3], ref.pos, hidden);
    finish_act();
    gemv_fused(set[Slot::w2], ref.pos, act, out);
  }
}

namespace {

void forward_token(const ToyMoEModel& model, std::span<float> h, const ForwardObserver& observer) {
  const auto d_model = static_cast<std::size_t>(model.config.d_model);
  std::vector<float> acc(d_model);
  std::vector<float> out(d_model);
  std::vector<float> inter(static_cast<std::size_t>(model.config.d_ff));
  for (std::size_t l = 0; l < model.layers.size(); ++l) {
    const MoELayer& layer = model.layers[l];
    const Routing r = route(layer, model.config.top_k, h);
    std::fill(acc.begin(), acc.end(), 0.0f);
    for (std::size_t k = 0; k < r.experts.size(); ++k) {
      expert_forward(layer, r.experts[k], h, out, inter);
      if (observer) observer(static_cast<int>(l), r.experts[k], h, inter);
      for (std::size_t d = 0; d < d_model; ++d) acc[d] += r.weights[k] * out[d];
    }
    for (std::size_t d = 0; d < d_model; ++d) h[d] += acc[d];
  }
}

}  // namespace

MatrixF forward(const ToyMoEModel& model, const MatrixF& x, const ForwardObserver& observer) {
  if (x.cols() != static_cast<std::size_t>(model.config.d_model)) {
    throw DimensionMismatch("input width " + std::to_string(x.cols()) + " != d_model " +
                            std::to_string(model.config.d_model));
  }
  MatrixF h = x;
  if (observer) {
    for (std::size_t t = 0; t < h.rows(); ++t) forward_token(model, h.row(t), observer);
  } else {
    parallel_for(h.rows(), [&](std::size_t begin, std::size_t end) {
      for (std::size_t t = begin; t < end; ++t) forward_token(model, h.row(t), observer);
    });
  }
  return h;
}

Deviation eval_deviation(const ToyMoEModel& original, const ToyMoEModel& compressed,
                         const MatrixF& inputs) {
  if (!(original.config == compressed.config)) {
    throw ConfigMismatch("eval_deviation: models have different configs");
  }
  const MatrixF yo = forward(original, inputs);
  const MatrixF yc = forward(compressed, inputs);
  Deviation d;
  if (inputs.rows() == 0) return d;
  double sum = 0.0;
  for (std::size_t t = 0; t < inputs.rows(); ++t) {
    double diff = 0.0;
    double ref = 0.0;
    const auto ro = yo.row(t);
    const auto rc = yc.row(t);
    for (std::size_t k = 0; k < ro.size(); ++k) {
      const double delta = static_cast<double>(rc[k]) - static_cast<double>(ro[k]);
      diff += delta * delta;
      ref += static_cast<double>(ro[k]) * ro[k];
    }
    const double rel = std::sqrt(diff) / (std::sqrt(ref) + 1e-12);
    sum += rel;
    d.max_rel_l2 = std::max(d.max_rel_l2, rel);
  }
  d.mean_rel_l2 = sum / static_cast<double>(inputs.rows());
  return d;
}

DenseExpert materialize_expert(const MoELayer& layer, int expert) {
  const ExpertSlot& slot = layer.experts.at(static_cast<std::size_t>(expert));
  if (const auto* dense = std::get_if<DenseExpert>(&slot)) return *dense;
  const auto& ref = std::get<PackedRef>(slot);
  const PackedExpertSet& set = layer.pairs.at(static_cast<std::size_t>(ref.pair));
  DenseExpert out;
  for (Slot s : kSlots) out[s] = unpack_pair(set[s], ref.pos);
  return out;
}

ToyMoEModel unpack_model(const ToyMoEModel& model) {
  ToyMoEModel out{model.config, {}};
  for (const auto& layer : model.layers) {
    MoELayer dense{layer.router, {}, {}};
    for (std::size_t e = 0; e < layer.experts.size(); ++e) {
      dense.experts.emplace_back(materialize_expert(layer, static_cast<int>(e)));
    }
    out.layers.push_back(std::move(dense));
  }
  return out;
}

MatrixF gaussian_inputs(std::size_t tokens, std::size_t width, std::uint64_t seed) {
  Rng rng(seed);
  return gaussian(tokens, width, 1.0f, rng, false);
}

}  // namespace pairmerge
