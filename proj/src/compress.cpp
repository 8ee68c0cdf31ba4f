// Copyright 2026 The pairmerge Authors
// SPDX-License-Identifier: Apache-2.0

#include "pairmerge/compress.hpp"

#include <chrono>
#include <string>

#include "pairmerge/bf16.hpp"
#include "pairmerge/bitcodec.hpp"
#include "pairmerge/merge.hpp"

namespace pairmerge {

namespace {

std::vector<DenseExpert> dense_experts(const MoELayer& layer) {
  std::vector<DenseExpert> out;
  out.reserve(layer.experts.size());
  for (std::size_t e = 0; e < layer.experts.size(); ++e) {
    out.push_back(materialize_expert(layer, static_cast<int>(e)));
  }
  return out;
}

void require_dense(const ToyMoEModel& model) {
  for (const auto& layer : model.layers) {
    if (!layer.pairs.empty()) throw InvalidArgument("model is already compressed");
  }
}

void require_plan_fits(const ToyMoEModel& model, const PairingPlan& plan) {
  if (plan.layers.size() != model.layers.size()) {
    throw ConfigMismatch("pairing plan has " + std::to_string(plan.layers.size()) +
                         " layers, model has " + std::to_string(model.layers.size()));
  }
}

}  // namespace

std::uint64_t expert_payload_bytes(const ToyMoEModel& model) {
  std::uint64_t bytes = 0;
  for (const auto& layer : model.layers) {
    for (const auto& slot : layer.experts) {
      if (const auto* dense = std::get_if<DenseExpert>(&slot)) {
        for (const auto& t : dense->w) bytes += t.values.size() * (t.dtype == DType::bf16 ? 2 : 4);
      }
    }
    for (const auto& set : layer.pairs) {
      for (const auto& p : set.w) bytes += p.words.size() * 2;
    }
  }
  return bytes;
}

PairingPlan plan_pairs(const ToyMoEModel& model, const CompressOptions& options,
                       const CalibrationStats& stats) {
  PairingPlan plan;
  plan.ratio = options.ratio;
  plan.seed = options.seed;
  plan.strategy = options.grouping == GroupingStrategy::random ? "random" : "search";
  const int n = model.config.n_experts;
  for (std::size_t l = 0; l < model.layers.size(); ++l) {
    const std::uint64_t seed = layer_seed(options.seed, static_cast<int>(l));
    if (options.grouping == GroupingStrategy::random) {
      plan.layers.push_back(group_random(n, options.ratio, seed));
    } else {
      const auto experts = dense_experts(model.layers[l]);
      plan.layers.push_back(group_search(n, options.ratio, experts, stats, static_cast<int>(l),
                                         options.tau, options.search_budget, seed)
                                .pairing);
    }
  }
  return plan;
}

ToyMoEModel apply_plan(const ToyMoEModel& model, const PairingPlan& plan,
                       const CalibrationStats& stats, float tau, CompressReport* report) {
  require_dense(model);
  require_plan_fits(model, plan);
  ToyMoEModel out{model.config, {}};
  SaturationCounter saturation;
  std::uint64_t merged_entries = 0;
  std::uint64_t similar_entries = 0;
  int pairs = 0;
  int untouched = 0;
  for (std::size_t l = 0; l < model.layers.size(); ++l) {
    const MoELayer& src = model.layers[l];
    MoELayer dst{src.router, src.experts, {}};
    for (const auto& [a, b] : plan.layers[l].pairs) {
      const auto& ea = std::get<DenseExpert>(src.experts.at(static_cast<std::size_t>(a)));
      const auto& eb = std::get<DenseExpert>(src.experts.at(static_cast<std::size_t>(b)));
      PackedExpertSet set;
      set.experts = {a, b};
      for (Slot s : kSlots) {
        const MergeArtifacts m =
            merge_experts(ea[s].values, eb[s].values, stats.norm(static_cast<int>(l), a, s),
                          stats.norm(static_cast<int>(l), b, s), tau);
        for (auto bit : m.masks.m_sim.flat()) similar_entries += bit;
        merged_entries += m.w_merged.size();
        set.w[static_cast<int>(s)] = pack_pair(m, &saturation, {a, b});
      }
      const int p = static_cast<int>(dst.pairs.size());
      dst.experts[static_cast<std::size_t>(a)] = PackedRef{p, ExpertPos::first};
      dst.experts[static_cast<std::size_t>(b)] = PackedRef{p, ExpertPos::second};
      dst.pairs.push_back(std::move(set));
      ++pairs;
    }
    untouched += static_cast<int>(plan.layers[l].untouched.size());
    out.layers.push_back(std::move(dst));
  }
  out.validate();
  if (report) {
    report->expert_bytes_before = expert_payload_bytes(model);
    report->expert_bytes_after = expert_payload_bytes(out);
    report->ratio_achieved = report->expert_bytes_before == 0
                                 ? 1.0
                                 : static_cast<double>(report->expert_bytes_after) /
                                       static_cast<double>(report->expert_bytes_before);
    report->saturation_count = saturation.total();
    report->sim_fraction = merged_entries == 0 ? 0.0
                                               : static_cast<double>(similar_entries) /
                                                     static_cast<double>(merged_entries);
    report->pairs = pairs;
    report->untouched = untouched;
  }
  return out;
}

CompressResult compress(const ToyMoEModel& model, const CompressOptions& options) {
  const auto t0 = std::chrono::steady_clock::now();
  require_dense(model);
  if (options.calib_tokens < 1) throw InvalidArgument("calib_tokens must be >= 1");
  CompressResult result;
  const MatrixF calib = gaussian_inputs(options.calib_tokens,
                                        static_cast<std::size_t>(model.config.d_model),
                                        options.calib_seed);
  result.stats = collect_norms(model, calib);
  result.plan = plan_pairs(model, options, result.stats);
  result.model = apply_plan(model, result.plan, result.stats, options.tau, &result.report);
  result.report.wall_time_ms =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  return result;
}

ToyMoEModel compress_naive_average(const ToyMoEModel& model, const PairingPlan& plan) {
  require_dense(model);
  require_plan_fits(model, plan);
  ToyMoEModel out = model;
  for (std::size_t l = 0; l < model.layers.size(); ++l) {
    auto& experts = out.layers[l].experts;
    for (const auto& [a, b] : plan.layers[l].pairs) {
      DenseExpert avg = std::get<DenseExpert>(experts.at(static_cast<std::size_t>(a)));
      const auto& other = std::get<DenseExpert>(experts.at(static_cast<std::size_t>(b)));
      for (Slot s : kSlots) {
        auto& dst = avg[s].values;
        const auto& src = other[s].values;
        for (std::size_t k = 0; k < dst.size(); ++k) dst[k] = round_to_bf16((dst[k] + src[k]) * 0.5f);
        avg[s].dtype = DType::bf16;
      }
      experts[static_cast<std::size_t>(a)] = avg;
      experts[static_cast<std::size_t>(b)] = avg;
    }
  }
  return out;
}

ToyMoEModel compress_drop(const ToyMoEModel& model, const PairingPlan& plan) {
  require_dense(model);
  require_plan_fits(model, plan);
  ToyMoEModel out = model;
  for (std::size_t l = 0; l < model.layers.size(); ++l) {
    auto& experts = out.layers[l].experts;
    for (const auto& [a, b] : plan.layers[l].pairs) {
      experts[static_cast<std::size_t>(b)] = experts[static_cast<std::size_t>(a)];
    }
  }
  return out;
}

nlohmann::json report_to_json(const CompressReport& r) {
  return {{"expert_bytes_before", r.expert_bytes_before},
          {"expert_bytes_after", r.expert_bytes_after},
          {"ratio_achieved", r.ratio_achieved},
          {"saturation_count", r.saturation_count},
          {"sim_fraction", r.sim_fraction},
          {"pairs", r.pairs},
          {"untouched", r.untouched},
          {"wall_time_ms", r.wall_time_ms}};
}

}  // namespace pairmerge
