// Copyright 2026 The pairmerge Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>

#include "json.hpp"

#include "pairmerge/calibration.hpp"
#include "pairmerge/grouping.hpp"
#include "pairmerge/toy_moe.hpp"

namespace pairmerge {

enum class GroupingStrategy { random, search };

struct CompressOptions {
  double ratio = 0.5;
  float tau = 0.4f;
  std::uint64_t seed = 0;
  GroupingStrategy grouping = GroupingStrategy::random;
  std::size_t calib_tokens = 512;
  std::uint64_t calib_seed = 1;
  int search_budget = 64;
};

struct CompressReport {
  std::uint64_t expert_bytes_before = 0;
  std::uint64_t expert_bytes_after = 0;
  double ratio_achieved = 0.0;  // after / before
  std::uint64_t saturation_count = 0;
  double sim_fraction = 0.0;  // share of merged entries with m_sim = 1
  int pairs = 0;
  int untouched = 0;
  double wall_time_ms = 0.0;
};

struct CompressResult {
  ToyMoEModel model;
  PairingPlan plan;
  CalibrationStats stats;
  CompressReport report;
};

// Bytes of expert weight storage: dense experts at 2 bytes per weight (bf16)
// plus packed pairs at 2 bytes per word.
std::uint64_t expert_payload_bytes(const ToyMoEModel& model);

// Builds a pairing plan for every layer of the model.
PairingPlan plan_pairs(const ToyMoEModel& model, const CompressOptions& options,
                       const CalibrationStats& stats);

// Merges and packs every pair of the plan; untouched experts are copied.
ToyMoEModel apply_plan(const ToyMoEModel& model, const PairingPlan& plan,
                       const CalibrationStats& stats, float tau, CompressReport* report = nullptr);

// Full pipeline: seeded calibration inputs, collect_norms, grouping,
// per-slot masks + merge + pack.
CompressResult compress(const ToyMoEModel& model, const CompressOptions& options);

// Baselines sharing a plan with the merged model, dense bf16 outputs.
// Unmasked averaging: both experts of a pair become (W_a + W_b) / 2.
ToyMoEModel compress_naive_average(const ToyMoEModel& model, const PairingPlan& plan);
// Dropping: the second expert of each pair is replaced by the first, so its
// tokens are served by the survivor.
ToyMoEModel compress_drop(const ToyMoEModel& model, const PairingPlan& plan);

nlohmann::json report_to_json(const CompressReport& r);

}  // namespace pairmerge
