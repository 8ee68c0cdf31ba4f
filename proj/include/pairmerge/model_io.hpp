// Copyright 2026 The pairmerge Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <optional>

#include "pairmerge/calibration.hpp"
#include "pairmerge/container.hpp"
#include "pairmerge/grouping.hpp"
#include "pairmerge/toy_moe.hpp"

namespace pairmerge {

// Tensor names:
//   layer{i}/router                 f32
//   layer{i}/expert{e}/{w1|w2|w3}   bf16 (dense experts)
//   layer{i}/pair{p}/{w1|w2|w3}     pbf16
//   calib/{layer}/{expert}/{slot}   f32
// Metadata "model" holds the config and each layer's pair membership.
Container model_to_container(const ToyMoEModel& model);
ToyMoEModel model_from_container(const Container& c);

void add_calibration(Container& c, const CalibrationStats& stats);
std::optional<CalibrationStats> calibration_from_container(const Container& c);

void save_model(const std::filesystem::path& path, const ToyMoEModel& model,
                const nlohmann::json& extra_metadata = nlohmann::json::object());
ToyMoEModel load_model(const std::filesystem::path& path);

nlohmann::json config_to_json(const ToyMoEConfig& c);
ToyMoEConfig config_from_json(const nlohmann::json& j);

}  // namespace pairmerge
