// Copyright 2026 The pairmerge Authors
// SPDX-License-Identifier: Apache-2.0

#include "pairmerge/model_io.hpp"

#include <string>

namespace pairmerge {

namespace {

std::string layer_prefix(std::size_t l) { return "layer" + std::to_string(l); }

std::string calib_name(std::size_t l, std::size_t e, Slot s) {
  return "calib/" + std::to_string(l) + "/" + std::to_string(e) + "/" + slot_name(s);
}

}  // namespace

nlohmann::json config_to_json(const ToyMoEConfig& c) {
  return {{"n_layers", c.n_layers}, {"n_experts", c.n_experts}, {"top_k", c.top_k},
          {"d_model", c.d_model},   {"d_ff", c.d_ff},           {"seed", c.seed}};
}

ToyMoEConfig config_from_json(const nlohmann::json& j) {
  ToyMoEConfig c;
  c.n_layers = j.at("n_layers").get<int>();
  c.n_experts = j.at("n_experts").get<int>();
  c.top_k = j.at("top_k").get<int>();
  c.d_model = j.at("d_model").get<int>();
  c.d_ff = j.at("d_ff").get<int>();
  c.seed = j.at("seed").get<std::uint64_t>();
  return c;
}

Container model_to_container(const ToyMoEModel& model) {
  model.validate();
  Container c;
  nlohmann::json layers = nlohmann::json::array();
  for (std::size_t l = 0; l < model.layers.size(); ++l) {
    const MoELayer& layer = model.layers[l];
    const std::string prefix = layer_prefix(l);
    c.add(make_f32(prefix + "/router", layer.router));
    for (std::size_t e = 0; e < layer.experts.size(); ++e) {
      if (const auto* dense = std::get_if<DenseExpert>(&layer.experts[e])) {
        for (Slot s : kSlots) {
          const std::string name = prefix + "/expert" + std::to_string(e) + "/" + slot_name(s);
          c.add((*dense)[s].dtype == DType::bf16 ? make_bf16(name, (*dense)[s].values)
                                                 : make_f32(name, (*dense)[s].values));
        }
      }
    }
    nlohmann::json pairs = nlohmann::json::array();
    for (std::size_t p = 0; p < layer.pairs.size(); ++p) {
      for (Slot s : kSlots) {
        c.add(make_pbf16(prefix + "/pair" + std::to_string(p) + "/" + slot_name(s),
                         layer.pairs[p][s]));
      }
      pairs.push_back({layer.pairs[p].experts[0], layer.pairs[p].experts[1]});
    }
    layers.push_back({{"pairs", pairs}});
  }
  c.metadata["model"] = {{"config", config_to_json(model.config)}, {"layers", layers}};
  return c;
}

ToyMoEModel model_from_container(const Container& c) {
  if (!c.metadata.contains("model")) throw CorruptHeader("container has no model metadata");
  ToyMoEModel model;
  try {
    const auto& meta = c.metadata.at("model");
    model.config = config_from_json(meta.at("config"));
    model.config.validate();
    const auto& layers = meta.at("layers");
    if (layers.size() != static_cast<std::size_t>(model.config.n_layers)) {
      throw CorruptHeader("layer metadata count disagrees with config");
    }
    for (std::size_t l = 0; l < layers.size(); ++l) {
      const std::string prefix = layer_prefix(l);
      MoELayer layer;
      layer.router = to_matrix(c.at(prefix + "/router"));
      layer.experts.resize(static_cast<std::size_t>(model.config.n_experts));
      std::vector<bool> packed(layer.experts.size(), false);
      const auto& pairs = layers[l].at("pairs");
      for (std::size_t p = 0; p < pairs.size(); ++p) {
        PackedExpertSet set;
        set.experts = {pairs[p].at(0).get<int>(), pairs[p].at(1).get<int>()};
        for (Slot s : kSlots) {
          set.w[static_cast<int>(s)] =
              to_packed(c.at(prefix + "/pair" + std::to_string(p) + "/" + slot_name(s)), set.experts);
        }
        for (int pos = 0; pos < 2; ++pos) {
          const int e = set.experts[pos];
          if (e < 0 || static_cast<std::size_t>(e) >= layer.experts.size() || packed[e]) {
            throw CorruptHeader(prefix + ": invalid pair membership");
          }
          packed[e] = true;
          layer.experts[e] = PackedRef{static_cast<int>(p), static_cast<ExpertPos>(pos)};
        }
        layer.pairs.push_back(std::move(set));
      }
      for (std::size_t e = 0; e < layer.experts.size(); ++e) {
        if (packed[e]) continue;
        DenseExpert dense;
        for (Slot s : kSlots) {
          const TensorRecord& r = c.at(prefix + "/expert" + std::to_string(e) + "/" + slot_name(s));
          dense[s] = ExpertTensor{to_matrix(r), r.dtype == "bf16" ? DType::bf16 : DType::f32};
        }
        layer.experts[e] = std::move(dense);
      }
      model.layers.push_back(std::move(layer));
    }
  } catch (const nlohmann::json::exception& e) {
    throw CorruptHeader(std::string("malformed model metadata: ") + e.what());
  }
  try {
    model.validate();
  } catch (const Error& e) {
    throw CorruptHeader(std::string("inconsistent model: ") + e.what());
  }
  return model;
}

void add_calibration(Container& c, const CalibrationStats& stats) {
  nlohmann::json counts = nlohmann::json::array();
  for (std::size_t l = 0; l < stats.norms.size(); ++l) {
    for (std::size_t e = 0; e < stats.norms[l].size(); ++e) {
      for (Slot s : kSlots) {
        const auto& v = stats.norms[l][e][static_cast<int>(s)];
        TensorRecord r = make_f32(calib_name(l, e, s), MatrixF(1, v.size(), v));
        r.shape = {v.size()};
        c.add(std::move(r));
      }
    }
    counts.push_back(stats.token_counts[l]);
  }
  c.metadata["calibration"] = {{"token_counts", counts}};
}

std::optional<CalibrationStats> calibration_from_container(const Container& c) {
  if (!c.metadata.contains("calibration")) return std::nullopt;
  CalibrationStats stats;
  stats.token_counts =
      c.metadata["calibration"].at("token_counts").get<std::vector<std::vector<std::uint64_t>>>();
  stats.norms.resize(stats.token_counts.size());
  for (std::size_t l = 0; l < stats.token_counts.size(); ++l) {
    stats.norms[l].resize(stats.token_counts[l].size());
    for (std::size_t e = 0; e < stats.token_counts[l].size(); ++e) {
      for (Slot s : kSlots) stats.norms[l][e][static_cast<int>(s)] = to_vector(c.at(calib_name(l, e, s)));
    }
  }
  return stats;
}

void save_model(const std::filesystem::path& path, const ToyMoEModel& model,
                const nlohmann::json& extra_metadata) {
  Container c = model_to_container(model);
  for (const auto& [key, value] : extra_metadata.items()) c.metadata[key] = value;
  write_container(path, c);
}

ToyMoEModel load_model(const std::filesystem::path& path) {
  return model_from_container(read_container(path));
}

}  // namespace pairmerge
