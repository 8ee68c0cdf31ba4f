// Copyright 2026 The pairmerge Authors
// SPDX-License-Identifier: Apache-2.0

// pairmerge: generate toy MoE models, compress them by pairwise dual-mask
// merging, evaluate, inspect and benchmark. Machine-readable JSON goes to
// stdout, everything else to stderr.
//
// Exit codes: 0 success, 2 usage, 3 I/O, 4 semantic mismatch.

#include <cmath>
#include <filesystem>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"

#include "pairmerge/analysis.hpp"
#include "pairmerge/compress.hpp"
#include "pairmerge/gemv.hpp"
#include "pairmerge/model_io.hpp"
#include "pairmerge/parallel.hpp"

namespace pm = pairmerge;
using nlohmann::json;

namespace {

constexpr int kExitUsage = 2;
constexpr int kExitIo = 3;
constexpr int kExitMismatch = 4;

void emit(const json& j) { std::cout << j.dump() << std::endl; }

std::uint64_t count_params(const pm::ToyMoEModel& m, bool experts) {
  std::uint64_t n = 0;
  for (const auto& layer : m.layers) {
    if (!experts) {
      n += layer.router.size();
      continue;
    }
    for (std::size_t e = 0; e < layer.experts.size(); ++e) {
      for (const auto& t : pm::materialize_expert(layer, static_cast<int>(e)).w) n += t.values.size();
    }
  }
  return n;
}

pm::ExponentHistogram model_histogram(const pm::ToyMoEModel& m) {
  pm::ExponentHistogram h;
  for (const auto& layer : m.layers) {
    for (std::size_t e = 0; e < layer.experts.size(); ++e) {
      for (const auto& t : pm::materialize_expert(layer, static_cast<int>(e)).w) h.add(t.values);
    }
  }
  return h;
}

struct GenToyArgs {
  pm::ToyMoEConfig config;
  bool dup_pairs = false;
  double noise = 0.0;
  std::string out;
};

int cmd_gen_toy(const GenToyArgs& a) {
  const pm::ToyMoEModel model = pm::generate_toy(a.config, a.dup_pairs, a.noise);
  pm::save_model(a.out, model, {{"generator", {{"dup_pairs", a.dup_pairs}, {"noise", a.noise}}}});
  const auto hist = model_histogram(model);
  const auto expert_params = count_params(model, true);
  const auto router_params = count_params(model, false);
  emit({{"command", "gen-toy"},
        {"out", a.out},
        {"config", pm::config_to_json(a.config)},
        {"dup_pairs", a.dup_pairs},
        {"noise", a.noise},
        {"expert_params", expert_params},
        {"router_params", router_params},
        {"total_params", expert_params + router_params},
        {"expert_bytes", pm::expert_payload_bytes(model)},
        {"fraction_in_range", hist.fraction_in_range()}});
  std::cerr << "wrote " << a.out << "\n";
  return 0;
}

struct CompressArgs {
  std::string in;
  std::string out;
  std::string grouping = "random";
  double tau = 0.4;
  pm::CompressOptions options;
};

int cmd_compress(const CompressArgs& a) {
  pm::CompressOptions opts = a.options;
  opts.tau = static_cast<float>(a.tau);
  opts.grouping = a.grouping == "search" ? pm::GroupingStrategy::search : pm::GroupingStrategy::random;
  const pm::ToyMoEModel model = pm::load_model(a.in);
  pm::CompressResult r = pm::compress(model, opts);

  pm::Container c = pm::model_to_container(r.model);
  pm::add_calibration(c, r.stats);
  c.metadata["pairing_plan"] = r.plan;
  c.metadata["tau_sim"] = a.tau;
  c.metadata["seed"] = opts.seed;
  c.metadata["calib_seed"] = opts.calib_seed;
  c.metadata["calib_tokens"] = opts.calib_tokens;
  pm::write_container(a.out, c);

  json report = pm::report_to_json(r.report);
  report["command"] = "compress";
  report["in"] = a.in;
  report["out"] = a.out;
  report["ratio"] = opts.ratio;
  report["tau"] = a.tau;
  report["seed"] = opts.seed;
  report["grouping"] = a.grouping;
  report["calib_tokens"] = opts.calib_tokens;
  report["calib_seed"] = opts.calib_seed;
  report["search_budget"] = opts.search_budget;
  emit(report);
  std::cerr << "compressed " << r.report.pairs << " pairs, " << r.report.untouched
            << " untouched experts -> " << a.out << "\n";
  return 0;
}

struct EvalArgs {
  std::string original;
  std::string compressed;
  std::size_t tokens = 256;
  std::uint64_t seed = 7;
};

int cmd_eval(const EvalArgs& a) {
  const pm::ToyMoEModel original = pm::load_model(a.original);
  const pm::ToyMoEModel compressed = pm::load_model(a.compressed);
  const pm::MatrixF inputs = pm::gaussian_inputs(a.tokens, static_cast<std::size_t>(original.config.d_model), a.seed);
  const pm::Deviation d = pm::eval_deviation(original, compressed, inputs);
  emit({{"command", "eval"},
        {"mean_rel_l2", d.mean_rel_l2},
        {"max_rel_l2", d.max_rel_l2},
        {"tokens", a.tokens},
        {"seed", a.seed}});
  return 0;
}

int cmd_unpack(const std::string& in, const std::string& out) {
  const pm::ToyMoEModel model = pm::load_model(in);
  pm::save_model(out, pm::unpack_model(model));
  emit({{"command", "unpack"}, {"in", in}, {"out", out}});
  return 0;
}

int cmd_inspect_exponents(const std::string& file) {
  const auto hist = model_histogram(pm::load_model(file));
  json counts = json::object();
  for (std::size_t e = 0; e < hist.counts.size(); ++e) {
    if (hist.counts[e]) counts[std::to_string(e)] = hist.counts[e];
  }
  emit({{"command", "inspect exponents"},
        {"file", file},
        {"total", hist.total},
        {"counts", counts},
        {"packable_range", {pm::kExponentFloor, pm::kExponentCeil}},
        {"fraction_in_range", hist.fraction_in_range()}});
  return 0;
}

int cmd_inspect_correlation(const std::string& file) {
  const pm::ToyMoEModel model = pm::load_model(file);
  json layers = json::array();
  double sum = 0.0;
  std::size_t count = 0;
  for (const auto& layer : model.layers) {
    std::vector<pm::MatrixF> flat;
    for (std::size_t e = 0; e < layer.experts.size(); ++e) {
      std::vector<float> v;
      for (const auto& t : pm::materialize_expert(layer, static_cast<int>(e)).w) {
        v.insert(v.end(), t.values.data().begin(), t.values.data().end());
      }
      flat.emplace_back(1, v.size(), std::move(v));
    }
    json pairs = json::array();
    for (std::size_t a = 0; a < flat.size(); ++a) {
      for (std::size_t b = a + 1; b < flat.size(); ++b) {
        const double r = pm::pearson_pairwise(flat[a], flat[b]);
        pairs.push_back({{"a", a}, {"b", b}, {"r", r}});
        sum += r;
        ++count;
      }
    }
    layers.push_back({{"pairs", pairs}});
  }
  emit({{"command", "inspect correlation"},
        {"file", file},
        {"layers", layers},
        {"mean_r", count ? sum / static_cast<double>(count) : 0.0}});
  return 0;
}

struct TheoryArgs {
  double sigma_ratio = 1.0;
  double tau = 0.4;
  std::uint64_t mc_samples = 1000000;
  std::uint64_t seed = 0;
};

int cmd_inspect_theory(const TheoryArgs& a) {
  const double closed = pm::similarity_fraction_closed(a.sigma_ratio, a.tau);
  const double mc = pm::similarity_fraction_mc(1.0, a.sigma_ratio, a.tau, a.mc_samples, a.seed);
  emit({{"command", "inspect theory"},
        {"sigma_ratio", a.sigma_ratio},
        {"tau", a.tau},
        {"closed", closed},
        {"mc", mc},
        {"mc_samples", a.mc_samples},
        {"seed", a.seed},
        {"binomial_bound", 4.0 * std::sqrt(closed * (1.0 - closed) / static_cast<double>(a.mc_samples))}});
  return 0;
}

struct BenchArgs {
  std::size_t rows = 1024;
  std::size_t cols = 1024;
  int iters = 20;
  std::uint64_t seed = 0;
};

int cmd_bench(const BenchArgs& a) {
  const pm::BenchReport r = pm::bench_gemv(a.rows, a.cols, a.iters, a.seed);
  emit({{"command", "bench"},
        {"rows", r.rows},
        {"cols", r.cols},
        {"iters", r.iters},
        {"seed", r.seed},
        {"fused_ns_per_call", r.fused_ns_per_call},
        {"reference_ns_per_call", r.reference_ns_per_call},
        {"decode_then_dense_ns_per_call", r.decode_then_dense_ns_per_call},
        {"fused_bytes_per_call", r.fused_bytes_per_call},
        {"reference_bytes_per_call", r.reference_bytes_per_call},
        {"decode_then_dense_bytes_per_call", r.decode_then_dense_bytes_per_call},
        {"low_confidence", r.low_confidence}});
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Pairwise dual-mask expert merging for toy MoE models"};
  app.require_subcommand(1);
  app.fallthrough();
  int threads = 1;
  app.add_option("--threads", threads, "Maximum worker threads")->check(CLI::PositiveNumber);

  GenToyArgs gen;
  auto* gen_cmd = app.add_subcommand("gen-toy", "Generate a seeded toy MoE model");
  gen_cmd->add_option("--layers", gen.config.n_layers)->check(CLI::PositiveNumber);
  gen_cmd->add_option("--experts", gen.config.n_experts)->check(CLI::PositiveNumber);
  gen_cmd->add_option("--top-k", gen.config.top_k)->check(CLI::PositiveNumber);
  gen_cmd->add_option("--d-model", gen.config.d_model)->check(CLI::PositiveNumber);
  gen_cmd->add_option("--d-ff", gen.config.d_ff)->check(CLI::PositiveNumber);
  gen_cmd->add_option("--seed", gen.config.seed);
  gen_cmd->add_flag("--dup-pairs", gen.dup_pairs, "Make expert 2k+1 a noisy copy of expert 2k");
  gen_cmd->add_option("--noise", gen.noise)->check(CLI::NonNegativeNumber);
  gen_cmd->add_option("--out", gen.out)->required();

  CompressArgs comp;
  auto* comp_cmd = app.add_subcommand("compress", "Merge expert pairs and pack them");
  comp_cmd->add_option("--in,--model-in", comp.in)->required();
  comp_cmd->add_option("--out,--model-out", comp.out)->required();
  comp_cmd->add_option("--ratio", comp.options.ratio, "Fraction of experts removed");
  comp_cmd->add_option("--tau", comp.tau, "Similarity threshold")->check(CLI::Range(0.0, 1.0));
  comp_cmd->add_option("--seed", comp.options.seed);
  comp_cmd->add_option("--grouping", comp.grouping)->check(CLI::IsMember({"random", "search"}));
  comp_cmd->add_option("--calib-tokens", comp.options.calib_tokens)->check(CLI::PositiveNumber);
  comp_cmd->add_option("--calib-seed", comp.options.calib_seed);
  comp_cmd->add_option("--search-budget", comp.options.search_budget)->check(CLI::PositiveNumber);

  EvalArgs ev;
  auto* eval_cmd = app.add_subcommand("eval", "Relative output deviation of a compressed model");
  eval_cmd->add_option("--original", ev.original)->required();
  eval_cmd->add_option("--compressed", ev.compressed)->required();
  eval_cmd->add_option("--tokens", ev.tokens)->check(CLI::PositiveNumber);
  eval_cmd->add_option("--seed", ev.seed);

  std::string unpack_in;
  std::string unpack_out;
  auto* unpack_cmd = app.add_subcommand("unpack", "Decode packed pairs into dense bf16 experts");
  unpack_cmd->add_option("--in", unpack_in)->required();
  unpack_cmd->add_option("--out", unpack_out)->required();

  auto* inspect_cmd = app.add_subcommand("inspect", "Analysis reports");
  inspect_cmd->require_subcommand(1);
  std::string exp_file;
  auto* exp_cmd = inspect_cmd->add_subcommand("exponents", "bf16 exponent histogram of expert weights");
  exp_cmd->add_option("file", exp_file)->required();
  std::string corr_file;
  auto* corr_cmd = inspect_cmd->add_subcommand("correlation", "Pairwise Pearson correlation of experts");
  corr_cmd->add_option("file", corr_file)->required();
  TheoryArgs theory;
  auto* theory_cmd = inspect_cmd->add_subcommand("theory", "Closed-form similar-entry fraction vs Monte Carlo");
  theory_cmd->add_option("--sigma-ratio", theory.sigma_ratio)->check(CLI::PositiveNumber);
  theory_cmd->add_option("--tau", theory.tau);
  theory_cmd->add_option("--mc-samples", theory.mc_samples)->check(CLI::PositiveNumber);
  theory_cmd->add_option("--seed", theory.seed);

  BenchArgs bench;
  auto* bench_cmd = app.add_subcommand("bench", "Fused vs dense GEMV timings");
  bench_cmd->add_option("--rows", bench.rows)->check(CLI::PositiveNumber);
  bench_cmd->add_option("--cols", bench.cols)->check(CLI::PositiveNumber);
  bench_cmd->add_option("--iters", bench.iters)->check(CLI::PositiveNumber);
  bench_cmd->add_option("--seed", bench.seed);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  }

  pm::set_max_threads(threads);
  try {
    if (gen_cmd->parsed()) return cmd_gen_toy(gen);
    if (comp_cmd->parsed()) return cmd_compress(comp);
    if (eval_cmd->parsed()) return cmd_eval(ev);
    if (unpack_cmd->parsed()) return cmd_unpack(unpack_in, unpack_out);
    if (exp_cmd->parsed()) return cmd_inspect_exponents(exp_file);
    if (corr_cmd->parsed()) return cmd_inspect_correlation(corr_file);
    if (theory_cmd->parsed()) return cmd_inspect_theory(theory);
    if (bench_cmd->parsed()) return cmd_bench(bench);
  } catch (const pm::IoError& e) {
    std::cerr << "io error: " << e.what() << "\n";
    return kExitIo;
  } catch (const pm::BadMagic& e) {
    std::cerr << "io error: " << e.what() << "\n";
    return kExitIo;
  } catch (const pm::CorruptHeader& e) {
    std::cerr << "io error: " << e.what() << "\n";
    return kExitIo;
  } catch (const pm::TruncatedPayload& e) {
    std::cerr << "io error: " << e.what() << "\n";
    return kExitIo;
  } catch (const pm::RatioOutOfRange& e) {
    std::cerr << "infeasible: " << e.what() << "\n";
    return kExitMismatch;
  } catch (const pm::ConfigMismatch& e) {
    std::cerr << "mismatch: " << e.what() << "\n";
    return kExitMismatch;
  } catch (const pm::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  }
  return kExitUsage;
}
