// Copyright 2026 The pairmerge Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>
#include <sys/wait.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>

#include "nlohmann/json.hpp"

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

struct RunResult {
  int code = -1;
  std::string out;
  std::string err;
  json parsed() const { return json::parse(out); }
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("pairmerge_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  RunResult run(const std::string& args) const {
    const std::string err_file = path("stderr.txt");
    const std::string cmd = std::string(PAIRMERGE_CLI_PATH) + " " + args + " 2>" + err_file;
    RunResult r;
    FILE* pipe = popen(cmd.c_str(), "r");
    if (!pipe) return r;
    char buf[4096];
    std::size_t n;
    while ((n = std::fread(buf, 1, sizeof buf, pipe)) > 0) r.out.append(buf, n);
    const int status = pclose(pipe);
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    r.err = slurp(err_file);
    return r;
  }

  fs::path dir_;
};

TEST_F(Cli, GenToyDefaults) {
  const RunResult r = run("gen-toy --out " + path("m.pzm"));
  ASSERT_EQ(r.code, 0) << r.err;
  const json j = r.parsed();
  EXPECT_EQ(j.at("config").at("n_layers"), 4);
  EXPECT_EQ(j.at("config").at("n_experts"), 8);
  EXPECT_EQ(j.at("config").at("top_k"), 2);
  EXPECT_EQ(j.at("config").at("d_model"), 64);
  EXPECT_EQ(j.at("config").at("d_ff"), 128);
  EXPECT_EQ(j.at("expert_bytes"), 4 * 8 * 3 * 64 * 128 * 2);
  EXPECT_TRUE(fs::exists(path("m.pzm")));
  EXPECT_FALSE(r.err.empty());
}

TEST_F(Cli, GenToyIsByteDeterministic) {
  ASSERT_EQ(run("gen-toy --seed 5 --experts 4 --out " + path("a.pzm")).code, 0);
  ASSERT_EQ(run("gen-toy --seed 5 --experts 4 --out " + path("b.pzm")).code, 0);
  ASSERT_EQ(run("gen-toy --seed 6 --experts 4 --out " + path("c.pzm")).code, 0);
  EXPECT_EQ(slurp(path("a.pzm")), slurp(path("b.pzm")));
  EXPECT_NE(slurp(path("a.pzm")), slurp(path("c.pzm")));
}

TEST_F(Cli, ZeroExpertsIsUsageError) {
  const RunResult r = run("gen-toy --experts 0 --out " + path("m.pzm"));
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("experts"), std::string::npos) << r.err;
  EXPECT_TRUE(r.out.empty());
}

TEST_F(Cli, UsageErrors) {
  EXPECT_EQ(run("").code, 2);
  EXPECT_EQ(run("frobnicate").code, 2);
  EXPECT_EQ(run("compress --in x.pzm").code, 2);
  EXPECT_EQ(run("compress --in x --out y --grouping greedy").code, 2);
  EXPECT_EQ(run("gen-toy --top-k 9 --out " + path("m.pzm")).code, 2);
}

TEST_F(Cli, IoErrors) {
  EXPECT_EQ(run("compress --in " + path("missing.pzm") + " --out " + path("o.pzm")).code, 3);
  std::ofstream(path("junk.pzm")) << "not a container at all";
  EXPECT_EQ(run("eval --original " + path("junk.pzm") + " --compressed " + path("junk.pzm")).code, 3);
  EXPECT_EQ(run("inspect exponents " + path("missing.pzm")).code, 3);
}

TEST_F(Cli, CompressHalfAndQuarter) {
  ASSERT_EQ(run("gen-toy --out " + path("m.pzm")).code, 0);
  const RunResult half = run("compress --in " + path("m.pzm") + " --out " + path("h.pzm") + " --ratio 0.5");
  ASSERT_EQ(half.code, 0) << half.err;
  const json h = half.parsed();
  EXPECT_EQ(h.at("ratio_achieved"), 0.5);
  EXPECT_EQ(h.at("expert_bytes_after").get<std::uint64_t>() * 2, h.at("expert_bytes_before").get<std::uint64_t>());
  EXPECT_EQ(h.at("tau"), 0.4);
  for (const char* k : {"seed", "calib_seed", "saturation_count", "sim_fraction", "pairs", "wall_time_ms"}) {
    EXPECT_TRUE(h.contains(k)) << k;
  }

  const RunResult quarter = run("compress --model-in " + path("m.pzm") + " --model-out " + path("q.pzm") + " --ratio 0.25");
  ASSERT_EQ(quarter.code, 0) << quarter.err;
  const json q = quarter.parsed();
  EXPECT_EQ(q.at("ratio_achieved"), 0.75);
  EXPECT_EQ(q.at("pairs"), 8);
  EXPECT_EQ(q.at("untouched"), 16);
}

TEST_F(Cli, CompressIsByteDeterministic) {
  ASSERT_EQ(run("gen-toy --experts 4 --out " + path("m.pzm")).code, 0);
  const std::string base = "compress --in " + path("m.pzm") + " --grouping search --seed 3 --out ";
  ASSERT_EQ(run(base + path("a.pzm")).code, 0);
  ASSERT_EQ(run(base + path("b.pzm") + " --threads 2").code, 0);
  EXPECT_EQ(slurp(path("a.pzm")), slurp(path("b.pzm")));
}

TEST_F(Cli, InfeasibleRatioIsSemanticError) {
  ASSERT_EQ(run("gen-toy --experts 3 --out " + path("m.pzm")).code, 0);
  EXPECT_EQ(run("compress --in " + path("m.pzm") + " --out " + path("o.pzm") + " --ratio 0.5").code, 4);
  EXPECT_EQ(run("compress --in " + path("m.pzm") + " --out " + path("o.pzm") + " --ratio 0.7").code, 4);
}

TEST_F(Cli, EvalCases) {
  ASSERT_EQ(run("gen-toy --out " + path("m.pzm")).code, 0);
  ASSERT_EQ(run("gen-toy --seed 1 --out " + path("other.pzm")).code, 0);
  fs::copy_file(path("m.pzm"), path("copy.pzm"));
  const RunResult same = run("eval --original " + path("m.pzm") + " --compressed " + path("copy.pzm"));
  ASSERT_EQ(same.code, 0) << same.err;
  EXPECT_EQ(same.parsed().at("mean_rel_l2"), 0.0);
  EXPECT_EQ(same.parsed().at("max_rel_l2"), 0.0);
  EXPECT_EQ(same.parsed().at("seed"), 7);
  EXPECT_EQ(same.parsed().at("tokens"), 256);

  ASSERT_EQ(run("compress --in " + path("m.pzm") + " --out " + path("c.pzm")).code, 0);
  ASSERT_EQ(run("unpack --in " + path("c.pzm") + " --out " + path("u.pzm")).code, 0);
  const RunResult pack_only = run("eval --original " + path("c.pzm") + " --compressed " + path("u.pzm"));
  EXPECT_EQ(pack_only.parsed().at("max_rel_l2"), 0.0);
  const RunResult lossy = run("eval --original " + path("m.pzm") + " --compressed " + path("c.pzm") + " --tokens 32");
  EXPECT_GT(lossy.parsed().at("mean_rel_l2").get<double>(), 0.0);

  EXPECT_EQ(run("eval --original " + path("m.pzm") + " --compressed " + path("other.pzm")).code, 4);
}

TEST_F(Cli, MergedExactDuplicatesStayClose) {
  ASSERT_EQ(run("gen-toy --dup-pairs --noise 0 --out " + path("m.pzm")).code, 0);
  ASSERT_EQ(run("compress --grouping search --in " + path("m.pzm") + " --out " + path("c.pzm")).code, 0);
  const json j = run("eval --original " + path("m.pzm") + " --compressed " + path("c.pzm")).parsed();
  EXPECT_LT(j.at("mean_rel_l2").get<double>(), 1e-4);
}

TEST_F(Cli, InspectTheory) {
  const RunResult r = run("inspect theory --sigma-ratio 1 --tau 0.4 --mc-samples 1000000");
  ASSERT_EQ(r.code, 0) << r.err;
  const json j = r.parsed();
  EXPECT_NEAR(j.at("closed").get<double>(), 0.48449, 1e-4);
  EXPECT_NEAR(j.at("mc").get<double>(), 0.4845, 0.003);
  EXPECT_EQ(run("inspect theory --sigma-ratio 1 --tau 1.5").code, 2);
}

TEST_F(Cli, InspectExponentsAndCorrelation) {
  ASSERT_EQ(run("gen-toy --dup-pairs --noise 0 --out " + path("m.pzm")).code, 0);
  const json e = run("inspect exponents " + path("m.pzm")).parsed();
  EXPECT_GT(e.at("fraction_in_range").get<double>(), 0.99);
  const json c = run("inspect correlation " + path("m.pzm")).parsed();
  for (const auto& p : c.at("layers").at(0).at("pairs")) {
    if (p.at("a").get<int>() % 2 == 0 && p.at("b").get<int>() == p.at("a").get<int>() + 1) {
      EXPECT_DOUBLE_EQ(p.at("r").get<double>(), 1.0);
    }
  }
}

TEST_F(Cli, Bench) {
  const json d = run("bench --rows 64 --cols 64 --iters 5").parsed();
  for (const char* k : {"fused_ns_per_call", "reference_ns_per_call", "decode_then_dense_ns_per_call"}) {
    EXPECT_GT(d.at(k).get<double>(), 0.0) << k;
  }
  EXPECT_EQ(d.at("low_confidence"), false);
  EXPECT_EQ(run("bench --rows 4 --cols 4 --iters 1").parsed().at("low_confidence"), true);
  EXPECT_EQ(run("bench --rows 0").code, 2);
}

}  // namespace
