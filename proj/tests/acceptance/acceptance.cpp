// Copyright 2026 The pairmerge Authors
// SPDX-License-Identifier: Apache-2.0

// Acceptance suite. Prints one PASS/FAIL line per criterion and exits
// nonzero if any criterion fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "pairmerge/analysis.hpp"
#include "pairmerge/bitcodec.hpp"
#include "pairmerge/compress.hpp"
#include "pairmerge/container.hpp"
#include "pairmerge/gemv.hpp"
#include "pairmerge/merge.hpp"
#include "pairmerge/model_io.hpp"
#include "pairmerge/parallel.hpp"
#include "pairmerge/quantization.hpp"
#include "support/oracles.hpp"

namespace pm = pairmerge;

namespace {

// Tolerances and runtime budgets.
constexpr double kIdentityBudgetS = 10.0;
constexpr double kCodecBudgetS = 1.0;
constexpr double kKernelBudgetS = 30.0;
constexpr double kTheoryBudgetS = 20.0;
constexpr double kQualityBudgetS = 120.0;
constexpr double kCompressBudgetS = 5.0;
constexpr double kClosedTarget = 0.48449;
constexpr double kClosedTol = 1e-4;
constexpr double kMcTol = 3e-3;
constexpr double kBitwidthTarget = 3.35;
constexpr double kBitwidthTol = 0.01;

struct Outcome {
  bool pass = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* f, double a) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

bool bits_equal(const pm::MatrixF& a, const pm::MatrixF& b) {
  if (!a.same_shape(b)) return false;
  for (std::size_t k = 0; k < a.size(); ++k) {
    if (std::bit_cast<std::uint32_t>(a[k]) != std::bit_cast<std::uint32_t>(b[k])) {
      // +0 and -0 differ only for zero source entries, which cannot occur in range.
      return false;
    }
  }
  return true;
}

pm::MatrixF negate(const pm::MatrixF& m) {
  pm::MatrixF out = m;
  for (auto& v : out.flat()) v = -v;
  return out;
}

Outcome identity_merges() {
  const auto t0 = Clock::now();
  int checked = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    std::mt19937_64 rng(seed);
    const std::size_t rows = 1 + rng() % 128;
    const std::size_t cols = 1 + rng() % 128;
    const pm::MatrixF w = pm::testing::random_in_range(rows, cols, rng);
    std::vector<float> ni(cols), nj(cols);
    std::uniform_real_distribution<float> norm(0.1f, 10.0f);
    for (auto& v : ni) v = norm(rng);
    for (auto& v : nj) v = norm(rng);
    const pm::MatrixF neg = negate(w);

    const auto self = pm::pack_pair(pm::merge_experts(w, w, ni, nj, 0.4f));
    const auto opp = pm::pack_pair(pm::merge_experts(w, neg, ni, nj, 0.4f));
    const bool ok = bits_equal(pm::unpack_pair(self, pm::ExpertPos::first).values, w) &&
                    bits_equal(pm::unpack_pair(self, pm::ExpertPos::second).values, w) &&
                    bits_equal(pm::unpack_pair(opp, pm::ExpertPos::first).values, w) &&
                    bits_equal(pm::unpack_pair(opp, pm::ExpertPos::second).values, neg);
    if (!ok) return {false, "seed " + std::to_string(seed) + " did not reconstruct bit-exactly"};
    ++checked;
  }
  const double s = seconds_since(t0);
  return {s < kIdentityBudgetS, std::to_string(checked) + " seeds bit-exact, " + fmt("%.2f s", s)};
}

Outcome worked_example() {
  const pm::MatrixF wi = pm::testing::from_rows({{0.5f, -1.0f}, {0.25f, 2.0f}});
  const pm::MatrixF wj = pm::testing::from_rows({{0.6f, 1.0f}, {-1.0f, 0.1f}});
  const std::vector<float> ones{1.0f, 1.0f};
  const pm::MergeArtifacts a = pm::merge_experts(wi, wj, ones, ones, 0.4f);
  const auto brute = pm::testing::brute_force_merge(pm::testing::to_grid(wi), pm::testing::to_grid(wj),
                                                    {1, 1}, {1, 1}, 0.4);
  const pm::MatrixF ri = pm::reconstruct(a, pm::ExpertPos::first);
  const pm::MatrixF rj = pm::reconstruct(a, pm::ExpertPos::second);

  const std::uint8_t sim[4] = {1, 1, 0, 0}, sal_i[4] = {0, 1, 0, 1};
  const std::uint8_t mi[4] = {1, 1, 0, 1}, mj[4] = {1, 1, 1, 0};
  const float merged[4] = {0.55f, 1.0f, 1.0f, 2.0f};
  const float rec_i[4] = {0.55f, -1.0f, 0.0f, 2.0f};
  const float rec_j[4] = {0.55f, 1.0f, -1.0f, 0.0f};
  for (std::size_t k = 0; k < 4; ++k) {
    const std::size_t r = k / 2, c = k % 2;
    const bool masks = a.masks.m_sim[k] == sim[k] && a.masks.m_sal_i[k] == sal_i[k] &&
                       a.masks.m_i[k] == mi[k] && a.masks.m_j[k] == mj[k] &&
                       a.masks.m_sim[k] == brute.m_sim[r][c] && a.masks.m_i[k] == brute.m_i[r][c] &&
                       a.masks.m_j[k] == brute.m_j[r][c] && a.masks.m_sal_i[k] == brute.m_sal_i[r][c];
    // f32 inputs: 0.6f is not 0.6, so merged values are compared to f32 precision.
    const bool values = std::fabs(a.w_merged[k] - merged[k]) <= 1e-6f &&
                        std::fabs(a.w_merged[k] - brute.merged[r][c]) <= 1e-6 &&
                        std::fabs(ri[k] - rec_i[k]) <= 1e-6f && std::fabs(rj[k] - rec_j[k]) <= 1e-6f &&
                        std::fabs(ri[k] - brute.recon_i[r][c]) <= 1e-6 &&
                        std::fabs(rj[k] - brute.recon_j[r][c]) <= 1e-6;
    if (!masks || !values) return {false, "entry " + std::to_string(k) + " disagrees"};
  }
  return {true, "masks, W_merged and reconstructions match literal and brute-force values"};
}

Outcome codec_round_trip() {
  const auto t0 = Clock::now();
  for (std::uint32_t w = 0; w < 0x10000u; ++w) {
    const auto word = static_cast<std::uint16_t>(w);
    const unsigned s0 = w >> 15 & 1, s1 = w >> 14 & 1, m0 = w >> 13 & 1, m1 = w >> 12 & 1;
    const unsigned e = (w >> 7 & 0x1F) + 112;
    const pm::Bf16 mag = pm::Bf16::from_bits(static_cast<std::uint16_t>(e << 7 | (w & 0x7F)));
    if (pm::pack_word(mag, s0, s1, m0, m1).bits != word) {
      return {false, "pack_word does not reproduce word " + std::to_string(w)};
    }
    for (int pos = 0; pos < 2; ++pos) {
      const std::uint16_t oracle = pm::testing::literal_decode(word, pos);
      const unsigned m = pos == 0 ? m0 : m1, s = pos == 0 ? s0 : s1;
      const std::uint16_t expected = m ? static_cast<std::uint16_t>(s << 15 | mag.bits) : 0;
      if (pm::decode_word(pm::PackedWord{word}, pos).bits != oracle ||
          pm::decode_word_bits(word, pos) != oracle || oracle != expected) {
        return {false, "decode mismatch at word " + std::to_string(w)};
      }
    }
  }
  const double s = seconds_since(t0);
  return {s < kCodecBudgetS, "65536 words x 2 positions, " + fmt("%.3f s", s)};
}

Outcome pack_echo() {
  const pm::ToyMoEModel base = pm::generate_toy(pm::ToyMoEConfig{});
  const pm::CompressResult r = pm::compress(base, pm::CompressOptions{});
  const pm::ToyMoEModel unpacked = pm::unpack_model(r.model);
  const pm::ToyMoEModel reloaded =
      pm::model_from_container(pm::parse_container(pm::serialize_container(pm::model_to_container(r.model))));
  const pm::MatrixF x = pm::gaussian_inputs(512, 64, 7);
  const pm::Deviation d1 = pm::eval_deviation(r.model, unpacked, x);
  const pm::Deviation d2 = pm::eval_deviation(r.model, reloaded, x);
  const double before = pm::eval_deviation(base, r.model, x).mean_rel_l2;
  const double after = pm::eval_deviation(base, unpacked, x).mean_rel_l2;
  const bool ok = d1.max_rel_l2 == 0.0 && d2.max_rel_l2 == 0.0 && before == after;
  return {ok, "packed vs unpacked max_rel_l2 " + fmt("%g", d1.max_rel_l2) + ", after save/load " +
                  fmt("%g", d2.max_rel_l2) + ", deviation from original " + fmt("%.6g", before) +
                  " both ways"};
}

Outcome kernel_oracle() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(2024);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t rows = 1 + rng() % 512;
    const std::size_t cols = 1 + rng() % 512;
    const pm::MatrixF wi = pm::testing::random_in_range(rows, cols, rng);
    const pm::MatrixF wj = pm::testing::random_in_range(rows, cols, rng);
    std::vector<float> ni(cols), nj(cols), x(cols);
    std::uniform_real_distribution<float> u(0.1f, 3.0f);
    std::normal_distribution<float> g(0.0f, 1.0f);
    for (auto& v : ni) v = u(rng);
    for (auto& v : nj) v = u(rng);
    for (auto& v : x) v = g(rng);
    const auto packed = pm::pack_pair(pm::merge_experts(wi, wj, ni, nj, 0.4f));
    for (pm::ExpertPos pos : {pm::ExpertPos::first, pm::ExpertPos::second}) {
      const auto fused = pm::gemv_fused(packed, pos, x);
      const auto ref = pm::gemv_reference(pm::unpack_pair(packed, pos).values, x);
      for (std::size_t r = 0; r < rows; ++r) {
        if (std::bit_cast<std::uint32_t>(fused[r]) != std::bit_cast<std::uint32_t>(ref[r])) {
          return {false, "trial " + std::to_string(trial) + " row " + std::to_string(r) + " differs"};
        }
      }
    }
  }
  const double s = seconds_since(t0);
  return {s < kKernelBudgetS, "1000 cases up to 512x512 bit-exact, " + fmt("%.2f s", s)};
}

double arctan_expression(double rho, double tau) {
  const long double r = rho, t = tau;
  return static_cast<double>(2.0L / std::numbers::pi_v<long double> *
                             (std::atan(r * (1 + t) / (1 - t)) - std::atan(r * (1 - t) / (1 + t))));
}

Outcome similarity_theory() {
  const auto t0 = Clock::now();
  const double closed = pm::similarity_fraction_closed(1.0, 0.4);
  bool ok = std::fabs(closed - kClosedTarget) <= kClosedTol &&
            std::fabs(closed - arctan_expression(1.0, 0.4)) <= kClosedTol;
  double worst = 0.0;
  for (double rho : {0.5, 1.0, 2.0}) {
    for (double tau : {0.1, 0.4, 0.7}) {
      const double mc = pm::similarity_fraction_mc(rho, 1.0, tau, 1000000, 99);
      worst = std::max(worst, std::fabs(pm::similarity_fraction_closed(rho, tau) - mc));
    }
  }
  ok = ok && worst < kMcTol;
  const double s = seconds_since(t0);
  return {ok && s < kTheoryBudgetS, "closed(1,0.4) = " + fmt("%.7f", closed) + ", worst |closed - mc| = " +
                                        fmt("%.2e", worst) + ", " + fmt("%.2f s", s)};
}

Outcome bitwidth() {
  const double b = pm::avg_bitwidth(3, 128, 16);
  return {std::fabs(b - kBitwidthTarget) <= kBitwidthTol, "avg_bitwidth(3,128,16) = " + fmt("%.5f", b)};
}

Outcome memory_accounting() {
  const pm::ToyMoEModel base = pm::generate_toy(pm::ToyMoEConfig{});
  pm::CompressOptions half;
  pm::CompressOptions quarter;
  quarter.ratio = 0.25;
  const auto rh = pm::compress(base, half).report;
  const auto rq = pm::compress(base, quarter).report;
  const bool ok = rh.expert_bytes_after * 2 == rh.expert_bytes_before &&
                  rq.expert_bytes_after * 4 == rq.expert_bytes_before * 3;
  return {ok, "ratio 0.5 -> " + std::to_string(rh.expert_bytes_after) + "/" +
                  std::to_string(rh.expert_bytes_before) + ", ratio 0.25 -> " +
                  std::to_string(rq.expert_bytes_after) + "/" + std::to_string(rq.expert_bytes_before)};
}

struct QualityTotals {
  double merge = 0.0, average = 0.0, drop = 0.0;
  int wins_vs_average = 0, wins_vs_drop = 0;
};

QualityTotals quality_over_seeds(pm::GroupingStrategy grouping) {
  constexpr std::size_t kBatches = 16, kBatchTokens = 32;
  constexpr int kSeeds = 8;
  QualityTotals t;
  for (std::uint64_t seed = 0; seed < kSeeds; ++seed) {
    pm::ToyMoEConfig cfg;
    cfg.seed = seed;
    const pm::ToyMoEModel base = pm::generate_toy(cfg, true, 0.05);
    pm::CompressOptions o;
    o.ratio = 0.5;
    o.grouping = grouping;
    o.seed = seed;
    o.calib_tokens = kBatches * kBatchTokens;
    o.calib_seed = 1000 + seed;
    const pm::CompressResult r = pm::compress(base, o);
    const pm::MatrixF x = pm::gaussian_inputs(kBatches * kBatchTokens, cfg.d_model, 2000 + seed);
    const double merged = pm::eval_deviation(base, r.model, x).mean_rel_l2;
    const double averaged = pm::eval_deviation(base, pm::compress_naive_average(base, r.plan), x).mean_rel_l2;
    const double dropped = pm::eval_deviation(base, pm::compress_drop(base, r.plan), x).mean_rel_l2;
    t.wins_vs_average += merged < averaged;
    t.wins_vs_drop += merged < dropped;
    t.merge += merged / kSeeds;
    t.average += averaged / kSeeds;
    t.drop += dropped / kSeeds;
  }
  return t;
}

// Seed-averaged mean_rel_l2 must order strictly under both pairing strategies;
// all three methods share each plan.
Outcome quality_ordering() {
  const auto t0 = Clock::now();
  std::string detail;
  bool ok = true;
  for (auto [grouping, name] : {std::pair{pm::GroupingStrategy::random, "random pairs"},
                                std::pair{pm::GroupingStrategy::search, "searched pairs"}}) {
    const QualityTotals t = quality_over_seeds(grouping);
    ok = ok && t.merge < t.average && t.merge < t.drop;
    detail += std::string(name) + ": merge " + fmt("%.4g", t.merge) + ", average " + fmt("%.4g", t.average) +
              ", drop " + fmt("%.4g", t.drop) + " (per-seed wins " + std::to_string(t.wins_vs_average) + "/8, " +
              std::to_string(t.wins_vs_drop) + "/8); ";
  }
  const double s = seconds_since(t0);
  return {ok && s < kQualityBudgetS, detail + fmt("%.2f s", s)};
}

float bf16_ulp(float v) {
  const unsigned e = pm::Bf16::from_float(v).exponent();
  return std::ldexp(1.0f, static_cast<int>(e) - 127 - 7);
}

Outcome similar_entry_bound() {
  std::mt19937_64 rng(77);
  std::uint64_t similar = 0, salient = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t rows = 1 + rng() % 64, cols = 1 + rng() % 64;
    const float tau = std::uniform_real_distribution<float>(0.0f, 1.0f)(rng);
    const pm::MatrixF wi = pm::testing::random_in_range(rows, cols, rng);
    const pm::MatrixF wj = pm::testing::random_in_range(rows, cols, rng);
    std::vector<float> ni(cols), nj(cols);
    std::uniform_real_distribution<float> u(0.1f, 3.0f);
    for (auto& v : ni) v = u(rng);
    for (auto& v : nj) v = u(rng);
    const pm::MergeArtifacts a = pm::merge_experts(wi, wj, ni, nj, tau);
    const auto packed = pm::pack_pair(a);
    for (pm::ExpertPos pos : {pm::ExpertPos::first, pm::ExpertPos::second}) {
      const bool first = pos == pm::ExpertPos::first;
      const pm::MatrixF& w = first ? wi : wj;
      const pm::MatrixF exact = pm::reconstruct(a, pos);
      const pm::MatrixF stored = pm::unpack_pair(packed, pos).values;
      const auto& sal = first ? a.masks.m_sal_i : a.masks.m_sal_j;
      for (std::size_t k = 0; k < w.size(); ++k) {
        if (a.masks.m_sim[k]) {
          ++similar;
          const double bound = double(tau) * a.w_merged[k] + bf16_ulp(a.w_merged[k]);
          if (std::fabs(double(stored[k]) - w[k]) > bound) {
            return {false, "similar entry exceeds bound in trial " + std::to_string(trial)};
          }
        } else if (sal[k]) {
          ++salient;
          if (exact[k] != w[k]) return {false, "salient entry not exact in trial " + std::to_string(trial)};
        }
      }
    }
  }
  return {true, std::to_string(similar) + " similar and " + std::to_string(salient) +
                    " salient entries checked over 200 random pairs"};
}

Outcome compress_speed() {
  pm::set_max_threads(1);
  const pm::ToyMoEModel base = pm::generate_toy(pm::ToyMoEConfig{});
  const auto t0 = Clock::now();
  const pm::CompressResult r = pm::compress(base, pm::CompressOptions{});
  const double s = seconds_since(t0);
  return {s < kCompressBudgetS && r.report.pairs == 16,
          "default toy model at ratio 0.5 single-threaded in " + fmt("%.3f s", s)};
}

}  // namespace

int main() {
  pm::set_max_threads(1);
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria{
      {"identity merges", identity_merges},
      {"worked example", worked_example},
      {"codec round trip", codec_round_trip},
      {"pack/unpack leaves outputs unchanged", pack_echo},
      {"fused kernel oracle", kernel_oracle},
      {"similar-entry fraction theory", similarity_theory},
      {"average bitwidth", bitwidth},
      {"memory accounting", memory_accounting},
      {"quality ordering", quality_ordering},
      {"similar-entry error bound", similar_entry_bound},
      {"compression speed", compress_speed},
  };
  int failures = 0;
  for (std::size_t k = 0; k < criteria.size(); ++k) {
    Outcome o;
    try {
      o = criteria[k].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failures += !o.pass;
    std::printf("[%s] %2zu %s: %s\n", o.pass ? "PASS" : "FAIL", k + 1, criteria[k].first, o.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%d/%zu criteria passed\n", static_cast<int>(criteria.size()) - failures, criteria.size());
  return failures == 0 ? 0 : 1;
}
