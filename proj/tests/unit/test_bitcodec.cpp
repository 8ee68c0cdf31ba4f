// Copyright 2026 The pairmerge Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "pairmerge/bitcodec.hpp"
#include "support/oracles.hpp"

namespace pairmerge {
namespace {

using testing::literal_decode;
using testing::from_rows;

TEST(Bf16, RoundTripThroughFloatIsIdentityForNonNan) {
  for (std::uint32_t b = 0; b <= 0xFFFF; ++b) {
    const Bf16 w{static_cast<std::uint16_t>(b)};
    if (w.is_nan()) continue;
    ASSERT_EQ(Bf16::from_float(w.to_float()).bits, w.bits) << b;
  }
}

TEST(Bf16, RoundsToNearestEven) {
  // 1 + 2^-8 sits exactly between 1.0 and the next bf16 value; ties go even.
  EXPECT_EQ(Bf16::from_float(1.0f + 0x1p-8f).bits, 0x3F80);
  EXPECT_EQ(Bf16::from_float(1.0f + 0x1p-8f + 0x1p-20f).bits, 0x3F81);
  EXPECT_EQ(Bf16::from_float(1.0f + 3 * 0x1p-8f).bits, 0x3F82);
  EXPECT_TRUE(Bf16::from_float(std::nanf("")).is_nan());
}

TEST(ShiftExponent, InRangeIsUnchanged) {
  SaturationCounter n;
  const Bf16 one = Bf16::from_float(1.0f);
  const Bf16 s = shift_exponent(one, &n);
  EXPECT_EQ(s.bits, one.bits);
  EXPECT_EQ(shifted_exponent_code(s), 15u);
  EXPECT_EQ(n.total(), 0u);
}

TEST(ShiftExponent, SmallExponentRoundsUpTo112) {
  SaturationCounter n;
  const Bf16 s = shift_exponent(Bf16::from_float(0x1p-20f), &n);
  EXPECT_EQ(s.to_float(), 3.0517578125e-5f);
  EXPECT_EQ(shifted_exponent_code(s), 0u);
  EXPECT_EQ(n.rounded_up, 1u);
}

TEST(ShiftExponent, ZeroBecomesSmallestPackableValue) {
  SaturationCounter n;
  const Bf16 s = shift_exponent(Bf16::from_float(0.0f), &n);
  EXPECT_EQ(s.to_float(), 0x1p-15f);
  EXPECT_EQ(shifted_exponent_code(s), 0u);
  EXPECT_EQ(n.rounded_up, 1u);
}

TEST(ShiftExponent, LargeExponentSaturatesAt143) {
  SaturationCounter n;
  const Bf16 big = Bf16::from_float(0x1.8p20f);  // exponent 147
  const Bf16 s = shift_exponent(big, &n);
  EXPECT_EQ(s.exponent(), 143u);
  EXPECT_EQ(s.mantissa(), big.mantissa());
  EXPECT_EQ(n.clamped_down, 1u);
}

TEST(ShiftExponent, RejectsNegativeAndNonFinite) {
  EXPECT_THROW(shift_exponent(Bf16::from_float(-1.0f)), DomainError);
  EXPECT_THROW(shift_exponent(Bf16::from_float(INFINITY)), DomainError);
  EXPECT_THROW(shift_exponent(Bf16::from_float(NAN)), DomainError);
}

TEST(ShiftExponent, SaturationIsMonotone) {
  for (std::uint32_t b = 0; b < 0x7F80; ++b) {
    const Bf16 w{static_cast<std::uint16_t>(b)};
    const float before = w.to_float();
    const float after = shift_exponent(w).to_float();
    if (w.exponent() > kExponentCeil) ASSERT_LE(after, before);
    if (w.exponent() < kExponentFloor) ASSERT_GE(after, before);
  }
}

TEST(PackWord, LayoutExamples) {
  EXPECT_EQ(pack_word(Bf16::from_float(1.0f), 0, 1, 1, 1).bits, 0x7780);
  EXPECT_EQ(pack_word(Bf16::from_float(0.5f), 1, 0, 1, 0).bits, 0xA700);
  EXPECT_EQ(pack_word(Bf16::from_float(1.0f), 0, 0, 0, 0).bits, 0x0780);
}

TEST(PackWord, RejectsUnshiftedMagnitude) {
  EXPECT_THROW(pack_word(Bf16::from_float(0x1p-20f), 0, 0, 1, 1), DomainError);
  EXPECT_THROW(pack_word(Bf16::from_float(-1.0f), 0, 0, 1, 1), DomainError);
}

TEST(DecodeWord, Examples) {
  EXPECT_EQ(decode_word(PackedWord{0x7780}, 0).bits, 0x3F80);
  EXPECT_EQ(decode_word(PackedWord{0x7780}, 1).bits, 0xBF80);
  EXPECT_EQ(decode_word(PackedWord{0xA700}, 1).bits, 0x0000);
}

TEST(DecodeWord, MatchesTranscriptionOnEveryWord) {
  for (std::uint32_t w = 0; w <= 0xFFFF; ++w) {
    for (int pos = 0; pos < 2; ++pos) {
      const auto word = static_cast<std::uint16_t>(w);
      const std::uint16_t expected = literal_decode(word, pos);
      ASSERT_EQ(decode_word(PackedWord{word}, pos).bits, expected);
      ASSERT_EQ(decode_word_bits(word, pos), expected);
    }
  }
}

TEST(DecodeWord, OutputIsZeroOrInPackableRange) {
  for (std::uint32_t w = 0; w <= 0xFFFF; ++w) {
    for (int pos = 0; pos < 2; ++pos) {
      const Bf16 d = decode_word(PackedWord{static_cast<std::uint16_t>(w)}, pos);
      if (d.bits == 0) continue;
      ASSERT_GE(d.exponent(), kExponentFloor);
      ASSERT_LE(d.exponent(), kExponentCeil);
    }
  }
}

TEST(DecodeWord, HeaderBitsNeverChangeMagnitude) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 20000; ++trial) {
    const auto w = static_cast<std::uint16_t>(rng());
    for (int pos = 0; pos < 2; ++pos) {
      const Bf16 d = decode_word(PackedWord{w}, pos);
      if (d.bits == 0) continue;
      for (int bit = 12; bit < 16; ++bit) {
        const Bf16 flipped = decode_word(PackedWord{static_cast<std::uint16_t>(w ^ (1u << bit))}, pos);
        if (flipped.bits == 0) continue;
        ASSERT_EQ(flipped.bits & 0x7FFF, d.bits & 0x7FFF);
      }
    }
  }
}

MergeArtifacts one_by_one(float w, std::uint8_t si, std::uint8_t sj, std::uint8_t mi, std::uint8_t mj) {
  MergeArtifacts a;
  a.w_merged = MatrixF(1, 1, w);
  a.s_i = BitMatrix(1, 1, si);
  a.s_j = BitMatrix(1, 1, sj);
  a.masks.m_i = BitMatrix(1, 1, mi);
  a.masks.m_j = BitMatrix(1, 1, mj);
  a.masks.m_sim = BitMatrix(1, 1, mi & mj);
  a.masks.m_sal_i = BitMatrix(1, 1, mi);
  a.masks.m_sal_j = BitMatrix(1, 1, 1 - mi);
  return a;
}

TEST(PackPair, OneByOne) {
  const PackedExpertPair p = pack_pair(one_by_one(1.0f, 0, 1, 1, 1));
  ASSERT_EQ(p.rows(), 1u);
  EXPECT_EQ(p.words(0, 0), 0x7780);
}

TEST(PackPair, EmptyMatrices) {
  MergeArtifacts a;
  const PackedExpertPair p = pack_pair(a);
  EXPECT_EQ(p.rows(), 0u);
  EXPECT_EQ(p.cols(), 0u);
  EXPECT_EQ(unpack_pair(p, ExpertPos::first).values.size(), 0u);
}

TEST(PackPair, ShapeMismatchIsReported) {
  MergeArtifacts a = one_by_one(1.0f, 0, 0, 1, 1);
  a.s_j = BitMatrix(2, 1);
  EXPECT_THROW(pack_pair(a), ShapeMismatch);
}

TEST(PackPair, SelfMergeUnpacksToSource) {
  std::mt19937_64 rng(11);
  const MatrixF w = testing::random_in_range(17, 23, rng);
  const std::vector<float> norms(23, 1.0f);
  const MergeArtifacts m = merge_experts(w, w, norms, norms, 0.4f);
  const PackedExpertPair p = pack_pair(m);
  EXPECT_EQ(unpack_pair(p, ExpertPos::first).values, w);
  EXPECT_EQ(unpack_pair(p, ExpertPos::second).values, w);
}

TEST(PackPair, WorkedPairUnpacksToReconstruction) {
  const MatrixF wi = from_rows({{0.5f, -1.0f}, {0.25f, 2.0f}});
  const MatrixF wj = from_rows({{0.6f, 1.0f}, {-1.0f, 0.1f}});
  const std::vector<float> ones(2, 1.0f);
  const PackedExpertPair p = pack_pair(merge_experts(wi, wj, ones, ones, 0.4f));
  const ExpertTensor r0 = unpack_pair(p, ExpertPos::first);
  // 0.55 is not representable; it decodes to its nearest bf16.
  EXPECT_EQ(r0.values(0, 0), round_to_bf16(0.55f));
  EXPECT_EQ(r0.values(0, 1), -1.0f);
  EXPECT_EQ(r0.values(1, 0), 0.0f);
  EXPECT_EQ(r0.values(1, 1), 2.0f);
  EXPECT_EQ(r0.dtype, DType::bf16);
}

TEST(PackPair, MaskCompletenessAcrossPositions) {
  std::mt19937_64 rng(5);
  const MatrixF wi = testing::random_in_range(32, 32, rng);
  const MatrixF wj = testing::random_in_range(32, 32, rng);
  std::vector<float> ni(32), nj(32);
  for (auto& v : ni) v = 0.5f + static_cast<float>(rng() % 100) / 50.0f;
  for (auto& v : nj) v = 0.5f + static_cast<float>(rng() % 100) / 50.0f;
  const PackedExpertPair p = pack_pair(merge_experts(wi, wj, ni, nj, 0.3f));
  const MatrixF a = unpack_pair(p, ExpertPos::first).values;
  const MatrixF b = unpack_pair(p, ExpertPos::second).values;
  for (std::size_t k = 0; k < a.size(); ++k) {
    ASSERT_TRUE(a[k] != 0.0f || b[k] != 0.0f);
    ASSERT_TRUE(((p.words[k] >> 12) & 3u) != 0);
  }
}

TEST(PackPair, RoundTripPropertyOverHeadersAndPayloads) {
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 5000; ++trial) {
    const unsigned e = kExponentFloor + static_cast<unsigned>(rng() % 32);
    const unsigned mant = static_cast<unsigned>(rng() % 128);
    const Bf16 mag{static_cast<std::uint16_t>((e << 7) | mant)};
    const unsigned header = static_cast<unsigned>(rng() % 16);
    const unsigned s0 = header >> 3 & 1, s1 = header >> 2 & 1, m0 = header >> 1 & 1, m1 = header & 1;
    const PackedWord w = pack_word(mag, s0, s1, m0, m1);
    const float v = mag.to_float();
    ASSERT_EQ(decode_word(w, 0).to_float(), m0 ? (s0 ? -v : v) : 0.0f);
    ASSERT_EQ(decode_word(w, 1).to_float(), m1 ? (s1 ? -v : v) : 0.0f);
  }
}

}  // namespace
}  // namespace pairmerge
