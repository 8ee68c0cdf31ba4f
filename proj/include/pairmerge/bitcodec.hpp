// Copyright 2026 The pairmerge Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstdint>

#include "pairmerge/bf16.hpp"
#include "pairmerge/matrix.hpp"
#include "pairmerge/merge.hpp"

namespace pairmerge {

// Packed bf16 ("pbf16") word carrying a merged magnitude plus the masks and
// signs of both experts of a pair:
//
//   bit 15      sign of expert 0
//   bit 14      sign of expert 1
//   bit 13      mask of expert 0
//   bit 12      mask of expert 1
//   bits 11-7   exponent - 112 (exponent clamped to [112, 143])
//   bits 6-0    mantissa
struct PackedWord {
  std::uint16_t bits = 0;
  friend constexpr bool operator==(PackedWord, PackedWord) = default;
};

inline constexpr unsigned kExponentFloor = 112;
inline constexpr unsigned kExponentCeil = 143;

// Tallies exponents clamped by shift_exponent. Not thread-safe; give each
// worker its own counter and merge().
struct SaturationCounter {
  std::uint64_t rounded_up = 0;    // exponent < 112
  std::uint64_t clamped_down = 0;  // exponent > 143

  std::uint64_t total() const { return rounded_up + clamped_down; }
  void merge(const SaturationCounter& other) {
    rounded_up += other.rounded_up;
    clamped_down += other.clamped_down;
  }
};

// Clamps the exponent field of a non-negative finite magnitude into
// [112, 143]; the mantissa is kept. Throws DomainError on a negative,
// NaN or infinite input.
Bf16 shift_exponent(Bf16 magnitude, SaturationCounter* counter = nullptr);

// 5-bit code of an already shifted magnitude.
constexpr unsigned shifted_exponent_code(Bf16 shifted) { return shifted.exponent() - kExponentFloor; }

// Throws DomainError if the magnitude is not non-negative with an in-range
// exponent.
PackedWord pack_word(Bf16 magnitude, unsigned s0, unsigned s1, unsigned m0, unsigned m1);

constexpr Bf16 decode_word(PackedWord p, int expert_pos) {
  const unsigned w = p.bits;
  const unsigned mask_bit = (w >> (13 - expert_pos)) & 1u;
  if (mask_bit == 0) return Bf16{0};
  const unsigned sign_bit = (w >> (15 - expert_pos)) & 1u;
  const unsigned exp = (w & 0x0F80u) + (kExponentFloor << 7);
  return Bf16{static_cast<std::uint16_t>((sign_bit << 15) | exp | (w & 0x007Fu))};
}

// Branch-free form of decode_word for inner loops; same result for every
// word and position.
constexpr std::uint16_t decode_word_bits(std::uint16_t w, int expert_pos) {
  const unsigned mask_bit = (static_cast<unsigned>(w) >> (13 - expert_pos)) & 1u;
  const unsigned sign_bit = (static_cast<unsigned>(w) >> (15 - expert_pos)) & 1u;
  const unsigned value = (sign_bit << 15) | ((w & 0x0F80u) + (kExponentFloor << 7)) | (w & 0x007Fu);
  return static_cast<std::uint16_t>(value & (0u - mask_bit));
}

constexpr Bf16 decode_word(PackedWord p, ExpertPos pos) {
  return decode_word(p, static_cast<int>(pos));
}

struct PackedExpertPair {
  Matrix<std::uint16_t> words;
  std::array<int, 2> pair_id{0, 1};

  std::size_t rows() const { return words.rows(); }
  std::size_t cols() const { return words.cols(); }
  PackedWord at(std::size_t r, std::size_t c) const { return PackedWord{words(r, c)}; }

  friend bool operator==(const PackedExpertPair&, const PackedExpertPair&) = default;
};

// Rounds W_merged to bf16, shifts exponents and packs masks and signs.
// Throws ShapeMismatch if the five matrices disagree in shape.
PackedExpertPair pack_pair(const MergeArtifacts& artifacts, SaturationCounter* counter = nullptr,
                           std::array<int, 2> pair_id = {0, 1});

// Dense bf16 reconstruction of one expert.
ExpertTensor unpack_pair(const PackedExpertPair& packed, ExpertPos pos);

}  // namespace pairmerge
