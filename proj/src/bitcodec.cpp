// Copyright 2026 The pairmerge Authors
// SPDX-License-Identifier: Apache-2.0

#include "pairmerge/bitcodec.hpp"

#include <string>

namespace pairmerge {

Bf16 shift_exponent(Bf16 magnitude, SaturationCounter* counter) {
  if (magnitude.sign() != 0 || magnitude.is_nan() || magnitude.is_inf()) {
    throw DomainError("shift_exponent expects a non-negative finite magnitude");
  }
  unsigned e = magnitude.exponent();
  if (e < kExponentFloor) {
    e = kExponentFloor;
    if (counter) ++counter->rounded_up;
  } else if (e > kExponentCeil) {
    e = kExponentCeil;
    if (counter) ++counter->clamped_down;
  }
  return Bf16{static_cast<std::uint16_t>((e << 7) | magnitude.mantissa())};
}

PackedWord pack_word(Bf16 magnitude, unsigned s0, unsigned s1, unsigned m0, unsigned m1) {
  const unsigned e = magnitude.exponent();
  if (magnitude.sign() != 0 || e < kExponentFloor || e > kExponentCeil) {
    throw DomainError("pack_word expects a shifted non-negative magnitude, got bits " +
                      std::to_string(magnitude.bits));
  }
  const unsigned header = ((s0 & 1u) << 15) | ((s1 & 1u) << 14) | ((m0 & 1u) << 13) |
                          ((m1 & 1u) << 12);
  const unsigned payload = ((e - kExponentFloor) << 7) | magnitude.mantissa();
  return PackedWord{static_cast<std::uint16_t>(header | payload)};
}

PackedExpertPair pack_pair(const MergeArtifacts& a, SaturationCounter* counter,
                           std::array<int, 2> pair_id) {
  require_same_shape(a.w_merged, a.s_i, "pack_pair S_i");
  require_same_shape(a.w_merged, a.s_j, "pack_pair S_j");
  require_same_shape(a.w_merged, a.masks.m_i, "pack_pair M_i");
  require_same_shape(a.w_merged, a.masks.m_j, "pack_pair M_j");

  PackedExpertPair out{Matrix<std::uint16_t>(a.rows(), a.cols()), pair_id};
  SaturationCounter local;
  for (std::size_t k = 0; k < a.w_merged.size(); ++k) {
    const Bf16 shifted = shift_exponent(Bf16::from_float(a.w_merged[k]), &local);
    out.words[k] = pack_word(shifted, a.s_i[k], a.s_j[k], a.masks.m_i[k], a.masks.m_j[k]).bits;
  }
  if (counter) counter->merge(local);
  return out;
}

ExpertTensor unpack_pair(const PackedExpertPair& packed, ExpertPos pos) {
  ExpertTensor out{MatrixF(packed.rows(), packed.cols()), DType::bf16};
  const auto words = packed.words.flat();
  for (std::size_t k = 0; k < words.size(); ++k) {
    out.values[k] = decode_word(PackedWord{words[k]}, pos).to_float();
  }
  return out;
}

}  // namespace pairmerge
