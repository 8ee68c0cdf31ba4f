// Copyright 2026 The pairmerge Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <bit>
#include <cstdint>

namespace pairmerge {

// Brain float 16: bit 15 sign, bits 14-7 exponent (bias 127), bits 6-0 mantissa.
struct Bf16 {
  std::uint16_t bits = 0;

  static constexpr Bf16 from_bits(std::uint16_t b) { return Bf16{b}; }

  // Round-to-nearest-even. NaN stays NaN (quiet bit forced).
  static constexpr Bf16 from_float(float f) {
    const std::uint32_t u = std::bit_cast<std::uint32_t>(f);
    if ((u & 0x7F800000u) == 0x7F800000u && (u & 0x007FFFFFu) != 0) {
      return Bf16{static_cast<std::uint16_t>((u >> 16) | 0x0040u)};
    }
    const std::uint32_t lsb = (u >> 16) & 1u;
    return Bf16{static_cast<std::uint16_t>((u + 0x7FFFu + lsb) >> 16)};
  }

  constexpr float to_float() const {
    return std::bit_cast<float>(static_cast<std::uint32_t>(bits) << 16);
  }

  constexpr unsigned sign() const { return bits >> 15; }
  constexpr unsigned exponent() const { return (bits >> 7) & 0xFFu; }
  constexpr unsigned mantissa() const { return bits & 0x7Fu; }
  constexpr bool is_nan() const { return exponent() == 0xFF && mantissa() != 0; }
  constexpr bool is_inf() const { return exponent() == 0xFF && mantissa() == 0; }

  friend constexpr bool operator==(Bf16, Bf16) = default;
};

// Rounds an f32 value to the nearest bf16 value, returned as f32.
constexpr float round_to_bf16(float f) { return Bf16::from_float(f).to_float(); }

}  // namespace pairmerge
