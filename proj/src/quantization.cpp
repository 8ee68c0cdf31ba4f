// Copyright 2026 The pairmerge Authors
// SPDX-License-Identifier: Apache-2.0

#include "pairmerge/quantization.hpp"

#include <algorithm>
#include <cmath>
#include <regex>

namespace pairmerge {

QuantizedTensor quantize_group(const MatrixF& magnitudes, int bits, int group_size) {
  if (bits < 2 || bits > 16) throw InvalidBits("bits must lie in [2, 16], got " + std::to_string(bits));
  if (group_size < 1) throw InvalidArgument("group_size must be >= 1");
  QuantizedTensor q;
  q.rows = magnitudes.rows();
  q.cols = magnitudes.cols();
  q.bits = bits;
  q.group_size = group_size;
  const auto values = magnitudes.flat();
  q.codes.resize(values.size());
  const float levels = static_cast<float>((1u << bits) - 1u);
  const auto g = static_cast<std::size_t>(group_size);
  for (std::size_t begin = 0; begin < values.size(); begin += g) {
    const std::size_t end = std::min(values.size(), begin + g);
    float max = 0.0f;
    for (std::size_t k = begin; k < end; ++k) {
      if (!(values[k] >= 0.0f) || !std::isfinite(values[k])) {
        throw InvalidArgument("quantize_group expects finite non-negative magnitudes");
      }
      max = std::max(max, values[k]);
    }
    const float scale = max == 0.0f ? 1.0f : max / levels;
    q.scales.push_back(scale);
    for (std::size_t k = begin; k < end; ++k) {
      // v * levels / max in f64 keeps exact ties (e.g. 3.5) exact.
      const double code =
          max == 0.0f ? 0.0 : std::round(static_cast<double>(values[k]) * levels / max);
      q.codes[k] = static_cast<std::uint16_t>(std::clamp(code, 0.0, static_cast<double>(levels)));
    }
  }
  return q;
}

MatrixF QuantizedTensor::dequantize() const {
  MatrixF out(rows, cols);
  const auto g = static_cast<std::size_t>(group_size);
  for (std::size_t k = 0; k < codes.size(); ++k) {
    out[k] = static_cast<float>(codes[k]) * scales[k / g];
  }
  return out;
}

std::string QuantizedTensor::dtype() const {
  return "q" + std::to_string(bits) + "g" + std::to_string(group_size);
}

double avg_bitwidth(int quant_bits, int group_size, int scale_bits) {
  if (quant_bits < 1 || group_size < 1 || scale_bits < 1) {
    throw InvalidArgument("avg_bitwidth arguments must be positive");
  }
  constexpr double kSignBits = 2.0;
  const double mask_bits = std::log2(3.0);
  return (kSignBits + mask_bits + quant_bits + static_cast<double>(scale_bits) / group_size) / 2.0;
}

std::vector<std::uint8_t> pack_codes(const std::vector<std::uint16_t>& codes, int bits) {
  const std::size_t total_bits = codes.size() * static_cast<std::size_t>(bits);
  std::vector<std::uint8_t> out((total_bits + 7) / 8, 0);
  std::size_t pos = 0;
  for (std::uint16_t code : codes) {
    for (int b = 0; b < bits; ++b, ++pos) {
      if ((code >> b) & 1u) out[pos / 8] |= static_cast<std::uint8_t>(1u << (pos % 8));
    }
  }
  return out;
}

std::vector<std::uint16_t> unpack_codes(const std::vector<std::uint8_t>& bytes, int bits,
                                        std::size_t count) {
  std::vector<std::uint16_t> out(count, 0);
  std::size_t pos = 0;
  for (std::size_t k = 0; k < count; ++k) {
    std::uint16_t code = 0;
    for (int b = 0; b < bits; ++b, ++pos) {
      if ((bytes.at(pos / 8) >> (pos % 8)) & 1u) code |= static_cast<std::uint16_t>(1u << b);
    }
    out[k] = code;
  }
  return out;
}

bool parse_quant_dtype(const std::string& dtype, int& bits, int& group_size) {
  static const std::regex pattern("q([0-9]+)g([0-9]+)");
  std::smatch m;
  if (!std::regex_match(dtype, m, pattern)) return false;
  bits = std::stoi(m[1].str());
  group_size = std::stoi(m[2].str());
  return bits >= 2 && bits <= 16 && group_size >= 1;
}

}  // namespace pairmerge
