// Copyright 2026 The pairmerge Authors
// SPDX-License-Identifier: Apache-2.0

#include "pairmerge/merge.hpp"

#include <cmath>
#include <string>

namespace pairmerge {

ExpertPos expert_pos_from_int(int pos) {
  if (pos != 0 && pos != 1) {
    throw InvalidArgument("expert_pos must be 0 or 1, got " + std::to_string(pos));
  }
  return static_cast<ExpertPos>(pos);
}

namespace {

float delta(float a, float b) {
  const float ma = std::fabs(a);
  const float mb = std::fabs(b);
  const float sum = ma + mb;
  if (sum == 0.0f) return 0.0f;
  return std::fabs(ma - mb) / sum;
}

void require_finite(const MatrixF& m, const char* what) {
  for (float v : m.flat()) {
    if (!std::isfinite(v)) throw DomainError(std::string(what) + " has a non-finite entry");
  }
}

}  // namespace

MatrixF similarity_delta(const MatrixF& w_i, const MatrixF& w_j) {
  require_same_shape(w_i, w_j, "similarity_delta");
  MatrixF out(w_i.rows(), w_i.cols());
  for (std::size_t k = 0; k < out.size(); ++k) out[k] = delta(w_i[k], w_j[k]);
  return out;
}

MaskSet build_masks(const MatrixF& w_i, const MatrixF& w_j, std::span<const float> norms_i,
                    std::span<const float> norms_j, float tau_sim) {
  require_same_shape(w_i, w_j, "build_masks");
  if (norms_i.size() != w_i.cols() || norms_j.size() != w_j.cols()) {
    throw ShapeMismatch("build_masks: norm vectors must have length in_features = " +
                        std::to_string(w_i.cols()));
  }
  if (!(tau_sim >= 0.0f && tau_sim <= 1.0f)) {
    throw InvalidThreshold("tau_sim must lie in [0, 1], got " + std::to_string(tau_sim));
  }
  require_finite(w_i, "w_i");
  require_finite(w_j, "w_j");

  const std::size_t rows = w_i.rows();
  const std::size_t cols = w_i.cols();
  MaskSet m{BitMatrix(rows, cols), BitMatrix(rows, cols), BitMatrix(rows, cols),
            BitMatrix(rows, cols), BitMatrix(rows, cols)};
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) {
      const float a = w_i(r, c);
      const float b = w_j(r, c);
      const std::uint8_t sim = delta(a, b) <= tau_sim ? 1 : 0;
      const float sal_i = std::fabs(a) * norms_i[c];
      const float sal_j = std::fabs(b) * norms_j[c];
      const std::uint8_t pick_i = sal_i >= sal_j ? 1 : 0;
      m.m_sim(r, c) = sim;
      m.m_sal_i(r, c) = pick_i;
      m.m_sal_j(r, c) = 1 - pick_i;
      m.m_i(r, c) = pick_i | sim;
      m.m_j(r, c) = (1 - pick_i) | sim;
    }
  }
  return m;
}

MergeArtifacts merge_pair(const MatrixF& w_i, const MatrixF& w_j, const MaskSet& masks) {
  require_same_shape(w_i, w_j, "merge_pair");
  require_same_shape(w_i, masks.m_sim, "merge_pair masks");
  require_same_shape(w_i, masks.m_sal_i, "merge_pair masks");
  require_same_shape(w_i, masks.m_sal_j, "merge_pair masks");
  require_same_shape(w_i, masks.m_i, "merge_pair masks");
  require_same_shape(w_i, masks.m_j, "merge_pair masks");

  const std::size_t rows = w_i.rows();
  const std::size_t cols = w_i.cols();
  MergeArtifacts out{MatrixF(rows, cols), masks, BitMatrix(rows, cols), BitMatrix(rows, cols)};
  for (std::size_t k = 0; k < w_i.size(); ++k) {
    const float a = std::fabs(w_i[k]);
    const float b = std::fabs(w_j[k]);
    float merged;
    if (masks.m_sim[k]) {
      merged = (a + b) * 0.5f;
    } else {
      merged = masks.m_sal_i[k] ? a : b;
    }
    out.w_merged[k] = merged;
    out.s_i[k] = w_i[k] < 0.0f ? 1 : 0;
    out.s_j[k] = w_j[k] < 0.0f ? 1 : 0;
  }
  return out;
}

MatrixF reconstruct(const MergeArtifacts& artifacts, ExpertPos pos) {
  const bool first = pos == ExpertPos::first;
  const BitMatrix& mask = first ? artifacts.masks.m_i : artifacts.masks.m_j;
  const BitMatrix& sign = first ? artifacts.s_i : artifacts.s_j;
  MatrixF out(artifacts.rows(), artifacts.cols());
  for (std::size_t k = 0; k < out.size(); ++k) {
    if (!mask[k]) continue;
    const float v = artifacts.w_merged[k];
    out[k] = sign[k] ? -v : v;
  }
  return out;
}

MergeArtifacts merge_experts(const MatrixF& w_i, const MatrixF& w_j,
                             std::span<const float> norms_i, std::span<const float> norms_j,
                             float tau_sim) {
  return merge_pair(w_i, w_j, build_masks(w_i, w_j, norms_i, norms_j, tau_sim));
}

}  // namespace pairmerge
