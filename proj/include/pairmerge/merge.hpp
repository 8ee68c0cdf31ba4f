// Copyright 2026 The pairmerge Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <span>

#include "pairmerge/matrix.hpp"

namespace pairmerge {

// Position of an expert inside a merged pair: 0 is the first expert (i),
// 1 the second (j).
enum class ExpertPos : int { first = 0, second = 1 };

ExpertPos expert_pos_from_int(int pos);

struct MaskSet {
  BitMatrix m_sim;    // 1 where the two magnitudes are similar
  BitMatrix m_sal_i;  // 1 where expert i is at least as salient
  BitMatrix m_sal_j;  // complement of m_sal_i
  BitMatrix m_i;      // m_sal_i | m_sim
  BitMatrix m_j;      // m_sal_j | m_sim
};

struct MergeArtifacts {
  MatrixF w_merged;  // non-negative magnitudes
  MaskSet masks;
  BitMatrix s_i;  // 1 where W_i < 0
  BitMatrix s_j;  // 1 where W_j < 0

  std::size_t rows() const { return w_merged.rows(); }
  std::size_t cols() const { return w_merged.cols(); }
};

// Symmetric percent difference of magnitudes, element-wise.
// Entries where both weights are exactly zero get 0.
MatrixF similarity_delta(const MatrixF& w_i, const MatrixF& w_j);

// Similarity and saliency masks. norms_i/norms_j are per-input-feature
// activation L2 norms (length cols), broadcast across output rows.
// Saliency ties go to expert i.
MaskSet build_masks(const MatrixF& w_i, const MatrixF& w_j, std::span<const float> norms_i,
                    std::span<const float> norms_j, float tau_sim);

MergeArtifacts merge_pair(const MatrixF& w_i, const MatrixF& w_j, const MaskSet& masks);

// (-1)^S * M * W_merged for the selected expert. Masked-out entries are +0.
MatrixF reconstruct(const MergeArtifacts& artifacts, ExpertPos pos);

// Convenience: build_masks followed by merge_pair.
MergeArtifacts merge_experts(const MatrixF& w_i, const MatrixF& w_j,
                             std::span<const float> norms_i, std::span<const float> norms_j,
                             float tau_sim);

}  // namespace pairmerge
