#pragma once

#include <span>
#include <stdexcept>

#include "pdlab/ops.hpp"

namespace pdlab {

struct LossError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Pairwise similarities scaled by the temperature factor. texts (B_t x d) and
// images (B_i x d) must be unit rows for the entries to be cosines; scale is
// a scalar tensor so a learnable logit scale stays on the tape.
Tensor scaled_similarity(const Tensor& texts, const Tensor& images, const Tensor& scale);

// All contrastive losses below take the already-scaled similarity matrix with
// text rows and image columns, and the person ids aligned with both sides
// (pair k is text k with image k). Every loss is the same kernel — a constant
// weight matrix contracted against log-softmax — so structurally equal
// objectives agree bit-for-bit.

// Text anchors: for each row i, -(1/|P_i|) sum_{j in P_i} log softmax-row,
// where P_i is the set of columns whose id matches id[i]; mean over rows.
Tensor l_t2i(const Tensor& sim, std::span<const int> ids);
// Image anchors: the symmetric column-softmax form.
Tensor l_i2t(const Tensor& sim, std::span<const int> ids);
// l_t2i + l_i2t.
Tensor l_itc(const Tensor& sim, std::span<const int> ids);
// Diagonal-target symmetric cross-entropy; ignores ids entirely. Equals
// l_itc exactly when every id in the batch is unique.
Tensor infonce(const Tensor& sim);

// Shared-classifier cross-entropy: both feature sets (B x joint_dim) pass
// through the same weight matrix (joint_dim x N); the mean is over all 2B
// instances. Throws LossError on an id outside [0, N).
Tensor id_loss(const Tensor& text_feats, const Tensor& image_feats, std::span<const int> ids,
               const Tensor& classifier_w);

// l_itc + lambda * id_loss.
Tensor total_loss(const Tensor& sim, const Tensor& text_feats, const Tensor& image_feats,
                  std::span<const int> ids, const Tensor& classifier_w, double lambda);

}  // namespace pdlab
