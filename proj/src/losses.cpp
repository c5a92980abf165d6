#include "pdlab/losses.hpp"

#include <string>

#include "pdlab/encoder.hpp"
#include <vector>

namespace pdlab {
namespace {

// -sum(weights ⊙ log_softmax(sim, axis)). weights is a plain constant array
// laid out like sim. Every public loss reduces to this one contraction.
Tensor weighted_nll(const Tensor& sim, const ArrayX& weights, int axis) {
  Tensor w = Tensor::from_array(sim.shape(), weights);
  return neg(sum(mul(log_softmax(sim, axis), w)));
}

void check_sim_and_ids(const Tensor& sim, std::span<const int> ids) {
  if (sim.rank() != 2) throw LossError("similarity matrix must be rank-2");
  if (sim.rows() != static_cast<Index>(ids.size()) || sim.cols() != static_cast<Index>(ids.size()))
    throw LossError("ids must align with both sides of the similarity matrix (got " +
                    std::to_string(ids.size()) + " ids for " + std::to_string(sim.rows()) + "x" +
                    std::to_string(sim.cols()) + " similarities)");
  if (ids.empty()) throw LossError("empty batch");
}

// Weight matrix for text anchors (rows): W[i][j] = 1 / (B * |P_i|) when
// id[j] == id[i], else 0. Transposing the roles gives the image-anchor case.
ArrayX anchor_weights(std::span<const int> ids, bool text_anchors) {
  const Index b = static_cast<Index>(ids.size());
  std::vector<Index> positives(ids.size(), 0);
  for (std::size_t i = 0; i < ids.size(); ++i)
    for (std::size_t j = 0; j < ids.size(); ++j)
      if (ids[j] == ids[i]) ++positives[i];
  for (std::size_t i = 0; i < ids.size(); ++i)
    if (positives[i] == 0) throw LossError("anchor " + std::to_string(i) + " has no positives");
  ArrayX w = ArrayX::Zero(b * b);
  for (Index i = 0; i < b; ++i)
    for (Index j = 0; j < b; ++j)
      if (ids[j] == ids[i]) {
        const Index anchor = text_anchors ? i : j;
        w[i * b + j] = 1.0 / static_cast<double>(b * positives[anchor]);
      }
  return w;
}

ArrayX diagonal_weights(Index b) {
  ArrayX w = ArrayX::Zero(b * b);
  for (Index i = 0; i < b; ++i) w[i * b + i] = 1.0 / static_cast<double>(b * 1);
  return w;
}

}  // namespace

Tensor scaled_similarity(const Tensor& texts, const Tensor& images, const Tensor& scale) {
  if (!scale.is_scalar()) throw LossError("similarity scale must be a scalar tensor");
  return mul(similarity_matrix(texts, images), scale);
}

Tensor l_t2i(const Tensor& sim, std::span<const int> ids) {
  check_sim_and_ids(sim, ids);
  return weighted_nll(sim, anchor_weights(ids, /*text_anchors=*/true), /*axis=*/1);
}

Tensor l_i2t(const Tensor& sim, std::span<const int> ids) {
  check_sim_and_ids(sim, ids);
  return weighted_nll(sim, anchor_weights(ids, /*text_anchors=*/false), /*axis=*/0);
}

Tensor l_itc(const Tensor& sim, std::span<const int> ids) {
  return add(l_t2i(sim, ids), l_i2t(sim, ids));
}

Tensor infonce(const Tensor& sim) {
  if (sim.rank() != 2 || sim.rows() != sim.cols())
    throw LossError("diagonal-target loss needs a square similarity matrix");
  if (sim.rows() == 0) throw LossError("empty batch");
  const ArrayX w = diagonal_weights(sim.rows());
  return add(weighted_nll(sim, w, /*axis=*/1), weighted_nll(sim, w, /*axis=*/0));
}

Tensor id_loss(const Tensor& text_feats, const Tensor& image_feats, std::span<const int> ids,
               const Tensor& classifier_w) {
  if (text_feats.rank() != 2 || image_feats.rank() != 2 || classifier_w.rank() != 2)
    throw LossError("id_loss expects rank-2 features and classifier weights");
  const Index b = text_feats.rows();
  if (image_feats.rows() != b) throw LossError("text and image batches differ in size");
  if (b == 0) throw LossError("empty batch");
  if (static_cast<Index>(ids.size()) != b) throw LossError("ids must align with the batch");
  if (text_feats.cols() != classifier_w.rows() || image_feats.cols() != classifier_w.rows())
    throw LossError("feature width does not match the classifier");
  const Index n = classifier_w.cols();
  for (std::size_t i = 0; i < ids.size(); ++i)
    if (ids[i] < 0 || static_cast<Index>(ids[i]) >= n)
      throw LossError("id " + std::to_string(ids[i]) + " outside the classifier range [0, " +
                      std::to_string(n) + ")");

  ArrayX w = ArrayX::Zero(b * n);
  for (Index i = 0; i < b; ++i) w[i * n + ids[i]] = 1.0 / static_cast<double>(2 * b);
  Tensor logits_t = matmul(text_feats, classifier_w);
  Tensor logits_v = matmul(image_feats, classifier_w);
  return add(weighted_nll(logits_t, w, /*axis=*/1), weighted_nll(logits_v, w, /*axis=*/1));
}

Tensor total_loss(const Tensor& sim, const Tensor& text_feats, const Tensor& image_feats,
                  std::span<const int> ids, const Tensor& classifier_w, double lambda) {
  if (lambda < 0) throw LossError("negative id-loss weight");
  Tensor contrastive = l_itc(sim, ids);
  if (lambda == 0) return contrastive;
  return add(contrastive, scale(id_loss(text_feats, image_feats, ids, classifier_w), lambda));
}

}  // namespace pdlab
