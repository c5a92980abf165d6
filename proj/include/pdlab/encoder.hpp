#pragma once

#include <span>
#include <string>
#include <vector>

#include "pdlab/ops.hpp"
#include "pdlab/params.hpp"
#include "pdlab/rng.hpp"

namespace pdlab {

// One transformer tower (pre-LN blocks with a final layer norm).
struct TowerConfig {
  int layers = 4;
  int d_model = 64;
  int heads = 4;
  int mlp_ratio = 4;
};

struct EncoderConfig {
  TowerConfig text{};
  TowerConfig image{};
  int joint_dim = 32;
  int max_len = 32;  // maximum token positions (SOS..EOS inclusive)
  int image_h = 32;
  int image_w = 16;
  int image_c = 3;
  int patch = 8;
  bool causal_text = false;  // bidirectional by default
  double ln_eps = 1e-5;

  int patch_dim() const { return patch * patch * image_c; }
  int num_patches() const { return (image_h / patch) * (image_w / patch); }
  void validate() const;  // throws TensorError on an invariant violation
};

// Splits an H x W x C row-major image into non-overlapping P x P patches in
// row-major patch order; each output row is one patch flattened (dy, dx, c).
Tensor patchify(const ArrayX& image, int h, int w, int c, int p);
// Exact inverse of patchify.
ArrayX unpatchify(const Tensor& grid, int h, int w, int c, int p);

// texts (B_t x d) @ images (B_i x d)^T: entry (i, j) is the dot product,
// which is the cosine similarity when rows are unit-normalized.
Tensor similarity_matrix(const Tensor& texts, const Tensor& images);

// CLIP-style pair of towers sharing a joint embedding space. Parameters live
// in a ParamStore under "text.*", "image.*", and "logit_scale"; the encoder
// object itself is stateless apart from its config.
class DualEncoder {
 public:
  DualEncoder(EncoderConfig cfg, int vocab_size);

  // Registers every encoder parameter with its initial values. Also registers
  // "logit_scale" = ln(1/0.07).
  void init_params(ParamStore& ps, Rng& rng) const;

  struct Encoded {
    Tensor states;        // final-layer states, one row per sequence position
    Tensor feature;       // rank-1 joint_dim vector, unit L2 norm
    Index feature_pos{};  // row the feature was read from (EOS / CLS slot)
  };

  // Token ids -> embeddings + positions, optional prompt block (no positional
  // embedding) spliced in at insert_at (-1 appends after the EOS end of the
  // sequence, the default layout), transformer, final-LN EOS state projected
  // to the joint space.
  Encoded encode_text(const ParamStore& ps, std::span<const int> ids,
                      const Tensor* prompts = nullptr, Index insert_at = -1) const;

  // Patch grid -> [CLS; patches] embeddings + positions, optional prompt
  // block spliced in at insert_at (0 places it before CLS, the default
  // layout), transformer, final-LN CLS state projected to the joint space.
  Encoded encode_image(const ParamStore& ps, const Tensor& patch_grid,
                       const Tensor* prompts = nullptr, Index insert_at = 0) const;

  // exp(logit_scale) as a graph node.
  Tensor logit_scale(const ParamStore& ps) const;

  const EncoderConfig& config() const { return cfg_; }
  int vocab_size() const { return vocab_size_; }

 private:
  Tensor tower(const ParamStore& ps, const std::string& prefix, const TowerConfig& tc,
               Tensor x, bool causal) const;

  EncoderConfig cfg_;
  int vocab_size_;
};

// Stacks per-sample rank-1 joint features into a B x joint_dim matrix.
Tensor stack_features(const std::vector<Tensor>& features);

}  // namespace pdlab
