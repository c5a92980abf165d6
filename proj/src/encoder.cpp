#include "pdlab/encoder.hpp"

#include <cmath>

#include "pdlab/prompts.hpp"

namespace pdlab {

void EncoderConfig::validate() const {
  auto check_tower = [](const char* which, const TowerConfig& t) {
    if (t.layers < 1 || t.d_model < 1 || t.heads < 1 || t.mlp_ratio < 1) {
      throw TensorError(std::string(which) + " tower: all sizes must be positive");
    }
    if (t.d_model % t.heads != 0) {
      throw TensorError(std::string(which) + " tower: width " + std::to_string(t.d_model) +
                        " not divisible by " + std::to_string(t.heads) + " heads");
    }
  };
  check_tower("text", text);
  check_tower("image", image);
  if (joint_dim < 1) throw TensorError("joint_dim must be positive");
  if (max_len < 3) throw TensorError("max_len must fit SOS, one word, and EOS");
  if (patch < 1 || image_h % patch != 0 || image_w % patch != 0) {
    throw TensorError("image " + std::to_string(image_h) + "x" + std::to_string(image_w) +
                      " not tileable by patch size " + std::to_string(patch));
  }
}

Tensor patchify(const ArrayX& image, int h, int w, int c, int p) {
  if (p < 1 || h % p != 0 || w % p != 0) {
    throw TensorError("patchify: image " + std::to_string(h) + "x" + std::to_string(w) +
                      " not tileable by patch size " + std::to_string(p));
  }
  if (image.size() != static_cast<Index>(h) * w * c) {
    throw TensorError("patchify: buffer holds " + std::to_string(image.size()) +
                      " values, image needs " + std::to_string(h * w * c));
  }
  const int rows = h / p, cols = w / p;
  const Index n = static_cast<Index>(rows) * cols;
  const Index pd = static_cast<Index>(p) * p * c;
  ArrayX out(n * pd);
  Index o = 0;
  for (int pr = 0; pr < rows; ++pr) {
    for (int pc = 0; pc < cols; ++pc) {
      for (int dy = 0; dy < p; ++dy) {
        for (int dx = 0; dx < p; ++dx) {
          for (int ch = 0; ch < c; ++ch) {
            const Index src = (static_cast<Index>(pr * p + dy) * w + (pc * p + dx)) * c + ch;
            out(o++) = image(src);
          }
        }
      }
    }
  }
  return Tensor::from_array({n, pd}, std::move(out));
}

ArrayX unpatchify(const Tensor& grid, int h, int w, int c, int p) {
  const int rows = h / p, cols = w / p;
  const Index pd = static_cast<Index>(p) * p * c;
  if (grid.rank() != 2 || grid.rows() != static_cast<Index>(rows) * cols || grid.cols() != pd) {
    throw TensorError("unpatchify: grid shape " + shape_str(grid.shape()) +
                      " does not match image " + std::to_string(h) + "x" + std::to_string(w));
  }
  ArrayX img(static_cast<Index>(h) * w * c);
  Index o = 0;
  for (int pr = 0; pr < rows; ++pr) {
    for (int pc = 0; pc < cols; ++pc) {
      for (int dy = 0; dy < p; ++dy) {
        for (int dx = 0; dx < p; ++dx) {
          for (int ch = 0; ch < c; ++ch) {
            const Index dst = (static_cast<Index>(pr * p + dy) * w + (pc * p + dx)) * c + ch;
            img(dst) = grid.array()(o++);
          }
        }
      }
    }
  }
  return img;
}

Tensor similarity_matrix(const Tensor& texts, const Tensor& images) {
  if (texts.rank() != 2 || images.rank() != 2 || texts.cols() != images.cols()) {
    throw_shape_error("similarity_matrix", texts.shape(), images.shape());
  }
  return matmul(texts, transpose(images));
}

Tensor stack_features(const std::vector<Tensor>& features) { return concat_rows(features); }

DualEncoder::DualEncoder(EncoderConfig cfg, int vocab_size)
    : cfg_(std::move(cfg)), vocab_size_(vocab_size) {
  cfg_.validate();
  if (vocab_size_ < 5) throw TensorError("vocabulary too small for an encoder");
}

namespace {

Tensor randn_tensor(Shape shape, double stddev, Rng& rng) {
  ArrayX v(numel(shape));
  for (Index i = 0; i < v.size(); ++i) v(i) = normal(rng, 0.0, stddev);
  return Tensor::from_array(std::move(shape), std::move(v));
}

void init_tower(ParamStore& ps, const std::string& prefix, const TowerConfig& tc, Rng& rng) {
  const Index d = tc.d_model;
  const Index hd = d * tc.mlp_ratio;
  const double w_std = 0.02;
  for (int l = 0; l < tc.layers; ++l) {
    const std::string b = prefix + ".blocks." + std::to_string(l) + ".";
    ps.add(b + "ln1.g", Tensor::full({d}, 1.0));
    ps.add(b + "ln1.b", Tensor::zeros({d}));
    ps.add(b + "attn.wq", randn_tensor({d, d}, w_std, rng));
    ps.add(b + "attn.bq", Tensor::zeros({d}));
    ps.add(b + "attn.wk", randn_tensor({d, d}, w_std, rng));
    ps.add(b + "attn.bk", Tensor::zeros({d}));
    ps.add(b + "attn.wv", randn_tensor({d, d}, w_std, rng));
    ps.add(b + "attn.bv", Tensor::zeros({d}));
    ps.add(b + "attn.wo", randn_tensor({d, d}, w_std, rng));
    ps.add(b + "attn.bo", Tensor::zeros({d}));
    ps.add(b + "ln2.g", Tensor::full({d}, 1.0));
    ps.add(b + "ln2.b", Tensor::zeros({d}));
    ps.add(b + "mlp.w1", randn_tensor({d, hd}, w_std, rng));
    ps.add(b + "mlp.b1", Tensor::zeros({hd}));
    ps.add(b + "mlp.w2", randn_tensor({hd, d}, w_std, rng));
    ps.add(b + "mlp.b2", Tensor::zeros({d}));
  }
  ps.add(prefix + ".ln_f.g", Tensor::full({d}, 1.0));
  ps.add(prefix + ".ln_f.b", Tensor::zeros({d}));
}

// Additive attention bias that hides future positions from each query row.
Tensor causal_mask(Index len) {
  ArrayX m = ArrayX::Zero(len * len);
  MapRM M(m.data(), len, len);
  for (Index i = 0; i < len; ++i) {
    for (Index j = i + 1; j < len; ++j) M(i, j) = -1e9;
  }
  return Tensor::from_array({len, len}, std::move(m));
}

Tensor attention(const ParamStore& ps, const std::string& b, const Tensor& x, int heads,
                 bool causal) {
  const Index d = x.cols();
  const Index dh = d / heads;
  Tensor q = add(matmul(x, ps.get(b + "attn.wq")), ps.get(b + "attn.bq"));
  Tensor k = add(matmul(x, ps.get(b + "attn.wk")), ps.get(b + "attn.bk"));
  Tensor v = add(matmul(x, ps.get(b + "attn.wv")), ps.get(b + "attn.bv"));
  Tensor mask;
  if (causal) mask = causal_mask(x.rows());
  std::vector<Tensor> ctx;
  ctx.reserve(heads);
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
  for (int h = 0; h < heads; ++h) {
    Tensor qh = slice_cols(q, h * dh, dh);
    Tensor kh = slice_cols(k, h * dh, dh);
    Tensor vh = slice_cols(v, h * dh, dh);
    Tensor scores = scale(matmul(qh, transpose(kh)), inv_sqrt);
    if (causal) scores = add(scores, mask);
    ctx.push_back(matmul(softmax(scores, 1), vh));
  }
  Tensor merged = concat_cols(ctx);
  return add(matmul(merged, ps.get(b + "attn.wo")), ps.get(b + "attn.bo"));
}

}  // namespace

void DualEncoder::init_params(ParamStore& ps, Rng& rng) const {
  const Index dt = cfg_.text.d_model;
  const Index di = cfg_.image.d_model;

  ps.add("text.tok_emb", randn_tensor({vocab_size_, dt}, 0.02, rng));
  ps.add("text.pos_emb", randn_tensor({cfg_.max_len, dt}, 0.01, rng));
  init_tower(ps, "text", cfg_.text, rng);
  ps.add("text.proj", randn_tensor({dt, cfg_.joint_dim},
                                   1.0 / std::sqrt(static_cast<double>(dt)), rng));

  ps.add("image.patch_emb", randn_tensor({cfg_.patch_dim(), di}, 0.02, rng));
  ps.add("image.cls", randn_tensor({1, di}, 0.02, rng));
  ps.add("image.pos_emb", randn_tensor({cfg_.num_patches() + 1, di}, 0.01, rng));
  init_tower(ps, "image", cfg_.image, rng);
  ps.add("image.proj", randn_tensor({di, cfg_.joint_dim},
                                    1.0 / std::sqrt(static_cast<double>(di)), rng));

  ps.add("logit_scale", Tensor::from_values({1}, {std::log(1.0 / 0.07)}));
}

Tensor DualEncoder::tower(const ParamStore& ps, const std::string& prefix, const TowerConfig& tc,
                          Tensor x, bool causal) const {
  for (int l = 0; l < tc.layers; ++l) {
    const std::string b = prefix + ".blocks." + std::to_string(l) + ".";
    Tensor h = layer_norm(x, ps.get(b + "ln1.g"), ps.get(b + "ln1.b"), cfg_.ln_eps);
    x = add(x, attention(ps, b, h, tc.heads, causal));
    Tensor m = layer_norm(x, ps.get(b + "ln2.g"), ps.get(b + "ln2.b"), cfg_.ln_eps);
    m = matmul(gelu(add(matmul(m, ps.get(b + "mlp.w1")), ps.get(b + "mlp.b1"))),
               ps.get(b + "mlp.w2"));
    x = add(x, add(m, ps.get(b + "mlp.b2")));
  }
  return layer_norm(x, ps.get(prefix + ".ln_f.g"), ps.get(prefix + ".ln_f.b"), cfg_.ln_eps);
}

DualEncoder::Encoded DualEncoder::encode_text(const ParamStore& ps, std::span<const int> ids,
                                              const Tensor* prompts, Index insert_at) const {
  const Index len = static_cast<Index>(ids.size());
  if (len > cfg_.max_len) {
    throw TensorError("text sequence length " + std::to_string(len) +
                      " exceeds positional table of " + std::to_string(cfg_.max_len));
  }
  Tensor x = add(embedding(ps.get("text.tok_emb"), ids),
                 slice_rows(ps.get("text.pos_emb"), 0, len));

  Index eos_pos = len - 1;  // EOS is the last token of an unpadded sequence
  if (prompts != nullptr && prompts->rows() > 0) {
    if (prompts->cols() != cfg_.text.d_model) {
      throw_shape_error("encode_text prompts", prompts->shape(), x.shape());
    }
    const Index at = insert_at < 0 ? x.rows() : insert_at;
    x = inject_text(x, *prompts, at);
    if (at <= eos_pos) eos_pos += prompts->rows();
  }

  Tensor states = tower(ps, "text", cfg_.text, x, cfg_.causal_text);
  Tensor f = matmul(slice_rows(states, eos_pos, 1), ps.get("text.proj"));
  Encoded out;
  out.states = states;
  out.feature = reshape(normalize_rows(f), {static_cast<Index>(cfg_.joint_dim)});
  out.feature_pos = eos_pos;
  return out;
}

DualEncoder::Encoded DualEncoder::encode_image(const ParamStore& ps, const Tensor& patch_grid,
                                               const Tensor* prompts, Index insert_at) const {
  if (patch_grid.rank() != 2 || patch_grid.cols() != cfg_.patch_dim() ||
      patch_grid.rows() != cfg_.num_patches()) {
    throw TensorError("patch grid shape " + shape_str(patch_grid.shape()) +
                      " does not match config (" + std::to_string(cfg_.num_patches()) + " x " +
                      std::to_string(cfg_.patch_dim()) + ")");
  }
  Tensor seq = concat_rows({ps.get("image.cls"), matmul(patch_grid, ps.get("image.patch_emb"))});
  Tensor x = add(seq, ps.get("image.pos_emb"));

  Index cls_pos = 0;
  if (prompts != nullptr && prompts->rows() > 0) {
    if (prompts->cols() != cfg_.image.d_model) {
      throw_shape_error("encode_image prompts", prompts->shape(), x.shape());
    }
    x = inject_image(x, *prompts, insert_at);
    if (insert_at <= cls_pos) cls_pos += prompts->rows();
  }

  Tensor states = tower(ps, "image", cfg_.image, x, /*causal=*/false);
  Tensor f = matmul(slice_rows(states, cls_pos, 1), ps.get("image.proj"));
  Encoded out;
  out.states = states;
  out.feature = reshape(normalize_rows(f), {static_cast<Index>(cfg_.joint_dim)});
  out.feature_pos = cls_pos;
  return out;
}

Tensor DualEncoder::logit_scale(const ParamStore& ps) const {
  return exp(ps.get("logit_scale"));
}

}  // namespace pdlab
