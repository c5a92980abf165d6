#include "pdlab/prompts.hpp"

#include <cmath>

namespace pdlab {

double xavier_bound(int fan_in, int fan_out) {
  return std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
}

namespace {

Tensor xavier_uniform(Index n, Index d, Rng& rng) {
  const double b = xavier_bound(static_cast<int>(d), static_cast<int>(d));
  ArrayX v(n * d);
  for (Index i = 0; i < v.size(); ++i) v(i) = uniform(rng, -b, b);
  return Tensor::from_array({n, d}, std::move(v));
}

}  // namespace

void init_prompts(ParamStore& ps, const PromptConfig& pc, int d_text, int d_image, Rng& rng) {
  if (pc.n_text < 0 || pc.n_image < 0) {
    throw ParamError("prompt lengths must be nonnegative; got " + std::to_string(pc.n_text) +
                     " text, " + std::to_string(pc.n_image) + " image");
  }
  if (pc.dropout_p < 0.0 || pc.dropout_p >= 1.0) {
    throw ParamError("prompt dropout " + std::to_string(pc.dropout_p) + " outside [0, 1)");
  }
  if (pc.n_text > 0) ps.add(kTextPromptName, xavier_uniform(pc.n_text, d_text, rng));
  if (pc.n_image > 0) ps.add(kImagePromptName, xavier_uniform(pc.n_image, d_image, rng));
}

Tensor prompt_view(const ParamStore& ps, const std::string& name, double dropout_p, bool train,
                   Rng& rng) {
  return dropout(ps.get(name), dropout_p, train, rng);
}

namespace {

Tensor inject(const Tensor& seq, const Tensor& prompts, Index at) {
  if (!prompts.defined() || prompts.rows() == 0) return seq;
  return insert_rows(seq, prompts, at < 0 ? seq.rows() : at);
}

}  // namespace

Tensor inject_text(const Tensor& t0, const Tensor& prompts, Index at) {
  return inject(t0, prompts, at);
}

Tensor inject_image(const Tensor& v0, const Tensor& prompts, Index at) {
  return inject(v0, prompts, at);
}

Stage parse_stage(const std::string& label) {
  if (label == "stage1") return Stage::stage1;
  if (label == "stage2") return Stage::stage2;
  if (label == "baseline") return Stage::baseline;
  if (label == "one_stage" || label == "one-stage") return Stage::one_stage;
  throw ParamError("unknown stage '" + label + "'");
}

std::string stage_name(Stage s) {
  switch (s) {
    case Stage::stage1: return "stage1";
    case Stage::stage2: return "stage2";
    case Stage::baseline: return "baseline";
    case Stage::one_stage: return "one_stage";
  }
  return "?";
}

void set_stage_trainability(ParamStore& ps, Stage stage) {
  const bool has_prompts = ps.has(kTextPromptName) || ps.has(kImagePromptName);
  switch (stage) {
    case Stage::stage1:
      if (!has_prompts) throw ParamError("stage1 requires prompt parameters");
      ps.set_trainable_all(false);
      ps.set_trainable_by_prefix("prompt.", true);
      break;
    case Stage::stage2:
      if (!has_prompts) throw ParamError("stage2 requires prompt parameters");
      ps.set_trainable_all(true);
      ps.set_trainable_by_prefix("prompt.", false);
      break;
    case Stage::baseline:
      if (has_prompts) {
        throw ParamError("baseline fine-tuning must run without prompt parameters");
      }
      ps.set_trainable_all(true);
      break;
    case Stage::one_stage:
      if (!has_prompts) throw ParamError("one_stage requires prompt parameters");
      ps.set_trainable_all(true);
      break;
  }
}

}  // namespace pdlab
