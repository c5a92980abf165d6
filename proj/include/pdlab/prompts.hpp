#pragma once

#include <string>

#include "pdlab/ops.hpp"
#include "pdlab/params.hpp"
#include "pdlab/rng.hpp"

namespace pdlab {

// Learnable prompt vectors spliced into the encoders' input sequences. They
// carry no positional embeddings, are xavier-uniform initialized, and their
// trainability flips with the training stage.
struct PromptConfig {
  int n_text = 2;
  int n_image = 2;
  double dropout_p = 0.3;
};

inline constexpr const char* kTextPromptName = "prompt.text.p";
inline constexpr const char* kImagePromptName = "prompt.image.p";

// Registers "prompt.text.p" (n_text x d_text) and "prompt.image.p"
// (n_image x d_image), each sampled uniform in [-b, b] with
// b = sqrt(6 / (fan_in + fan_out)) and fan_in = fan_out = the encoder width.
// A zero length registers nothing for that modality (injection is then the
// identity). Negative lengths throw.
void init_prompts(ParamStore& ps, const PromptConfig& pc, int d_text, int d_image, Rng& rng);

double xavier_bound(int fan_in, int fan_out);

// Train mode: elementwise mask with keep probability 1-p, kept values scaled
// by 1/(1-p). Eval mode (or p=0): the prompt tensor itself.
Tensor prompt_view(const ParamStore& ps, const std::string& name, double dropout_p, bool train,
                   Rng& rng);

// Splices a prompt block into an embedded sequence. An undefined or empty
// prompt tensor returns the input unchanged. at = -1 appends after the last
// row (the text layout: sequence then prompts); at = 0 prepends (the image
// layout: prompts, then CLS, then patches). Any other at inserts before that
// row. Prompt rows are copied verbatim — no positional embedding is added.
Tensor inject_text(const Tensor& t0, const Tensor& prompts, Index at = -1);
Tensor inject_image(const Tensor& v0, const Tensor& prompts, Index at = 0);

enum class Stage { stage1, stage2, baseline, one_stage };

Stage parse_stage(const std::string& label);  // throws ParamError on unknown labels
std::string stage_name(Stage s);

// stage1: only prompt.* trainable. stage2: everything except prompt.*
// trainable. baseline: everything trainable and no prompt parameters may
// exist. one_stage: everything trainable, prompts included.
void set_stage_trainability(ParamStore& ps, Stage stage);

}  // namespace pdlab
