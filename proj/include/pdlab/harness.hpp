#pragma once

#include <filesystem>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "pdlab/data.hpp"
#include "pdlab/encoder.hpp"
#include "pdlab/metrics.hpp"
#include "pdlab/optim.hpp"
#include "pdlab/prompts.hpp"

namespace pdlab {

struct HarnessError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Per-stage base learning rates; every stage shares the warmup + cosine shape.
// Pretraining runs cooler than the adaptation stages: the contrastive
// objective has a collapse plateau that higher rates fail to escape.
struct StageLrs {
  double pretrain = 1e-3;
  double stage1 = 2e-2;
  double finetune = 1e-3;
};

struct ExperimentConfig {
  EncoderConfig encoder;
  PromptConfig prompts;           // lengths 2/2, dropout 0.1
  double lambda = 0.1;            // weight of the identity term in stage 2
  int epochs = 75;                // per adaptation stage
  int pretrain_epochs = 20;       // source pretraining runs shorter
  int batch_size = 32;
  int p_identities = 16;          // P in the P x K identity-balanced sampler
  int warmup_epochs = 5;
  double warmup_start_lr = 1e-6;
  double min_lr = 0.0;
  double classifier_multiplier = 5.0;
  StageLrs lrs;
  std::vector<long long> seeds{1, 2, 3};
  std::string corpus_dir = "corpus";
  std::string out_dir = "runs";
  GenConfig data;
  void validate() const;  // throws HarnessError
};

// Desk-scale defaults: 2-layer towers, width 48, 4 heads, joint dim 32, and a
// scarce-target data profile (24 target train identities, 3 captions per
// image, register overlap 0.4).
ExperimentConfig default_experiment();

// JSON round trip; load starts from the defaults and applies only the keys
// present in the file, so partial configs are valid.
ExperimentConfig load_experiment(const std::filesystem::path& file);
void save_experiment(const std::filesystem::path& file, const ExperimentConfig& cfg);
// 16-hex-digit digest of the canonical JSON form; recorded in every artifact.
std::string config_hash(const ExperimentConfig& cfg);

// ---------------------------------------------------------------------------
// Model bundle: one encoder + parameter store owned by a run
// ---------------------------------------------------------------------------

struct ModelBundle {
  ExperimentConfig cfg;
  const Corpus* corpus = nullptr;
  DualEncoder enc;
  ParamStore params;
  ModelBundle(const ExperimentConfig& cfg_in, const Corpus& corpus_in);
};

void init_backbone(ModelBundle& m, long long seed);
void load_backbone(ModelBundle& m, const std::filesystem::path& checkpoint_dir);
void add_prompts(ModelBundle& m, long long seed);    // fresh xavier init
void add_classifier(ModelBundle& m, long long seed); // one class per target train id

// Training phases. pretrain/baseline use shuffled instance batches and the
// diagonal-target loss; stage1 trains prompts only with the id-aware
// contrastive loss; stage2/one_stage use the full objective. Each phase uses
// its own freshly initialized optimizer.
enum class Phase { pretrain, stage1, stage2, baseline, one_stage };
const char* phase_name(Phase p);

struct TrainStats {
  std::vector<double> epoch_mean_loss;
  long long steps = 0;
};

// Runs one phase, appends every optimizer step to run_dir/training_log.csv
// (step, stage, epoch, lr, classifier_lr, loss, loss_itc, loss_id), and saves
// run_dir/checkpoint_<phase>. Enforces the freeze contracts: stage1 must
// leave all non-prompt parameters byte-identical and stage2 all prompts;
// violations throw HarnessError.
TrainStats train_phase(ModelBundle& m, Phase phase, long long seed,
                       const std::filesystem::path& run_dir);

// Feature extraction + ranking metrics for one split, in eval mode (no
// dropout, no gradient recording), parallel over samples under PDLAB_THREADS.
MetricsReport eval_bundle(ModelBundle& m, const Split& split, bool with_prompts,
                          const std::string& stage, long long seed);

void save_report(const std::filesystem::path& file, const MetricsReport& report);
MetricsReport load_report(const std::filesystem::path& file);

// ---------------------------------------------------------------------------
// High-level experiment drivers
// ---------------------------------------------------------------------------

// Trains the backbone from scratch on the source train split, writes
// out_dir/checkpoint_pretrain plus the training log, and returns the
// held-out source-test report (also saved as out_dir/source_test.json).
MetricsReport pretrain_source(const ExperimentConfig& cfg, const Corpus& corpus, long long seed,
                              const std::filesystem::path& out_dir);

enum class Strategy { baseline, one_stage, two_stage };
Strategy parse_strategy(const std::string& name);  // throws HarnessError
const char* strategy_name(Strategy s);

// Adapts the backbone to the target domain with one strategy and evaluates on
// the target test split. Artifacts land under run_dir.
MetricsReport run_adaptation(const ExperimentConfig& cfg, const Corpus& corpus, Strategy strategy,
                             const std::filesystem::path& backbone_dir, long long seed,
                             const std::filesystem::path& run_dir);

struct StrategyOutcome {
  std::vector<MetricsReport> per_seed;
  MetricsReport median, lo, hi;  // per-metric aggregates over the seeds
};

StrategyOutcome run_strategy(const ExperimentConfig& cfg, const Corpus& corpus, Strategy strategy,
                             const std::filesystem::path& backbone_dir,
                             const std::vector<long long>& seeds,
                             const std::filesystem::path& out_dir);

// Prompt-length sweep: runs the two-stage strategy for every (n_text, n_img)
// pair (the symmetric default (2,2) is added when missing), one run per seed.
// Writes sweep.csv with one row per (pair, seed) and sweep.svg.
struct SweepEntry {
  int n_text = 0, n_img = 0;
  long long seed = 0;
  MetricsReport report;
};
std::vector<SweepEntry> ablate_prompt_length(const ExperimentConfig& cfg, const Corpus& corpus,
                                             const std::filesystem::path& backbone_dir,
                                             std::vector<std::pair<int, int>> lengths,
                                             const std::vector<long long>& seeds,
                                             const std::filesystem::path& out_dir);

// The full pipeline: pretrain once, evaluate source held-out and target
// zero-shot, then run all three strategies over cfg.seeds.
struct BenchResult {
  MetricsReport source_holdout, zero_shot;
  StrategyOutcome baseline, one_stage, two_stage;
  double seconds = 0;
};
BenchResult run_benchmark(const ExperimentConfig& cfg, const Corpus& corpus,
                          const std::filesystem::path& out_dir);

// Simple multi-series line chart (used for the sweep plot).
struct PlotSeries {
  std::string name;
  std::vector<double> values;
};
void write_line_chart_svg(const std::filesystem::path& file, const std::string& title,
                          const std::vector<std::string>& x_labels,
                          const std::vector<PlotSeries>& series);

}  // namespace pdlab
