// pdlab: generate synthetic cross-modal retrieval corpora, train the dual
// encoder, adapt it to a shifted target domain, and score retrieval.
#include <cstdio>
#include <exception>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "pdlab/harness.hpp"
#include "pdlab/prompts.hpp"

using namespace pdlab;
namespace fs = std::filesystem;

namespace {

struct Overrides {
  int epochs = -1;
  int prompt_len_text = -1;
  int prompt_len_image = -1;
  double prompt_dropout = -1;
  double lambda = -1;
  std::string out;
};

void apply(const Overrides& o, ExperimentConfig& cfg) {
  if (o.epochs >= 0) cfg.epochs = o.epochs;
  if (o.prompt_len_text >= 0) cfg.prompts.n_text = o.prompt_len_text;
  if (o.prompt_len_image >= 0) cfg.prompts.n_image = o.prompt_len_image;
  if (o.prompt_dropout >= 0) cfg.prompts.dropout_p = o.prompt_dropout;
  if (o.lambda >= 0) cfg.lambda = o.lambda;
  if (!o.out.empty()) cfg.out_dir = o.out;
  cfg.validate();
}

void print_report(const std::string& label, const MetricsReport& r) {
  std::printf("%-18s rank1 %6.2f  rank5 %6.2f  rank10 %6.2f  mAP %6.2f  mINP %6.2f\n",
              label.c_str(), r.rank1, r.rank5, r.rank10, r.mAP, r.mINP);
}

Corpus load_or_fail(const std::string& dir) {
  if (!fs::exists(fs::path(dir) / "config.json"))
    throw HarnessError("no corpus at '" + dir + "'; run gen-data first");
  return load_corpus(dir);
}

const Split& pick_split(const Corpus& corpus, const std::string& name) {
  if (name == "source-train") return corpus.source.train;
  if (name == "source-val") return corpus.source.val;
  if (name == "source-test") return corpus.source.test;
  if (name == "target-train") return corpus.target.train;
  if (name == "target-test") return corpus.target.test;
  throw HarnessError("unknown split '" + name + "'");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"desk-scale cross-modal retrieval laboratory"};
  app.require_subcommand(1);
  app.fallthrough();  // global options may follow the subcommand name

  std::string config_file;
  app.add_option("--config", config_file, "experiment config JSON (defaults used when absent)");
  Overrides ov;
  app.add_option("--epochs", ov.epochs, "epochs per training stage");
  app.add_option("--prompt-len-text", ov.prompt_len_text, "text prompt length");
  app.add_option("--prompt-len-image", ov.prompt_len_image, "image prompt length");
  app.add_option("--prompt-dropout", ov.prompt_dropout, "prompt dropout probability");
  app.add_option("--lambda", ov.lambda, "identity loss weight");
  app.add_option("--out", ov.out, "output directory root");

  long long seed = -1;
  app.add_option("--seed", seed, "run seed (default: first config seed)");
  std::string corpus_dir;
  app.add_option("--corpus", corpus_dir, "corpus directory (default: from config)");

  auto* gen = app.add_subcommand("gen-data", "generate the two-domain synthetic corpus");
  long long data_seed = 7;
  gen->add_option("--data-seed", data_seed, "master seed for the generator");

  auto* pre = app.add_subcommand("pretrain", "train the backbone on the source domain");

  auto* adapt = app.add_subcommand("adapt", "adapt a pretrained backbone to the target domain");
  std::string strategy_arg = "two-stage";
  adapt->add_option("--strategy", strategy_arg, "baseline | one-stage | two-stage");
  std::string backbone_dir;
  adapt->add_option("--backbone", backbone_dir, "pretrained checkpoint directory");

  auto* eval = app.add_subcommand("eval", "score a checkpoint on one split");
  std::string ckpt_dir, split_name = "target-test";
  eval->add_option("--checkpoint", ckpt_dir, "checkpoint directory")->required();
  eval->add_option("--split", split_name,
                   "source-train | source-val | source-test | target-train | target-test");

  auto* ablate = app.add_subcommand("ablate", "sweep symmetric prompt lengths (two-stage)");
  std::string lengths_arg = "1,2,4,8";
  ablate->add_option("--lengths", lengths_arg, "comma-separated prompt lengths");
  int n_seeds = 3;
  ablate->add_option("--seeds", n_seeds, "number of seeds (1..N)");
  ablate->add_option("--backbone", backbone_dir, "pretrained checkpoint directory");

  auto* bench = app.add_subcommand(
      "bench", "full pipeline: pretrain, zero-shot, then all three adaptation strategies");
  bench->add_option("--data-seed", data_seed, "master seed when the corpus must be generated");

  CLI11_PARSE(app, argc, argv);

  try {
    ExperimentConfig cfg =
        config_file.empty() ? default_experiment() : load_experiment(config_file);
    apply(ov, cfg);
    if (!corpus_dir.empty()) cfg.corpus_dir = corpus_dir;
    if (seed < 0) seed = cfg.seeds.front();
    const fs::path out_root = cfg.out_dir;

    if (gen->parsed()) {
      const Corpus corpus = make_domain_pair(cfg.data, static_cast<std::uint64_t>(data_seed));
      save_corpus(cfg.corpus_dir, corpus);
      std::printf("corpus written to %s\n", cfg.corpus_dir.c_str());
      std::printf("  source: %zu/%zu/%zu train/val/test images\n", corpus.source.train.images.size(),
                  corpus.source.val.images.size(), corpus.source.test.images.size());
      std::printf("  target: %zu/%zu train/test images, %zu test captions\n",
                  corpus.target.train.images.size(), corpus.target.test.images.size(),
                  corpus.target.test.captions.size());
      std::printf("  vocabulary: %lld tokens\n", static_cast<long long>(corpus.vocab.size()));
    } else if (pre->parsed()) {
      const Corpus corpus = load_or_fail(cfg.corpus_dir);
      const fs::path dir = out_root / "pretrain";
      const MetricsReport r = pretrain_source(cfg, corpus, seed, dir);
      print_report("source-test", r);
      std::printf("checkpoint: %s\n", (dir / "checkpoint_pretrain").string().c_str());
    } else if (adapt->parsed()) {
      const Corpus corpus = load_or_fail(cfg.corpus_dir);
      const Strategy strategy = parse_strategy(strategy_arg);
      if (backbone_dir.empty())
        backbone_dir = (out_root / "pretrain" / "checkpoint_pretrain").string();
      const fs::path dir =
          out_root / strategy_name(strategy) / ("seed_" + std::to_string(seed));
      const MetricsReport r =
          run_adaptation(cfg, corpus, strategy, backbone_dir, seed, dir);
      print_report(std::string("target-test/") + strategy_name(strategy), r);
      std::printf("artifacts: %s\n", dir.string().c_str());
    } else if (eval->parsed()) {
      const Corpus corpus = load_or_fail(cfg.corpus_dir);
      ModelBundle m(cfg, corpus);
      load_backbone(m, ckpt_dir);
      const bool with_prompts = m.params.has(kTextPromptName);
      const MetricsReport r =
          eval_bundle(m, pick_split(corpus, split_name), with_prompts, split_name, seed);
      print_report(split_name + (with_prompts ? " (prompts)" : ""), r);
    } else if (ablate->parsed()) {
      const Corpus corpus = load_or_fail(cfg.corpus_dir);
      if (backbone_dir.empty())
        backbone_dir = (out_root / "pretrain" / "checkpoint_pretrain").string();
      std::vector<std::pair<int, int>> lengths;
      for (const auto& tok : CLI::detail::split(lengths_arg, ',')) {
        const int n = std::stoi(tok);
        lengths.emplace_back(n, n);
      }
      std::vector<long long> seeds;
      for (int s = 1; s <= n_seeds; ++s) seeds.push_back(s);
      const auto entries =
          ablate_prompt_length(cfg, corpus, backbone_dir, lengths, seeds, out_root / "sweep");
      for (const auto& e : entries)
        print_report("len " + std::to_string(e.n_text) + "x" + std::to_string(e.n_img) +
                         " seed " + std::to_string(e.seed),
                     e.report);
      std::printf("sweep table: %s\n", (out_root / "sweep" / "sweep.csv").string().c_str());
    } else if (bench->parsed()) {
      if (!fs::exists(fs::path(cfg.corpus_dir) / "config.json")) {
        const Corpus fresh = make_domain_pair(cfg.data, static_cast<std::uint64_t>(data_seed));
        save_corpus(cfg.corpus_dir, fresh);
        std::printf("generated corpus at %s\n", cfg.corpus_dir.c_str());
      }
      const Corpus corpus = load_corpus(cfg.corpus_dir);
      const BenchResult r = run_benchmark(cfg, corpus, out_root);
      print_report("source-holdout", r.source_holdout);
      print_report("zero-shot", r.zero_shot);
      print_report("baseline", r.baseline.median);
      print_report("one-stage", r.one_stage.median);
      print_report("two-stage", r.two_stage.median);
      std::printf("wall time: %.1f s\n", r.seconds);
      std::printf("summary: %s\n", (out_root / "benchmark.json").string().c_str());
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
