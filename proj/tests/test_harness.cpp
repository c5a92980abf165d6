#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "pdlab/checkpoint.hpp"
#include "pdlab/harness.hpp"
#include "pdlab/params.hpp"

using namespace pdlab;
namespace fs = std::filesystem;

namespace {

ExperimentConfig tiny_config() {
  ExperimentConfig cfg = default_experiment();
  cfg.encoder.text = {1, 16, 2, 2};
  cfg.encoder.image = {1, 16, 2, 2};
  cfg.encoder.joint_dim = 8;
  cfg.epochs = 2;
  cfg.pretrain_epochs = 2;
  cfg.batch_size = 8;
  cfg.p_identities = 4;
  cfg.warmup_epochs = 1;
  cfg.seeds = {1, 2};
  cfg.data.source_ids = 12;
  cfg.data.source_train_ids = 8;
  cfg.data.source_val_ids = 2;
  cfg.data.source_test_ids = 2;
  cfg.data.source_images_per_id = 2;
  cfg.data.target_train_ids = 6;
  cfg.data.target_test_ids = 4;
  cfg.data.target_images_per_id = 2;
  cfg.data.captions_per_image = 1;
  return cfg;
}

struct TestEnv {
  ExperimentConfig cfg;
  Corpus corpus;
  fs::path root;
  fs::path backbone;
};

const TestEnv& env() {
  static const TestEnv e = [] {
    TestEnv out;
    out.cfg = tiny_config();
    out.corpus = make_domain_pair(out.cfg.data, 11);
    out.root = fs::temp_directory_path() / "pdlab_harness_test";
    fs::remove_all(out.root);
    fs::create_directories(out.root);
    pretrain_source(out.cfg, out.corpus, 1, out.root / "pretrain");
    out.backbone = out.root / "pretrain" / "checkpoint_pretrain";
    return out;
  }();
  return e;
}

std::string slurp(const fs::path& file) {
  std::ifstream in(file, std::ios::binary);
  REQUIRE(in.good());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<std::vector<std::string>> read_csv(const fs::path& file) {
  std::ifstream in(file);
  REQUIRE(in.good());
  std::vector<std::vector<std::string>> rows;
  std::string line;
  while (std::getline(in, line)) {
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    rows.push_back(cells);
  }
  return rows;
}

bool dirs_equal(const fs::path& a, const fs::path& b) {
  std::vector<fs::path> rel;
  for (const auto& entry : fs::recursive_directory_iterator(a))
    if (entry.is_regular_file()) rel.push_back(fs::relative(entry.path(), a));
  std::sort(rel.begin(), rel.end());
  std::vector<fs::path> rel_b;
  for (const auto& entry : fs::recursive_directory_iterator(b))
    if (entry.is_regular_file()) rel_b.push_back(fs::relative(entry.path(), b));
  std::sort(rel_b.begin(), rel_b.end());
  if (rel != rel_b) return false;
  for (const auto& r : rel)
    if (slurp(a / r) != slurp(b / r)) return false;
  return true;
}

bool reports_identical(const MetricsReport& a, const MetricsReport& b) {
  return a.rank1 == b.rank1 && a.rank5 == b.rank5 && a.rank10 == b.rank10 && a.mAP == b.mAP &&
         a.mINP == b.mINP && a.num_queries == b.num_queries && a.num_gallery == b.num_gallery;
}

}  // namespace

TEST_CASE("experiment config json round trip, partial files, and hashing") {
  const fs::path dir = fs::temp_directory_path() / "pdlab_harness_cfg";
  fs::create_directories(dir);

  ExperimentConfig cfg = tiny_config();
  save_experiment(dir / "full.json", cfg);
  const ExperimentConfig back = load_experiment(dir / "full.json");
  CHECK(config_hash(back) == config_hash(cfg));
  CHECK(back.encoder.text.d_model == 16);
  CHECK(back.data.source_ids == 12);
  CHECK(back.seeds == std::vector<long long>{1, 2});

  {
    std::ofstream out(dir / "partial.json");
    out << "{\"epochs\": 3, \"lrs\": {\"stage1\": 0.25}}\n";
  }
  const ExperimentConfig partial = load_experiment(dir / "partial.json");
  CHECK(partial.epochs == 3);
  CHECK(partial.lrs.stage1 == 0.25);
  CHECK(partial.lrs.pretrain == default_experiment().lrs.pretrain);
  CHECK(partial.batch_size == default_experiment().batch_size);
  CHECK(config_hash(partial) != config_hash(default_experiment()));

  {
    std::ofstream out(dir / "broken.json");
    out << "{not json";
  }
  CHECK_THROWS_AS(load_experiment(dir / "broken.json"), HarnessError);
  CHECK_THROWS_AS(load_experiment(dir / "missing.json"), HarnessError);

  ExperimentConfig bad = tiny_config();
  bad.epochs = 0;
  CHECK_THROWS_AS(bad.validate(), HarnessError);
  bad = tiny_config();
  bad.lambda = -1;
  CHECK_THROWS_AS(bad.validate(), HarnessError);
  bad = tiny_config();
  bad.seeds.clear();
  CHECK_THROWS_AS(bad.validate(), HarnessError);
}

TEST_CASE("trainable scalar counts per stage") {
  const TestEnv& e = env();
  ModelBundle m(e.cfg, e.corpus);
  init_backbone(m, 5);
  set_stage_trainability(m.params, Stage::baseline);
  CHECK(m.params.trainable_scalar_count() == m.params.scalar_count());

  add_prompts(m, 5);
  const long long prompt_scalars =
      static_cast<long long>(e.cfg.prompts.n_text) * e.cfg.encoder.text.d_model +
      static_cast<long long>(e.cfg.prompts.n_image) * e.cfg.encoder.image.d_model;
  set_stage_trainability(m.params, Stage::stage1);
  CHECK(m.params.trainable_scalar_count() == prompt_scalars);

  add_classifier(m, 5);
  set_stage_trainability(m.params, Stage::stage2);
  CHECK(m.params.trainable_scalar_count() == m.params.scalar_count() - prompt_scalars);

  set_stage_trainability(m.params, Stage::one_stage);
  CHECK(m.params.trainable_scalar_count() == m.params.scalar_count());

  CHECK_THROWS(set_stage_trainability(m.params, Stage::baseline));
}

TEST_CASE("pretraining reduces the loss and logs every optimizer step") {
  const TestEnv& e = env();
  ExperimentConfig cfg = e.cfg;
  cfg.epochs = 4;
  cfg.pretrain_epochs = 4;
  const fs::path dir = e.root / "loss_curve";
  ModelBundle m(cfg, e.corpus);
  init_backbone(m, 3);
  const TrainStats stats = train_phase(m, Phase::pretrain, 3, dir);

  // 8 train ids x 2 images x 1 caption = 16 instances -> 2 batches of 8.
  CHECK(stats.steps == 4 * 2);
  REQUIRE(stats.epoch_mean_loss.size() == 4);
  CHECK(stats.epoch_mean_loss.back() < stats.epoch_mean_loss.front());
  for (double v : stats.epoch_mean_loss) CHECK(std::isfinite(v));

  const auto rows = read_csv(dir / "training_log.csv");
  REQUIRE(static_cast<long long>(rows.size()) == stats.steps + 1);
  CHECK(rows[0] == std::vector<std::string>{"step", "stage", "epoch", "lr", "classifier_lr",
                                            "loss", "loss_itc", "loss_id"});
  for (std::size_t i = 1; i < rows.size(); ++i) {
    REQUIRE(rows[i].size() == 8);
    CHECK(rows[i][0] == std::to_string(i - 1));
    CHECK(rows[i][1] == "pretrain");
    CHECK(std::stod(rows[i][4]) == 0.0);           // no classifier in this phase
    CHECK(std::stod(rows[i][7]) == 0.0);           // no identity term either
    CHECK(std::stod(rows[i][5]) == doctest::Approx(std::stod(rows[i][6])));
  }
  CHECK(fs::exists(dir / "checkpoint_pretrain"));
}

TEST_CASE("stage freeze contracts verified by independent digests") {
  const TestEnv& e = env();
  ModelBundle m(e.cfg, e.corpus);
  load_backbone(m, e.backbone);
  add_prompts(m, 9);

  std::vector<std::pair<std::string, std::uint64_t>> encoder_digests;
  for (const auto& name : m.params.names())
    if (name.rfind("prompt.", 0) != 0)
      encoder_digests.emplace_back(name, byte_hash(m.params.get(name).array()));
  const std::uint64_t prompts_before_s1 = byte_hash(m.params, "prompt.");

  train_phase(m, Phase::stage1, 9, e.root / "freeze");
  for (const auto& [name, digest] : encoder_digests)
    CHECK(byte_hash(m.params.get(name).array()) == digest);
  CHECK(byte_hash(m.params, "prompt.") != prompts_before_s1);  // prompts did train

  add_classifier(m, 9);
  const std::uint64_t prompts_frozen = byte_hash(m.params, "prompt.");
  std::uint64_t encoder_before_s2 = 0;
  for (const auto& [name, digest] : encoder_digests)
    encoder_before_s2 ^= byte_hash(m.params.get(name).array());

  train_phase(m, Phase::stage2, 9, e.root / "freeze");
  CHECK(byte_hash(m.params, "prompt.") == prompts_frozen);
  std::uint64_t encoder_after_s2 = 0;
  for (const auto& [name, digest] : encoder_digests)
    encoder_after_s2 ^= byte_hash(m.params.get(name).array());
  CHECK(encoder_after_s2 != encoder_before_s2);  // the backbone did train

  // Phase preconditions surface as errors, not silent misconfiguration.
  ModelBundle fresh(e.cfg, e.corpus);
  load_backbone(fresh, e.backbone);
  CHECK_THROWS(train_phase(fresh, Phase::stage1, 9, e.root / "freeze_err"));  // no prompts
  add_prompts(fresh, 9);
  CHECK_THROWS_AS(train_phase(fresh, Phase::stage2, 9, e.root / "freeze_err"),
                  HarnessError);  // no classifier
  CHECK_THROWS(train_phase(fresh, Phase::baseline, 9, e.root / "freeze_err"));  // prompts present
}

TEST_CASE("identical config and seed give byte-identical artifacts") {
  const TestEnv& e = env();
  const fs::path a = e.root / "det_a";
  const fs::path b = e.root / "det_b";
  const MetricsReport ra = run_adaptation(e.cfg, e.corpus, Strategy::two_stage, e.backbone, 2, a);
  const MetricsReport rb = run_adaptation(e.cfg, e.corpus, Strategy::two_stage, e.backbone, 2, b);
  CHECK(reports_identical(ra, rb));
  CHECK(dirs_equal(a, b));

  run_adaptation(e.cfg, e.corpus, Strategy::two_stage, e.backbone, 4, e.root / "det_c");
  // A different seed actually changes the run; with only 8 queries the final
  // metrics can coincide, but the training trajectory cannot.
  CHECK(slurp(a / "training_log.csv") != slurp(e.root / "det_c" / "training_log.csv"));
}

TEST_CASE("checkpoint reload reproduces evaluation bit for bit") {
  const TestEnv& e = env();
  ModelBundle m(e.cfg, e.corpus);
  load_backbone(m, e.backbone);
  const MetricsReport direct = eval_bundle(m, e.corpus.target.test, false, "zero_shot", 1);

  ModelBundle again(e.cfg, e.corpus);
  load_backbone(again, e.backbone);
  const MetricsReport reloaded = eval_bundle(again, e.corpus.target.test, false, "zero_shot", 1);
  CHECK(reports_identical(direct, reloaded));

  // Save -> load -> save round trip is byte-stable.
  const fs::path c1 = e.root / "ckpt_roundtrip_1";
  const fs::path c2 = e.root / "ckpt_roundtrip_2";
  CheckpointMeta meta;
  meta.epoch = 1;
  meta.stage = "zero_shot";
  meta.config_hash = config_hash(e.cfg);
  save_checkpoint(c1, m.params, meta);
  ParamStore loaded;
  load_checkpoint(c1, loaded);
  save_checkpoint(c2, loaded, meta);
  CHECK(dirs_equal(c1, c2));
}

TEST_CASE("eval guards reject misuse") {
  const TestEnv& e = env();
  ModelBundle m(e.cfg, e.corpus);
  load_backbone(m, e.backbone);
  CHECK_THROWS_AS(eval_bundle(m, e.corpus.target.test, true, "bad", 1), HarnessError);
  Split empty;
  CHECK_THROWS_AS(eval_bundle(m, empty, false, "bad", 1), HarnessError);
}

TEST_CASE("strategy parsing") {
  CHECK(parse_strategy("baseline") == Strategy::baseline);
  CHECK(parse_strategy("one-stage") == Strategy::one_stage);
  CHECK(parse_strategy("one_stage") == Strategy::one_stage);
  CHECK(parse_strategy("two-stage") == Strategy::two_stage);
  CHECK(parse_strategy("two_stage") == Strategy::two_stage);
  CHECK_THROWS_AS(parse_strategy("three-stage"), HarnessError);
  CHECK(std::string(strategy_name(Strategy::two_stage)) == "two_stage");
}

TEST_CASE("run_strategy aggregates per-seed reports") {
  const TestEnv& e = env();
  const fs::path dir = e.root / "strategy";
  const StrategyOutcome out =
      run_strategy(e.cfg, e.corpus, Strategy::baseline, e.backbone, {1, 2}, dir);
  REQUIRE(out.per_seed.size() == 2);
  CHECK(out.median.rank1 == doctest::Approx(0.5 * (out.per_seed[0].rank1 + out.per_seed[1].rank1)));
  CHECK(out.lo.rank1 == std::min(out.per_seed[0].rank1, out.per_seed[1].rank1));
  CHECK(out.hi.rank1 == std::max(out.per_seed[0].rank1, out.per_seed[1].rank1));
  CHECK(fs::exists(dir / "baseline" / "summary.json"));
  const auto csv = read_csv(dir / "baseline" / "summary.csv");
  REQUIRE(csv.size() == 3);  // header + 2 seeds
  CHECK(csv[1][0] == "baseline");
  for (long long s : {1, 2})
    CHECK(fs::exists(dir / "baseline" / ("seed_" + std::to_string(s)) / "metrics.json"));

  // Reports round-trip through their JSON files.
  const MetricsReport back = load_report(dir / "baseline" / "seed_1" / "metrics.json");
  CHECK(reports_identical(back, out.per_seed[0]));
  CHECK(back.stage == "baseline");
}

TEST_CASE("stage-two log rows carry the boosted classifier rate") {
  const TestEnv& e = env();
  const auto rows = read_csv(e.root / "det_a" / "training_log.csv");
  REQUIRE(rows.size() > 1);
  bool saw_stage1 = false, saw_stage2 = false;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const double lr = std::stod(rows[i][3]);
    const double clr = std::stod(rows[i][4]);
    CHECK(lr > 0.0);
    if (rows[i][1] == "stage1") {
      saw_stage1 = true;
      CHECK(clr == 0.0);
    } else if (rows[i][1] == "stage2") {
      saw_stage2 = true;
      CHECK(clr == lr * e.cfg.classifier_multiplier);  // exact multiple, same arithmetic
    }
  }
  CHECK(saw_stage1);
  CHECK(saw_stage2);
}

TEST_CASE("prompt length sweep covers the default pair and writes artifacts") {
  const TestEnv& e = env();
  const fs::path dir = e.root / "sweep";
  const auto entries =
      ablate_prompt_length(e.cfg, e.corpus, e.backbone, {{1, 1}}, {1}, dir);
  REQUIRE(entries.size() == 2);  // (2,2) was added in front of (1,1)
  CHECK(entries[0].n_text == 2);
  CHECK(entries[0].n_img == 2);
  CHECK(entries[1].n_text == 1);
  const auto csv = read_csv(dir / "sweep.csv");
  REQUIRE(csv.size() == 3);
  CHECK(csv[0][0] == "n_text");
  const std::string svg = slurp(dir / "sweep.svg");
  CHECK(svg.find("<svg") != std::string::npos);
  CHECK(svg.find("polyline") != std::string::npos);
}

TEST_CASE("chart writer validates input and emits all series") {
  CHECK_THROWS_AS(write_line_chart_svg(fs::temp_directory_path() / "x.svg", "t", {}, {}),
                  HarnessError);
  const fs::path file = fs::temp_directory_path() / "pdlab_chart.svg";
  write_line_chart_svg(file, "demo", {"a", "b", "c"},
                       {{"first", {1, 2, 3}}, {"second", {30, 20, 10}}});
  const std::string svg = slurp(file);
  CHECK(svg.find("first") != std::string::npos);
  CHECK(svg.find("second") != std::string::npos);
  CHECK(svg.find("demo") != std::string::npos);
}
