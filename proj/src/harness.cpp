#include "pdlab/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <json.hpp>

#include "pdlab/checkpoint.hpp"
#include "pdlab/losses.hpp"
#include "pdlab/parallel.hpp"
#include "pdlab/vocab.hpp"

namespace pdlab {
namespace {

using nlohmann::json;
namespace fs = std::filesystem;

std::uint64_t fnv1a(const std::string& text) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

json tower_to_json(const TowerConfig& t) {
  return {{"layers", t.layers}, {"d_model", t.d_model}, {"heads", t.heads},
          {"mlp_ratio", t.mlp_ratio}};
}

void tower_from_json(const json& j, TowerConfig& t) {
  t.layers = j.value("layers", t.layers);
  t.d_model = j.value("d_model", t.d_model);
  t.heads = j.value("heads", t.heads);
  t.mlp_ratio = j.value("mlp_ratio", t.mlp_ratio);
}

json experiment_to_json(const ExperimentConfig& c) {
  return {{"encoder",
           {{"text", tower_to_json(c.encoder.text)},
            {"image", tower_to_json(c.encoder.image)},
            {"joint_dim", c.encoder.joint_dim},
            {"max_len", c.encoder.max_len},
            {"causal_text", c.encoder.causal_text}}},
          {"prompts",
           {{"n_text", c.prompts.n_text},
            {"n_image", c.prompts.n_image},
            {"dropout_p", c.prompts.dropout_p}}},
          {"lambda", c.lambda},
          {"epochs", c.epochs},
          {"pretrain_epochs", c.pretrain_epochs},
          {"batch_size", c.batch_size},
          {"p_identities", c.p_identities},
          {"warmup_epochs", c.warmup_epochs},
          {"warmup_start_lr", c.warmup_start_lr},
          {"min_lr", c.min_lr},
          {"classifier_multiplier", c.classifier_multiplier},
          {"lrs",
           {{"pretrain", c.lrs.pretrain}, {"stage1", c.lrs.stage1}, {"finetune", c.lrs.finetune}}},
          {"seeds", c.seeds},
          {"corpus_dir", c.corpus_dir},
          {"out_dir", c.out_dir},
          {"data", json::parse(gen_config_to_json_string(c.data))}};
}

ExperimentConfig experiment_from_json(const json& j) {
  ExperimentConfig c = default_experiment();
  if (j.contains("encoder")) {
    const json& e = j.at("encoder");
    if (e.contains("text")) tower_from_json(e.at("text"), c.encoder.text);
    if (e.contains("image")) tower_from_json(e.at("image"), c.encoder.image);
    c.encoder.joint_dim = e.value("joint_dim", c.encoder.joint_dim);
    c.encoder.max_len = e.value("max_len", c.encoder.max_len);
    c.encoder.causal_text = e.value("causal_text", c.encoder.causal_text);
  }
  if (j.contains("prompts")) {
    const json& p = j.at("prompts");
    c.prompts.n_text = p.value("n_text", c.prompts.n_text);
    c.prompts.n_image = p.value("n_image", c.prompts.n_image);
    c.prompts.dropout_p = p.value("dropout_p", c.prompts.dropout_p);
  }
  c.lambda = j.value("lambda", c.lambda);
  c.epochs = j.value("epochs", c.epochs);
  c.pretrain_epochs = j.value("pretrain_epochs", c.pretrain_epochs);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.p_identities = j.value("p_identities", c.p_identities);
  c.warmup_epochs = j.value("warmup_epochs", c.warmup_epochs);
  c.warmup_start_lr = j.value("warmup_start_lr", c.warmup_start_lr);
  c.min_lr = j.value("min_lr", c.min_lr);
  c.classifier_multiplier = j.value("classifier_multiplier", c.classifier_multiplier);
  if (j.contains("lrs")) {
    const json& l = j.at("lrs");
    c.lrs.pretrain = l.value("pretrain", c.lrs.pretrain);
    c.lrs.stage1 = l.value("stage1", c.lrs.stage1);
    c.lrs.finetune = l.value("finetune", c.lrs.finetune);
  }
  if (j.contains("seeds")) c.seeds = j.at("seeds").get<std::vector<long long>>();
  c.corpus_dir = j.value("corpus_dir", c.corpus_dir);
  c.out_dir = j.value("out_dir", c.out_dir);
  if (j.contains("data")) c.data = gen_config_from_json_string(j.at("data").dump());
  // The encoder always sees images in the generator's geometry.
  c.encoder.image_h = c.data.geom.h;
  c.encoder.image_w = c.data.geom.w;
  c.encoder.image_c = c.data.geom.c;
  c.encoder.patch = c.data.geom.patch;
  return c;
}

json report_to_json(const MetricsReport& r) {
  return {{"rank1", r.rank1},       {"rank5", r.rank5},
          {"rank10", r.rank10},     {"mAP", r.mAP},
          {"mINP", r.mINP},         {"num_queries", r.num_queries},
          {"num_gallery", r.num_gallery}, {"stage", r.stage},
          {"seed", r.seed},         {"config_hash", r.config_hash}};
}

MetricsReport report_from_json(const json& j) {
  MetricsReport r;
  r.rank1 = j.at("rank1").get<double>();
  r.rank5 = j.at("rank5").get<double>();
  r.rank10 = j.at("rank10").get<double>();
  r.mAP = j.at("mAP").get<double>();
  r.mINP = j.at("mINP").get<double>();
  r.num_queries = j.at("num_queries").get<Index>();
  r.num_gallery = j.at("num_gallery").get<Index>();
  r.stage = j.at("stage").get<std::string>();
  r.seed = j.at("seed").get<long long>();
  r.config_hash = j.at("config_hash").get<std::string>();
  return r;
}

void write_text(const fs::path& file, const std::string& content) {
  std::ofstream out(file, std::ios::binary);
  if (!out) throw HarnessError("cannot write " + file.string());
  out << content;
}

// Person ids of a split's captions mapped to dense class indices in sorted
// person-id order; shared between the classifier head and the id loss.
std::map<int, int> class_map_of(const Split& split) {
  std::set<int> ids(split.image_ids.begin(), split.image_ids.end());
  std::map<int, int> mapping;
  int next = 0;
  for (int id : ids) mapping[id] = next++;
  return mapping;
}

// Combined digest of every parameter whose name does NOT start with prefix.
std::uint64_t byte_hash_excluding(const ParamStore& params, const std::string& prefix) {
  std::uint64_t h = 1469598103934665603ULL;
  for (const auto& name : params.names()) {
    if (name.rfind(prefix, 0) == 0) continue;
    const std::uint64_t part = byte_hash(params.get(name).array());
    for (int i = 0; i < 8; ++i) {
      h ^= (part >> (8 * i)) & 0xff;
      h *= 1099511628211ULL;
    }
  }
  return h;
}

std::vector<std::vector<int>> shuffled_batches(int n, int batch, Rng& rng) {
  std::vector<int> perm(n);
  for (int i = 0; i < n; ++i) perm[i] = i;
  std::shuffle(perm.begin(), perm.end(), rng);
  std::vector<std::vector<int>> batches;
  if (n <= batch) {
    batches.push_back(perm);
    return batches;
  }
  for (int start = 0; start + batch <= n; start += batch)
    batches.emplace_back(perm.begin() + start, perm.begin() + start + batch);
  return batches;
}

// Identity-balanced sampler: each batch holds K instances of each of P
// distinct identities, so every anchor has at least one positive.
std::vector<std::vector<int>> pk_batches(const std::vector<std::vector<int>>& by_class, int p,
                                         int batch, int n_instances, Rng& rng) {
  const int p_eff = std::min<int>(p, static_cast<int>(by_class.size()));
  const int k = std::max(1, batch / p_eff);
  const int per_epoch = std::max(1, n_instances / (p_eff * k));
  std::vector<int> deck(by_class.size());
  for (std::size_t i = 0; i < deck.size(); ++i) deck[i] = static_cast<int>(i);
  std::shuffle(deck.begin(), deck.end(), rng);
  std::size_t cursor = 0;
  std::vector<std::vector<int>> batches;
  for (int b = 0; b < per_epoch; ++b) {
    if (cursor + p_eff > deck.size()) {
      std::shuffle(deck.begin(), deck.end(), rng);
      cursor = 0;
    }
    std::vector<int> batch_ids;
    for (int i = 0; i < p_eff; ++i) {
      std::vector<int> instances = by_class[deck[cursor++]];
      std::shuffle(instances.begin(), instances.end(), rng);
      for (int j = 0; j < k; ++j) batch_ids.push_back(instances[j % instances.size()]);
    }
    batches.push_back(std::move(batch_ids));
  }
  return batches;
}

double median_of(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

MetricsReport aggregate_reports(const std::vector<MetricsReport>& per_seed,
                                double (*reduce)(std::vector<double>), const std::string& label) {
  auto pick = [&](double MetricsReport::* field) {
    std::vector<double> vals;
    for (const auto& r : per_seed) vals.push_back(r.*field);
    return reduce(std::move(vals));
  };
  MetricsReport out = per_seed.front();
  out.rank1 = pick(&MetricsReport::rank1);
  out.rank5 = pick(&MetricsReport::rank5);
  out.rank10 = pick(&MetricsReport::rank10);
  out.mAP = pick(&MetricsReport::mAP);
  out.mINP = pick(&MetricsReport::mINP);
  out.stage = label;
  out.seed = -1;
  return out;
}

double min_of(std::vector<double> v) { return *std::min_element(v.begin(), v.end()); }
double max_of(std::vector<double> v) { return *std::max_element(v.begin(), v.end()); }

}  // namespace

void ExperimentConfig::validate() const {
  encoder.validate();
  if (prompts.n_text < 0 || prompts.n_image < 0) throw HarnessError("negative prompt length");
  if (lambda < 0) throw HarnessError("negative identity-loss weight");
  if (epochs < 1 || pretrain_epochs < 1)
    throw HarnessError("need at least one epoch per stage");
  if (batch_size < 1 || p_identities < 1) throw HarnessError("invalid batch shape");
  if (seeds.empty()) throw HarnessError("need at least one seed");
  if (lrs.pretrain <= 0 || lrs.stage1 <= 0 || lrs.finetune <= 0)
    throw HarnessError("learning rates must be positive");
}

ExperimentConfig default_experiment() {
  ExperimentConfig cfg;
  cfg.encoder.text = {2, 48, 4, 2};
  cfg.encoder.image = {2, 48, 4, 2};
  cfg.encoder.joint_dim = 32;
  cfg.encoder.max_len = 16;
  cfg.prompts.n_text = 2;
  cfg.prompts.n_image = 2;
  cfg.prompts.dropout_p = 0.1;
  // Scarce-target regime: few labeled target identities, several captions per
  // image, and a moderate text-register overlap between the two domains.
  cfg.data.target_train_ids = 24;
  cfg.data.register_overlap = 0.4;
  cfg.data.captions_per_image = 3;
  cfg.encoder.image_h = cfg.data.geom.h;
  cfg.encoder.image_w = cfg.data.geom.w;
  cfg.encoder.image_c = cfg.data.geom.c;
  cfg.encoder.patch = cfg.data.geom.patch;
  return cfg;
}

ExperimentConfig load_experiment(const fs::path& file) {
  std::ifstream in(file);
  if (!in) throw HarnessError("cannot read experiment config " + file.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw HarnessError("malformed experiment config " + file.string() + ": " + e.what());
  }
  ExperimentConfig cfg = experiment_from_json(j);
  cfg.validate();
  return cfg;
}

void save_experiment(const fs::path& file, const ExperimentConfig& cfg) {
  write_text(file, experiment_to_json(cfg).dump(2) + "\n");
}

std::string config_hash(const ExperimentConfig& cfg) {
  return hex64(fnv1a(experiment_to_json(cfg).dump()));
}

ModelBundle::ModelBundle(const ExperimentConfig& cfg_in, const Corpus& corpus_in)
    : cfg(cfg_in), corpus(&corpus_in), enc(cfg_in.encoder, corpus_in.vocab.size()) {
  cfg.validate();
}

void init_backbone(ModelBundle& m, long long seed) {
  Rng rng(mix_seed(static_cast<std::uint64_t>(seed), 101));
  m.enc.init_params(m.params, rng);
}

void load_backbone(ModelBundle& m, const fs::path& checkpoint_dir) {
  load_checkpoint(checkpoint_dir, m.params);
}

void add_prompts(ModelBundle& m, long long seed) {
  Rng rng(mix_seed(static_cast<std::uint64_t>(seed), 202));
  init_prompts(m.params, m.cfg.prompts, m.cfg.encoder.text.d_model, m.cfg.encoder.image.d_model,
               rng);
}

void add_classifier(ModelBundle& m, long long seed) {
  const int classes = static_cast<int>(class_map_of(m.corpus->target.train).size());
  if (classes < 2) throw HarnessError("target train split has fewer than two identities");
  Rng rng(mix_seed(static_cast<std::uint64_t>(seed), 303));
  const Index d = m.cfg.encoder.joint_dim;
  Tensor w = Tensor::zeros({d, classes});
  const double std = 1.0 / std::sqrt(static_cast<double>(d));
  for (Index i = 0; i < w.size(); ++i) w.mutable_array()[i] = normal(rng, 0.0, std);
  w.set_requires_grad(true);
  m.params.add("classifier.w", w, true);
}

const char* phase_name(Phase p) {
  switch (p) {
    case Phase::pretrain: return "pretrain";
    case Phase::stage1: return "stage1";
    case Phase::stage2: return "stage2";
    case Phase::baseline: return "baseline";
    case Phase::one_stage: return "one_stage";
  }
  return "unknown";
}

TrainStats train_phase(ModelBundle& m, Phase phase, long long seed, const fs::path& run_dir) {
  fs::create_directories(run_dir);
  const ExperimentConfig& cfg = m.cfg;
  const bool on_source = phase == Phase::pretrain;
  const Split& split = on_source ? m.corpus->source.train : m.corpus->target.train;
  if (split.captions.empty()) throw HarnessError("training split has no samples");

  switch (phase) {
    case Phase::pretrain:
    case Phase::baseline: set_stage_trainability(m.params, Stage::baseline); break;
    case Phase::stage1: set_stage_trainability(m.params, Stage::stage1); break;
    case Phase::stage2: set_stage_trainability(m.params, Stage::stage2); break;
    case Phase::one_stage: set_stage_trainability(m.params, Stage::one_stage); break;
  }
  const bool use_prompts = phase == Phase::stage1 || phase == Phase::stage2 ||
                           phase == Phase::one_stage;
  const bool use_classifier = phase == Phase::stage2 || phase == Phase::one_stage;
  const bool id_aware = phase == Phase::stage1 || use_classifier;
  if (use_classifier && !m.params.has("classifier.w"))
    throw HarnessError("phase needs a classifier head; call add_classifier first");

  const int epochs = phase == Phase::pretrain ? cfg.pretrain_epochs : cfg.epochs;
  LrSchedule sched;
  sched.base_lr = phase == Phase::pretrain ? cfg.lrs.pretrain
                  : phase == Phase::stage1 ? cfg.lrs.stage1
                                           : cfg.lrs.finetune;
  sched.warmup_epochs = cfg.warmup_epochs;
  sched.warmup_start_lr = cfg.warmup_start_lr;
  sched.total_epochs = epochs;
  sched.min_lr = cfg.min_lr;
  sched.classifier_multiplier = cfg.classifier_multiplier;

  Adam adam;
  if (use_classifier) adam.set_lr_multiplier("classifier.", cfg.classifier_multiplier);
  // Prompts always train at the stage-1 rate: in joint training the base rate
  // is the fine-tuning rate, so the prompt group gets the ratio on top.
  if (phase == Phase::one_stage)
    adam.set_lr_multiplier("prompt.", cfg.lrs.stage1 / cfg.lrs.finetune);

  // Freeze contracts, checked by digest after the stage completes.
  const std::uint64_t frozen_encoder =
      phase == Phase::stage1 ? byte_hash_excluding(m.params, "prompt.") : 0;
  const std::uint64_t frozen_prompts =
      phase == Phase::stage2 ? byte_hash(m.params, "prompt.") : 0;

  // Static per-split caches: token ids per caption, patch grid per image,
  // dense class per caption instance.
  const int n = static_cast<int>(split.captions.size());
  std::vector<std::vector<int>> tokens(n);
  for (int i = 0; i < n; ++i)
    tokens[i] = tokenize(split.captions[i].caption, m.corpus->vocab, cfg.encoder.max_len);
  std::vector<Tensor> grids(split.images.size());
  for (std::size_t i = 0; i < split.images.size(); ++i)
    grids[i] = patchify(split.images[i], cfg.encoder.image_h, cfg.encoder.image_w,
                        cfg.encoder.image_c, cfg.encoder.patch);
  const std::map<int, int> classes = class_map_of(split);
  std::vector<int> instance_class(n);
  std::vector<std::vector<int>> by_class(classes.size());
  for (int i = 0; i < n; ++i) {
    instance_class[i] = classes.at(split.captions[i].person_id);
    by_class[instance_class[i]].push_back(i);
  }

  const std::uint64_t phase_seed =
      mix_seed(static_cast<std::uint64_t>(seed), 7000 + static_cast<int>(phase));
  const std::string stage_label = phase_name(phase);

  const fs::path log_path = run_dir / "training_log.csv";
  const bool new_log = !fs::exists(log_path);
  std::ofstream log(log_path, std::ios::app);
  if (!log) throw HarnessError("cannot write " + log_path.string());
  if (new_log) log << "step,stage,epoch,lr,classifier_lr,loss,loss_itc,loss_id\n";

  TrainStats stats;
  for (int epoch = 0; epoch < epochs; ++epoch) {
    const double lr = sched.lr_at(epoch);
    Rng order_rng(mix_seed(phase_seed, 100 + epoch));
    const std::vector<std::vector<int>> batches =
        id_aware ? pk_batches(by_class, cfg.p_identities, cfg.batch_size, n, order_rng)
                 : shuffled_batches(n, cfg.batch_size, order_rng);

    double loss_sum = 0;
    for (std::size_t bi = 0; bi < batches.size(); ++bi) {
      const std::vector<int>& batch = batches[bi];
      const int b = static_cast<int>(batch.size());
      const std::uint64_t batch_seed = mix_seed(phase_seed, 1000000 + epoch * 10000 + bi);

      std::vector<Tensor> text_feats(b), image_feats(b);
      parallel_for(b, [&](long long i) {
        const int inst = batch[i];
        Rng srng(mix_seed(batch_seed, i));
        if (use_prompts) {
          Tensor tp = prompt_view(m.params, kTextPromptName, cfg.prompts.dropout_p, true, srng);
          Tensor ip = prompt_view(m.params, kImagePromptName, cfg.prompts.dropout_p, true, srng);
          text_feats[i] = m.enc.encode_text(m.params, tokens[inst], &tp).feature;
          image_feats[i] =
              m.enc.encode_image(m.params, grids[split.captions[inst].image_index], &ip).feature;
        } else {
          text_feats[i] = m.enc.encode_text(m.params, tokens[inst]).feature;
          image_feats[i] =
              m.enc.encode_image(m.params, grids[split.captions[inst].image_index]).feature;
        }
      });
      Tensor texts = stack_features(text_feats);
      Tensor images = stack_features(image_feats);
      Tensor sim = scaled_similarity(texts, images, m.enc.logit_scale(m.params));

      std::vector<int> batch_classes(b);
      for (int i = 0; i < b; ++i) batch_classes[i] = instance_class[batch[i]];

      Tensor loss;
      double v_itc = 0, v_id = 0;
      if (!id_aware) {
        loss = infonce(sim);
        v_itc = loss.item();
      } else if (!use_classifier) {
        loss = l_itc(sim, batch_classes);
        v_itc = loss.item();
      } else {
        Tensor itc = l_itc(sim, batch_classes);
        Tensor idl = id_loss(texts, images, batch_classes, m.params.get("classifier.w"));
        v_itc = itc.item();
        v_id = idl.item();
        loss = add(itc, scale(idl, cfg.lambda));
      }

      m.params.zero_grad();
      backward(loss);
      adam.step(m.params, lr);

      const double classifier_lr = use_classifier ? lr * cfg.classifier_multiplier : 0.0;
      log << stats.steps << ',' << stage_label << ',' << epoch << ',' << fmt(lr) << ','
          << fmt(classifier_lr) << ',' << fmt(loss.item()) << ',' << fmt(v_itc) << ','
          << fmt(v_id) << '\n';
      loss_sum += loss.item();
      ++stats.steps;
    }
    stats.epoch_mean_loss.push_back(loss_sum / static_cast<double>(batches.size()));
  }
  log.flush();

  if (phase == Phase::stage1 && byte_hash_excluding(m.params, "prompt.") != frozen_encoder)
    throw HarnessError("freeze contract violated: an encoder parameter changed during stage 1");
  if (phase == Phase::stage2 && byte_hash(m.params, "prompt.") != frozen_prompts)
    throw HarnessError("freeze contract violated: a prompt changed during stage 2");

  CheckpointMeta meta;
  meta.epoch = epochs;
  meta.stage = stage_label;
  meta.config_hash = config_hash(cfg);
  save_checkpoint(run_dir / (std::string("checkpoint_") + stage_label), m.params, meta, &adam);
  return stats;
}

MetricsReport eval_bundle(ModelBundle& m, const Split& split, bool with_prompts,
                          const std::string& stage, long long seed) {
  if (split.captions.empty() || split.images.empty())
    throw HarnessError("cannot evaluate an empty split");
  if (with_prompts &&
      (!m.params.has(kTextPromptName) || !m.params.has(kImagePromptName)))
    throw HarnessError("prompt evaluation requested but no prompts are present");

  const Index q = static_cast<Index>(split.captions.size());
  const Index g = static_cast<Index>(split.images.size());
  const Index d = m.cfg.encoder.joint_dim;
  Tensor text_feats = Tensor::zeros({q, d});
  Tensor image_feats = Tensor::zeros({g, d});
  std::vector<int> query_ids(q);

  parallel_for(q, [&](long long i) {
    NoGradGuard guard;
    const auto toks =
        tokenize(split.captions[i].caption, m.corpus->vocab, m.cfg.encoder.max_len);
    Tensor prompt;
    const Tensor* pp = nullptr;
    if (with_prompts) {
      prompt = m.params.get(kTextPromptName);
      pp = &prompt;
    }
    const Tensor f = m.enc.encode_text(m.params, toks, pp).feature;
    for (Index k = 0; k < d; ++k) text_feats.mutable_array()[i * d + k] = f.array()[k];
    query_ids[i] = split.captions[i].person_id;
  });
  parallel_for(g, [&](long long i) {
    NoGradGuard guard;
    const Tensor grid = patchify(split.images[i], m.cfg.encoder.image_h, m.cfg.encoder.image_w,
                                 m.cfg.encoder.image_c, m.cfg.encoder.patch);
    Tensor prompt;
    const Tensor* pp = nullptr;
    if (with_prompts) {
      prompt = m.params.get(kImagePromptName);
      pp = &prompt;
    }
    const Tensor f = m.enc.encode_image(m.params, grid, pp).feature;
    for (Index k = 0; k < d; ++k) image_feats.mutable_array()[i * d + k] = f.array()[k];
  });

  MetricsReport report = evaluate_features(text_feats, query_ids, image_feats, split.image_ids);
  report.stage = stage;
  report.seed = seed;
  report.config_hash = config_hash(m.cfg);
  return report;
}

void save_report(const fs::path& file, const MetricsReport& report) {
  write_text(file, report_to_json(report).dump(2) + "\n");
}

MetricsReport load_report(const fs::path& file) {
  std::ifstream in(file);
  if (!in) throw HarnessError("cannot read report " + file.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw HarnessError("malformed report " + file.string() + ": " + e.what());
  }
  return report_from_json(j);
}

MetricsReport pretrain_source(const ExperimentConfig& cfg, const Corpus& corpus, long long seed,
                              const fs::path& out_dir) {
  ModelBundle m(cfg, corpus);
  init_backbone(m, seed);
  train_phase(m, Phase::pretrain, seed, out_dir);
  MetricsReport report = eval_bundle(m, corpus.source.test, false, "pretrain", seed);
  save_report(out_dir / "source_test.json", report);
  return report;
}

Strategy parse_strategy(const std::string& name) {
  if (name == "baseline") return Strategy::baseline;
  if (name == "one_stage" || name == "one-stage") return Strategy::one_stage;
  if (name == "two_stage" || name == "two-stage") return Strategy::two_stage;
  throw HarnessError("unknown strategy '" + name +
                     "' (expected baseline, one-stage, or two-stage)");
}

const char* strategy_name(Strategy s) {
  switch (s) {
    case Strategy::baseline: return "baseline";
    case Strategy::one_stage: return "one_stage";
    case Strategy::two_stage: return "two_stage";
  }
  return "unknown";
}

MetricsReport run_adaptation(const ExperimentConfig& cfg, const Corpus& corpus, Strategy strategy,
                             const fs::path& backbone_dir, long long seed,
                             const fs::path& run_dir) {
  ModelBundle m(cfg, corpus);
  load_backbone(m, backbone_dir);
  switch (strategy) {
    case Strategy::baseline:
      train_phase(m, Phase::baseline, seed, run_dir);
      break;
    case Strategy::one_stage:
      add_prompts(m, seed);
      add_classifier(m, seed);
      train_phase(m, Phase::one_stage, seed, run_dir);
      break;
    case Strategy::two_stage:
      add_prompts(m, seed);
      train_phase(m, Phase::stage1, seed, run_dir);
      add_classifier(m, seed);
      train_phase(m, Phase::stage2, seed, run_dir);
      break;
  }
  const bool with_prompts = strategy != Strategy::baseline;
  MetricsReport report =
      eval_bundle(m, corpus.target.test, with_prompts, strategy_name(strategy), seed);
  save_report(run_dir / "metrics.json", report);
  return report;
}

StrategyOutcome run_strategy(const ExperimentConfig& cfg, const Corpus& corpus, Strategy strategy,
                             const fs::path& backbone_dir, const std::vector<long long>& seeds,
                             const fs::path& out_dir) {
  if (seeds.empty()) throw HarnessError("need at least one seed");
  StrategyOutcome outcome;
  for (long long seed : seeds) {
    const fs::path run_dir = out_dir / strategy_name(strategy) / ("seed_" + std::to_string(seed));
    outcome.per_seed.push_back(run_adaptation(cfg, corpus, strategy, backbone_dir, seed, run_dir));
  }
  const std::string label = strategy_name(strategy);
  outcome.median = aggregate_reports(outcome.per_seed, median_of, label + "_median");
  outcome.lo = aggregate_reports(outcome.per_seed, min_of, label + "_min");
  outcome.hi = aggregate_reports(outcome.per_seed, max_of, label + "_max");

  json summary{{"strategy", label},
               {"config_hash", config_hash(cfg)},
               {"per_seed", json::array()},
               {"median", report_to_json(outcome.median)},
               {"min", report_to_json(outcome.lo)},
               {"max", report_to_json(outcome.hi)}};
  std::string csv = "strategy,seed,rank1,rank5,rank10,mAP,mINP\n";
  for (const auto& r : outcome.per_seed) {
    summary["per_seed"].push_back(report_to_json(r));
    csv += label + "," + std::to_string(r.seed) + "," + fmt(r.rank1) + "," + fmt(r.rank5) + "," +
           fmt(r.rank10) + "," + fmt(r.mAP) + "," + fmt(r.mINP) + "\n";
  }
  fs::create_directories(out_dir / label);
  write_text(out_dir / label / "summary.json", summary.dump(2) + "\n");
  write_text(out_dir / label / "summary.csv", csv);
  return outcome;
}

std::vector<SweepEntry> ablate_prompt_length(const ExperimentConfig& cfg, const Corpus& corpus,
                                             const fs::path& backbone_dir,
                                             std::vector<std::pair<int, int>> lengths,
                                             const std::vector<long long>& seeds,
                                             const fs::path& out_dir) {
  if (lengths.empty()) throw HarnessError("empty prompt-length sweep");
  const bool has_default = std::any_of(lengths.begin(), lengths.end(),
                                       [](auto& p) { return p.first == 2 && p.second == 2; });
  if (!has_default) lengths.insert(lengths.begin(), {2, 2});

  std::vector<SweepEntry> entries;
  for (const auto& [nt, ni] : lengths) {
    ExperimentConfig swept = cfg;
    swept.prompts.n_text = nt;
    swept.prompts.n_image = ni;
    for (long long seed : seeds) {
      const fs::path run_dir = out_dir / ("len_" + std::to_string(nt) + "x" + std::to_string(ni)) /
                               ("seed_" + std::to_string(seed));
      SweepEntry e;
      e.n_text = nt;
      e.n_img = ni;
      e.seed = seed;
      e.report =
          run_adaptation(swept, corpus, Strategy::two_stage, backbone_dir, seed, run_dir);
      entries.push_back(std::move(e));
    }
  }

  fs::create_directories(out_dir);
  std::string csv = "n_text,n_img,seed,rank1,rank5,rank10,mAP,mINP\n";
  for (const auto& e : entries)
    csv += std::to_string(e.n_text) + "," + std::to_string(e.n_img) + "," +
           std::to_string(e.seed) + "," + fmt(e.report.rank1) + "," + fmt(e.report.rank5) + "," +
           fmt(e.report.rank10) + "," + fmt(e.report.mAP) + "," + fmt(e.report.mINP) + "\n";
  write_text(out_dir / "sweep.csv", csv);

  // Median per length pair, one polyline per metric.
  std::vector<std::string> labels;
  PlotSeries rank1{"rank1", {}}, map{"mAP", {}}, minp{"mINP", {}};
  for (const auto& [nt, ni] : lengths) {
    labels.push_back(std::to_string(nt) + "x" + std::to_string(ni));
    std::vector<double> r1, mp, mi;
    for (const auto& e : entries)
      if (e.n_text == nt && e.n_img == ni) {
        r1.push_back(e.report.rank1);
        mp.push_back(e.report.mAP);
        mi.push_back(e.report.mINP);
      }
    rank1.values.push_back(median_of(r1));
    map.values.push_back(median_of(mp));
    minp.values.push_back(median_of(mi));
  }
  write_line_chart_svg(out_dir / "sweep.svg", "target-test retrieval vs prompt length", labels,
                       {rank1, map, minp});
  return entries;
}

BenchResult run_benchmark(const ExperimentConfig& cfg, const Corpus& corpus,
                          const fs::path& out_dir) {
  const auto t0 = std::chrono::steady_clock::now();
  BenchResult result;
  const long long seed0 = cfg.seeds.front();
  const fs::path pretrain_dir = out_dir / "pretrain";
  result.source_holdout = pretrain_source(cfg, corpus, seed0, pretrain_dir);

  ModelBundle zero(cfg, corpus);
  load_backbone(zero, pretrain_dir / "checkpoint_pretrain");
  result.zero_shot = eval_bundle(zero, corpus.target.test, false, "zero_shot", seed0);
  save_report(out_dir / "zero_shot.json", result.zero_shot);

  const fs::path backbone = pretrain_dir / "checkpoint_pretrain";
  result.baseline = run_strategy(cfg, corpus, Strategy::baseline, backbone, cfg.seeds, out_dir);
  result.one_stage = run_strategy(cfg, corpus, Strategy::one_stage, backbone, cfg.seeds, out_dir);
  result.two_stage = run_strategy(cfg, corpus, Strategy::two_stage, backbone, cfg.seeds, out_dir);

  result.seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  json summary{{"config_hash", config_hash(cfg)},
               {"seconds", result.seconds},
               {"source_holdout", report_to_json(result.source_holdout)},
               {"zero_shot", report_to_json(result.zero_shot)},
               {"baseline_median", report_to_json(result.baseline.median)},
               {"one_stage_median", report_to_json(result.one_stage.median)},
               {"two_stage_median", report_to_json(result.two_stage.median)}};
  write_text(out_dir / "benchmark.json", summary.dump(2) + "\n");
  return result;
}

void write_line_chart_svg(const fs::path& file, const std::string& title,
                          const std::vector<std::string>& x_labels,
                          const std::vector<PlotSeries>& series) {
  if (x_labels.empty() || series.empty()) throw HarnessError("empty chart");
  const double width = 640, height = 400, left = 60, right = 20, top = 40, bottom = 50;
  const double plot_w = width - left - right, plot_h = height - top - bottom;
  double lo = 0, hi = 1;
  for (const auto& s : series)
    for (double v : s.values) hi = std::max(hi, v);
  hi = std::ceil(hi / 10.0) * 10.0;
  const char* colors[] = {"#c0392b", "#2980b9", "#27ae60", "#8e44ad", "#d35400"};

  auto x_at = [&](std::size_t i) {
    return x_labels.size() == 1
               ? left + plot_w / 2
               : left + plot_w * static_cast<double>(i) / (x_labels.size() - 1);
  };
  auto y_at = [&](double v) { return top + plot_h * (1.0 - (v - lo) / (hi - lo)); };

  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
      << "\" viewBox=\"0 0 " << width << " " << height << "\">\n"
      << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
      << "<text x=\"" << width / 2 << "\" y=\"24\" text-anchor=\"middle\" font-size=\"15\" "
      << "font-family=\"sans-serif\">" << title << "</text>\n";
  for (int tick = 0; tick <= 5; ++tick) {
    const double v = lo + (hi - lo) * tick / 5.0;
    svg << "<line x1=\"" << left << "\" y1=\"" << y_at(v) << "\" x2=\"" << width - right
        << "\" y2=\"" << y_at(v) << "\" stroke=\"#dddddd\"/>\n"
        << "<text x=\"" << left - 8 << "\" y=\"" << y_at(v) + 4
        << "\" text-anchor=\"end\" font-size=\"11\" font-family=\"sans-serif\">" << v
        << "</text>\n";
  }
  for (std::size_t i = 0; i < x_labels.size(); ++i)
    svg << "<text x=\"" << x_at(i) << "\" y=\"" << height - bottom + 18
        << "\" text-anchor=\"middle\" font-size=\"11\" font-family=\"sans-serif\">" << x_labels[i]
        << "</text>\n";
  for (std::size_t s = 0; s < series.size(); ++s) {
    svg << "<polyline fill=\"none\" stroke=\"" << colors[s % 5] << "\" stroke-width=\"2\" points=\"";
    for (std::size_t i = 0; i < series[s].values.size() && i < x_labels.size(); ++i)
      svg << x_at(i) << "," << y_at(series[s].values[i]) << " ";
    svg << "\"/>\n"
        << "<text x=\"" << width - right - 4 << "\" y=\"" << top + 16 + 16 * s
        << "\" text-anchor=\"end\" font-size=\"12\" font-family=\"sans-serif\" fill=\""
        << colors[s % 5] << "\">" << series[s].name << "</text>\n";
  }
  svg << "</svg>\n";
  write_text(file, svg.str());
}

}  // namespace pdlab
