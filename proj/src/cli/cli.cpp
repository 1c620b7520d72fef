#include "pprec/cli/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "pprec/common/digest.hpp"
#include "pprec/common/error.hpp"
#include "pprec/common/rng.hpp"
#include "pprec/data/ctr.hpp"
#include "pprec/data/dataset.hpp"
#include "pprec/data/io.hpp"
#include "pprec/data/pipeline.hpp"
#include "pprec/data/synthetic.hpp"
#include "pprec/eval/evaluate.hpp"
#include "pprec/model/checkpoint.hpp"
#include "pprec/model/config.hpp"
#include "pprec/model/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace pprec::cli {

namespace {

// ---------------------------------------------------------------------------
// Shared plumbing
// ---------------------------------------------------------------------------

std::string iso8601_utc_now() {
  const std::time_t now = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

// Every command records what it ran with before it produces anything, so any
// artifact on disk can be traced to (and reproduced from) its inputs: config
// snapshot, root seed, input digests, and the exact command line.
struct RunManifest {
  std::string command;
  std::string subcommand;
  std::uint64_t seed = 0;
  json config = json::object();
  json inputs = json::object();  // path -> content digest
  std::vector<std::string> outputs;
  std::string started_at;
  std::string ended_at;

  fs::path path;

  void add_input(const std::string& file) { inputs[file] = digest_file(file); }

  void write() const {
    json j;
    j["command"] = command;
    j["subcommand"] = subcommand;
    j["seed"] = seed;
    j["config"] = config;
    j["inputs"] = inputs;
    j["outputs"] = outputs;
    j["started_at"] = started_at;
    if (!ended_at.empty()) {
      j["ended_at"] = ended_at;
    }
    std::ofstream out(path);
    if (!out) {
      throw DataError("cannot write manifest " + path.string());
    }
    out << j.dump(2) << "\n";
  }

  // Written once before any artifact, and again with the end timestamp.
  void begin(const fs::path& dir) {
    path = dir / "manifest.json";
    started_at = iso8601_utc_now();
    write();
  }
  void finish() {
    ended_at = iso8601_utc_now();
    write();
  }
};

std::string join_argv(int argc, const char* const* argv) {
  std::string s;
  for (int i = 0; i < argc; ++i) {
    if (i > 0) {
      s += ' ';
    }
    s += argv[i];
  }
  return s;
}

fs::path ensure_out_dir(const std::string& out, bool force) {
  if (out.empty()) {
    throw ConfigError("--out directory is required");
  }
  fs::path dir(out);
  if (fs::exists(dir) && !force) {
    throw ConfigError("output directory '" + out + "' already exists; pass --force to write into it");
  }
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec && !fs::is_directory(dir)) {
    throw DataError("cannot create output directory '" + out + "': " + ec.message());
  }
  return dir;
}

std::string resolve_data_dir(const std::string& flag) {
  if (!flag.empty()) {
    return flag;
  }
  if (const char* env = std::getenv("PPREC_DATA_DIR"); env != nullptr && *env != '\0') {
    return env;
  }
  throw ConfigError("no corpus directory: pass --data or set PPREC_DATA_DIR");
}

void add_corpus_inputs(RunManifest& manifest, const data::CorpusPaths& paths) {
  for (const std::string& file : {paths.news, paths.train, paths.valid, paths.test, paths.clicks}) {
    manifest.add_input(file);
  }
}

std::ofstream open_output(const fs::path& file) {
  std::ofstream out(file);
  if (!out) {
    throw DataError("cannot write " + file.string());
  }
  return out;
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}

std::string fmt_pm(const eval::Aggregate& a) {
  char buf[80];
  std::snprintf(buf, sizeof(buf), "%.4f±%.4f", a.mean, a.stddev);
  return buf;
}

// ---------------------------------------------------------------------------
// Dataset preparation shared by train / evaluate / predict-popularity
// ---------------------------------------------------------------------------

// Everything that decides how a raw corpus turns into a prepared dataset.
// Training derives it from the model config so a checkpoint alone is enough
// to rebuild the exact dataset it was fitted on.
struct PrepSpec {
  double window_hours = 1.0;
  std::size_t max_history = 50;
  std::size_t max_title_words = 30;
  std::size_t max_entities = 5;
  std::uint64_t seed = 42;

  static PrepSpec from_model(const model::ModelConfig& cfg) {
    PrepSpec s;
    s.window_hours = cfg.ctr_window_hours;
    s.max_history = static_cast<std::size_t>(cfg.max_history);
    s.max_title_words = static_cast<std::size_t>(cfg.max_title_words);
    s.max_entities = static_cast<std::size_t>(cfg.max_entities);
    s.seed = cfg.seed;
    return s;
  }

  std::string key() const {
    return fmt(window_hours) + "/" + std::to_string(max_history) + "/" +
           std::to_string(max_title_words) + "/" + std::to_string(max_entities) + "/" +
           std::to_string(seed);
  }
};

data::Dataset prepare_corpus(const std::string& dir, const PrepSpec& spec) {
  data::CtrConfig ctr;
  ctr.window_hours = spec.window_hours;
  data::DatasetLimits limits;
  limits.max_history = spec.max_history;
  limits.max_title_words = spec.max_title_words;
  limits.max_entities = spec.max_entities;
  return data::prepare_dataset(data::CorpusPaths::in_dir(dir), ctr, limits, spec.seed);
}

// A checkpoint knows which corpus it was trained on only through the
// vocabulary digests; refuse to score a different corpus.
void check_vocab_match(const data::Dataset& ds, const model::CheckpointInfo& info,
                       const std::string& checkpoint) {
  if (model::vocabulary_digest(ds.word_vocab) != info.word_vocab_digest ||
      model::vocabulary_digest(ds.entity_vocab) != info.entity_vocab_digest) {
    throw ConfigError("checkpoint '" + checkpoint +
                      "' was trained on a different corpus (vocabulary digests do not match)");
  }
}

json split_to_json(const eval::SplitMetrics& m) {
  json j;
  j["auc"] = m.auc;
  j["mrr"] = m.mrr;
  j["ndcg5"] = m.ndcg5;
  j["ndcg10"] = m.ndcg10;
  j["impressions_scored"] = m.impressions_scored;
  j["excluded_no_positive"] = m.excluded_no_positive;
  j["excluded_no_negative"] = m.excluded_no_negative;
  return j;
}

json report_to_json(const eval::EvalReport& r) {
  json j;
  j["scorer"] = r.scorer;
  j["overall"] = split_to_json(r.overall);
  if (!r.cold_start.empty()) {
    json buckets = json::array();
    for (const eval::BucketMetrics& b : r.cold_start) {
      json bj = split_to_json(b.metrics);
      bj["history_length"] = b.history_length;
      buckets.push_back(bj);
    }
    j["cold_start"] = buckets;
  }
  if (r.diversity.has_value()) {
    json d;
    d["max_k"] = r.diversity->max_k;
    d["ilad_at_k"] = r.diversity->ilad_at_k;
    d["new_topic_ratio_at_k"] = r.diversity->new_topic_ratio_at_k;
    d["excluded_pairs"] = r.diversity->excluded_pairs;
    j["diversity"] = d;
  }
  return j;
}

// ---------------------------------------------------------------------------
// gen-data
// ---------------------------------------------------------------------------

json generator_to_json(const data::GeneratorConfig& g) {
  json j;
  j["users"] = g.users;
  j["news"] = g.news;
  j["topics"] = g.topics;
  j["vocab_words"] = g.vocab_words;
  j["impressions"] = g.impressions;
  j["candidates_per_impression"] = g.candidates_per_impression;
  j["pop_weight"] = g.pop_weight;
  j["pop_half_life_hours"] = g.pop_half_life_hours;
  j["title_words_min"] = g.title_words_min;
  j["title_words_max"] = g.title_words_max;
  j["max_entities"] = g.max_entities;
  j["base_time"] = g.base_time;
  j["publish_span_hours"] = g.publish_span_hours;
  j["bootstrap_hours"] = g.bootstrap_hours;
  j["horizon_hours"] = g.horizon_hours;
  j["train_frac"] = g.train_frac;
  j["valid_frac"] = g.valid_frac;
  j["cold_user_fraction"] = g.cold_user_fraction;
  j["bootstrap_clicks_min"] = g.bootstrap_clicks_min;
  j["bootstrap_clicks_max"] = g.bootstrap_clicks_max;
  j["click_floor"] = g.click_floor;
  j["click_scale"] = g.click_scale;
  j["affinity_secondary"] = g.affinity_secondary;
  j["affinity_floor"] = g.affinity_floor;
  return j;
}

struct GenDataArgs {
  data::GeneratorConfig gen;
  std::uint64_t seed = 42;
  std::string out;
  bool force = false;
};

int cmd_gen_data(const GenDataArgs& args, const std::string& command) {
  const data::SyntheticCorpus corpus = data::generate_synthetic_corpus(args.gen, args.seed);
  const fs::path dir = ensure_out_dir(args.out, args.force);

  RunManifest manifest;
  manifest.command = command;
  manifest.subcommand = "gen-data";
  manifest.seed = args.seed;
  manifest.config = generator_to_json(args.gen);
  manifest.outputs = {"news.jsonl", "impressions_train.jsonl", "impressions_valid.jsonl",
                      "impressions_test.jsonl", "clicks.tsv", "latent_popularity.tsv"};
  manifest.begin(dir);

  data::write_news_jsonl((dir / "news.jsonl").string(), corpus.news);
  data::write_impressions_jsonl((dir / "impressions_train.jsonl").string(), corpus.train);
  data::write_impressions_jsonl((dir / "impressions_valid.jsonl").string(), corpus.valid);
  data::write_impressions_jsonl((dir / "impressions_test.jsonl").string(), corpus.test);
  data::write_clicks_tsv((dir / "clicks.tsv").string(), corpus.clicks);

  // Ground-truth popularity per news, for corpus diagnostics.
  {
    std::ofstream out = open_output(dir / "latent_popularity.tsv");
    out << "newsId\tlatent_popularity\n";
    for (std::size_t i = 0; i < corpus.news.size(); ++i) {
      out << corpus.news[i].id << '\t' << fmt(corpus.latent_popularity[i]) << '\n';
    }
  }
  manifest.finish();

  std::printf("gen-data: %zu news, %zu/%zu/%zu train/valid/test impressions, %zu clicks -> %s\n",
              corpus.news.size(), corpus.train.size(), corpus.valid.size(), corpus.test.size(),
              corpus.clicks.size(), dir.string().c_str());
  return 0;
}

// ---------------------------------------------------------------------------
// preprocess
// ---------------------------------------------------------------------------

struct PreprocessArgs {
  std::string data;
  std::string out;
  bool force = false;
  PrepSpec spec;
};

void write_vocab_tsv(const fs::path& file, const data::Vocabulary& vocab) {
  std::ofstream out = open_output(file);
  out << "id\ttoken\tfrequency\n";
  for (std::size_t id = 0; id < vocab.size(); ++id) {
    out << id << '\t' << vocab.token_of(static_cast<int>(id)) << '\t'
        << vocab.freq_of(static_cast<int>(id)) << '\n';
  }
}

int cmd_preprocess(const PreprocessArgs& args, const std::string& command) {
  const std::string data_dir = resolve_data_dir(args.data);
  const data::Dataset ds = prepare_corpus(data_dir, args.spec);
  const fs::path dir = ensure_out_dir(args.out, args.force);

  RunManifest manifest;
  manifest.command = command;
  manifest.subcommand = "preprocess";
  manifest.seed = args.spec.seed;
  manifest.config = {{"data_dir", data_dir},
                     {"ctr_window_hours", args.spec.window_hours},
                     {"max_history", args.spec.max_history},
                     {"max_title_words", args.spec.max_title_words},
                     {"max_entities", args.spec.max_entities}};
  add_corpus_inputs(manifest, data::CorpusPaths::in_dir(data_dir));
  manifest.outputs = {"word_vocab.tsv", "entity_vocab.tsv", "stats.json"};
  manifest.begin(dir);

  write_vocab_tsv(dir / "word_vocab.tsv", ds.word_vocab);
  write_vocab_tsv(dir / "entity_vocab.tsv", ds.entity_vocab);

  json stats;
  stats["news"] = ds.news.size();
  stats["train_impressions"] = ds.train.size();
  stats["valid_impressions"] = ds.valid.size();
  stats["test_impressions"] = ds.test.size();
  stats["word_vocab_size"] = ds.word_vocab.size();
  stats["entity_vocab_size"] = ds.entity_vocab.size();
  stats["word_vocab_digest"] = model::vocabulary_digest(ds.word_vocab);
  stats["entity_vocab_digest"] = model::vocabulary_digest(ds.entity_vocab);
  stats["dropped_unknown_items"] = ds.dropped_unknown_items;
  stats["dropped_empty_impressions"] = ds.dropped_empty_impressions;
  open_output(dir / "stats.json") << stats.dump(2) << "\n";

  manifest.finish();
  std::printf("preprocess: %zu news, %zu words, %zu entities, %zu/%zu/%zu impressions -> %s\n",
              ds.news.size(), ds.word_vocab.size(), ds.entity_vocab.size(), ds.train.size(),
              ds.valid.size(), ds.test.size(), dir.string().c_str());
  return 0;
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

struct TrainArgs {
  std::string data;
  std::string out;
  std::string config_file;
  bool force = false;
  bool verbose = false;
  bool keep_epoch_checkpoints = false;
  int runs = 1;
  model::ModelConfig cfg;  // after config-file / flag merging
};

int cmd_train(const TrainArgs& args, const std::string& command) {
  if (args.runs < 1) {
    throw ConfigError("--runs must be at least 1");
  }
  args.cfg.validate();
  const std::string data_dir = resolve_data_dir(args.data);
  const fs::path dir = ensure_out_dir(args.out, args.force);

  RunManifest manifest;
  manifest.command = command;
  manifest.subcommand = "train";
  manifest.seed = args.cfg.seed;
  manifest.config = model::to_json(args.cfg);
  manifest.config["runs"] = args.runs;
  manifest.config["data_dir"] = data_dir;
  add_corpus_inputs(manifest, data::CorpusPaths::in_dir(data_dir));
  for (int r = 1; r <= args.runs; ++r) {
    manifest.outputs.push_back("run_" + std::to_string(r) + "/model.ckpt");
  }
  manifest.outputs.push_back("train_log.tsv");
  manifest.outputs.push_back("train_report.json");
  manifest.begin(dir);

  std::ofstream log = open_output(dir / "train_log.tsv");
  log << "run\tepoch\tmean_loss\tvalid_auc\n";

  json runs_json = json::array();
  std::vector<double> best_aucs;
  for (int r = 1; r <= args.runs; ++r) {
    // Run r trains (and prepares its entity sampling) under seed root+r-1, so
    // each checkpoint is self-contained: its stored config rebuilds the very
    // dataset it saw.
    model::ModelConfig run_cfg = args.cfg;
    run_cfg.seed = args.cfg.seed + static_cast<std::uint64_t>(r - 1);
    const data::Dataset ds = prepare_corpus(data_dir, PrepSpec::from_model(run_cfg));

    const fs::path run_dir = dir / ("run_" + std::to_string(r));
    fs::create_directories(run_dir);
    model::PPRecModel model(run_cfg, ds.word_vocab.size(), ds.entity_vocab.size());
    model::TrainOptions options;
    options.verbose = args.verbose;
    if (args.keep_epoch_checkpoints) {
      options.checkpoint_dir = (run_dir / "epochs").string();
      fs::create_directories(options.checkpoint_dir);
    }
    const model::TrainResult result = model::train_model(model, ds, options);

    model::CheckpointInfo info;
    info.word_vocab_digest = model::vocabulary_digest(ds.word_vocab);
    info.entity_vocab_digest = model::vocabulary_digest(ds.entity_vocab);
    info.epoch = result.best_epoch;
    info.valid_auc = result.best_valid_auc;
    const fs::path ckpt = run_dir / "model.ckpt";
    model::save_checkpoint(ckpt.string(), model, info);

    for (const model::EpochLog& e : result.epochs) {
      log << r << '\t' << e.epoch << '\t' << fmt(e.mean_loss) << '\t' << fmt(e.valid_auc) << '\n';
    }
    json rj;
    rj["run"] = r;
    rj["seed"] = run_cfg.seed;
    rj["checkpoint"] = ckpt.string();
    rj["best_epoch"] = result.best_epoch;
    rj["best_valid_auc"] = result.best_valid_auc;
    rj["first_batch_loss"] = result.first_batch_loss;
    rj["trained_pairs"] = result.trained_pairs;
    rj["skipped_impressions"] = result.skipped_impressions;
    runs_json.push_back(rj);
    best_aucs.push_back(result.best_valid_auc);
    std::printf("train: run %d/%d seed %llu best epoch %d valid AUC %.4f\n", r, args.runs,
                static_cast<unsigned long long>(run_cfg.seed), result.best_epoch,
                result.best_valid_auc);
  }

  const eval::Aggregate agg = eval::aggregate_runs(best_aucs);
  json report;
  report["runs"] = runs_json;
  report["aggregate"] = {{"valid_auc", {{"mean", agg.mean}, {"stddev", agg.stddev}}}};
  open_output(dir / "train_report.json") << report.dump(2) << "\n";

  manifest.finish();
  std::printf("train: %d run(s), valid AUC %s -> %s\n", args.runs, fmt_pm(agg).c_str(),
              dir.string().c_str());
  return 0;
}

// ---------------------------------------------------------------------------
// evaluate
// ---------------------------------------------------------------------------

struct EvaluateArgs {
  std::string data;
  std::string out;
  bool force = false;
  std::vector<std::string> checkpoints;
  std::vector<std::string> baselines;
  std::string split = "test";
  bool cold_start = false;
  bool diversity = false;
  int diversity_k = 10;
  int parallel = 1;
  PrepSpec baseline_spec;  // dataset settings for baseline-only evaluation
};

const std::vector<data::PreparedImpression>& pick_split(const data::Dataset& ds,
                                                        const std::string& name) {
  if (name == "train") {
    return ds.train;
  }
  if (name == "valid") {
    return ds.valid;
  }
  if (name == "test") {
    return ds.test;
  }
  throw ConfigError("unknown split '" + name + "' (expected train, valid or test)");
}

std::string ablation_method_name(const model::AblationConfig& ab) {
  std::vector<std::string> parts;
  if (ab.no_popularity_score) parts.push_back("no-popularity-score");
  if (ab.no_matching_score) parts.push_back("no-matching-score");
  if (ab.no_ctr) parts.push_back("no-ctr");
  if (ab.no_content) parts.push_back("no-content");
  if (ab.no_recency) parts.push_back("no-recency");
  if (ab.no_user_popularity) parts.push_back("no-user-popularity");
  if (ab.no_knowledge) parts.push_back("no-knowledge");
  if (parts.empty()) {
    return "pprec";
  }
  std::string name = "pprec[";
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i > 0) {
      name += ',';
    }
    name += parts[i];
  }
  return name + "]";
}

struct MethodRuns {
  std::string method;
  std::vector<eval::EvalReport> reports;
  std::vector<std::string> sources;
};

eval::Aggregate agg_of(const std::vector<eval::EvalReport>& rs, double eval::SplitMetrics::*field) {
  std::vector<double> v;
  v.reserve(rs.size());
  for (const eval::EvalReport& r : rs) {
    v.push_back(r.overall.*field);
  }
  return eval::aggregate_runs(v);
}

int cmd_evaluate(const EvaluateArgs& args, const std::string& command) {
  if (args.checkpoints.empty() && args.baselines.empty()) {
    throw ConfigError("nothing to evaluate: pass --checkpoint and/or --baseline");
  }
  const std::string data_dir = resolve_data_dir(args.data);
  const fs::path dir = ensure_out_dir(args.out, args.force);

  eval::EvalOptions options;
  options.cold_start = args.cold_start;
  options.diversity = args.diversity;
  options.diversity_max_k = args.diversity_k;
  options.threads = args.parallel;

  RunManifest manifest;
  manifest.command = command;
  manifest.subcommand = "evaluate";
  manifest.seed = args.baseline_spec.seed;
  manifest.config = {{"data_dir", data_dir},   {"split", args.split},
                     {"cold_start", args.cold_start}, {"diversity", args.diversity},
                     {"diversity_k", args.diversity_k}, {"parallel", args.parallel},
                     {"baselines", args.baselines}};
  add_corpus_inputs(manifest, data::CorpusPaths::in_dir(data_dir));
  for (const std::string& ckpt : args.checkpoints) {
    manifest.add_input(ckpt);
  }
  manifest.outputs = {"report.tsv", "report.json"};
  if (args.cold_start) {
    manifest.outputs.push_back("cold_start.tsv");
  }
  if (args.diversity) {
    manifest.outputs.push_back("diversity.tsv");
  }
  manifest.begin(dir);

  // Checkpoints sharing dataset settings share one prepared dataset.
  std::map<std::string, std::unique_ptr<data::Dataset>> cache;
  auto dataset_for = [&](const PrepSpec& spec) -> const data::Dataset& {
    auto it = cache.find(spec.key());
    if (it == cache.end()) {
      it = cache.emplace(spec.key(),
                         std::make_unique<data::Dataset>(prepare_corpus(data_dir, spec))).first;
    }
    return *it->second;
  };

  std::vector<MethodRuns> methods;
  auto method_slot = [&](const std::string& name) -> MethodRuns& {
    for (MethodRuns& m : methods) {
      if (m.method == name) {
        return m;
      }
    }
    methods.push_back(MethodRuns{name, {}, {}});
    return methods.back();
  };

  for (const std::string& path : args.checkpoints) {
    model::CheckpointInfo info;
    model::PPRecModel model = model::load_checkpoint(path, &info);
    const data::Dataset& ds = dataset_for(PrepSpec::from_model(model.config()));
    check_vocab_match(ds, info, path);
    eval::ModelScorer scorer(model);
    eval::EvalReport report = eval::evaluate_scorer(scorer, ds, pick_split(ds, args.split), options);
    MethodRuns& slot = method_slot(ablation_method_name(model.config().ablation));
    slot.reports.push_back(std::move(report));
    slot.sources.push_back(path);
  }
  for (const std::string& name : args.baselines) {
    const auto kind = eval::PopularityBaselineScorer::parse(name);
    if (!kind.has_value()) {
      throw ConfigError("unknown baseline '" + name + "' (expected viewnum, recentpop or ctr)");
    }
    const data::Dataset& ds = dataset_for(args.baseline_spec);
    eval::PopularityBaselineScorer scorer(*kind);
    eval::EvalReport report = eval::evaluate_scorer(scorer, ds, pick_split(ds, args.split), options);
    MethodRuns& slot = method_slot(report.scorer);
    slot.reports.push_back(std::move(report));
    slot.sources.push_back("baseline:" + name);
  }

  // report.tsv: one row per method, ranking metrics as mean +/- stddev.
  std::string table = "method\truns\tauc\tmrr\tndcg@5\tndcg@10\timpressions\n";
  json methods_json = json::array();
  for (const MethodRuns& m : methods) {
    const eval::Aggregate auc = agg_of(m.reports, &eval::SplitMetrics::auc);
    const eval::Aggregate mrr = agg_of(m.reports, &eval::SplitMetrics::mrr);
    const eval::Aggregate ndcg5 = agg_of(m.reports, &eval::SplitMetrics::ndcg5);
    const eval::Aggregate ndcg10 = agg_of(m.reports, &eval::SplitMetrics::ndcg10);
    table += m.method + '\t' + std::to_string(m.reports.size()) + '\t' + fmt_pm(auc) + '\t' +
             fmt_pm(mrr) + '\t' + fmt_pm(ndcg5) + '\t' + fmt_pm(ndcg10) + '\t' +
             std::to_string(m.reports.front().overall.impressions_scored) + '\n';

    json mj;
    mj["method"] = m.method;
    mj["aggregate"] = {{"auc", {{"mean", auc.mean}, {"stddev", auc.stddev}}},
                       {"mrr", {{"mean", mrr.mean}, {"stddev", mrr.stddev}}},
                       {"ndcg5", {{"mean", ndcg5.mean}, {"stddev", ndcg5.stddev}}},
                       {"ndcg10", {{"mean", ndcg10.mean}, {"stddev", ndcg10.stddev}}}};
    json runs = json::array();
    for (std::size_t i = 0; i < m.reports.size(); ++i) {
      json rj = report_to_json(m.reports[i]);
      rj["source"] = m.sources[i];
      runs.push_back(rj);
    }
    mj["runs"] = runs;
    methods_json.push_back(mj);
  }
  open_output(dir / "report.tsv") << table;

  json report_json;
  report_json["split"] = args.split;
  // The worker count is an execution detail, not part of the measurement:
  // results are thread-invariant, so it lives in the manifest only and the
  // report stays byte-identical across --parallel settings.
  report_json["options"] = {{"cold_start", args.cold_start},
                            {"diversity", args.diversity},
                            {"diversity_k", args.diversity_k}};
  report_json["methods"] = methods_json;
  open_output(dir / "report.json") << report_json.dump(2) << "\n";

  if (args.cold_start) {
    std::ofstream out = open_output(dir / "cold_start.tsv");
    out << "method\thistory_length\truns\tauc\tmrr\tndcg@5\tndcg@10\timpressions\n";
    for (const MethodRuns& m : methods) {
      for (int k : {0, 1, 3, 5}) {
        std::vector<double> aucs, mrrs, n5s, n10s;
        std::size_t impressions = 0;
        for (const eval::EvalReport& r : m.reports) {
          for (const eval::BucketMetrics& b : r.cold_start) {
            if (b.history_length == k) {
              aucs.push_back(b.metrics.auc);
              mrrs.push_back(b.metrics.mrr);
              n5s.push_back(b.metrics.ndcg5);
              n10s.push_back(b.metrics.ndcg10);
              impressions = b.metrics.impressions_scored;
            }
          }
        }
        if (aucs.empty()) {
          continue;
        }
        out << m.method << '\t' << k << '\t' << aucs.size() << '\t'
            << fmt_pm(eval::aggregate_runs(aucs)) << '\t' << fmt_pm(eval::aggregate_runs(mrrs))
            << '\t' << fmt_pm(eval::aggregate_runs(n5s)) << '\t'
            << fmt_pm(eval::aggregate_runs(n10s)) << '\t' << impressions << '\n';
      }
    }
  }

  if (args.diversity) {
    std::ofstream out = open_output(dir / "diversity.tsv");
    out << "method\tk\tilad\tnew_topic_ratio\n";
    for (const MethodRuns& m : methods) {
      if (!m.reports.front().diversity.has_value()) {
        continue;  // scorer without embeddings
      }
      for (int k = 1; k <= args.diversity_k; ++k) {
        std::vector<double> ilads, ntrs;
        for (const eval::EvalReport& r : m.reports) {
          ilads.push_back(r.diversity->ilad_at_k[static_cast<std::size_t>(k - 1)]);
          ntrs.push_back(r.diversity->new_topic_ratio_at_k[static_cast<std::size_t>(k - 1)]);
        }
        out << m.method << '\t' << k << '\t' << fmt_pm(eval::aggregate_runs(ilads)) << '\t'
            << fmt_pm(eval::aggregate_runs(ntrs)) << '\n';
      }
    }
  }

  manifest.finish();
  std::fputs(table.c_str(), stdout);
  return 0;
}

// ---------------------------------------------------------------------------
// predict-popularity
// ---------------------------------------------------------------------------

struct PredictArgs {
  std::string data;
  std::string out;
  bool force = false;
  std::string checkpoint;
  std::string news_file;  // defaults to <data>/news.jsonl
  std::int64_t time = 0;
  bool ablate_ctr = false;
};

int cmd_predict_popularity(const PredictArgs& args, const std::string& command) {
  const std::string data_dir = resolve_data_dir(args.data);
  model::CheckpointInfo info;
  model::PPRecModel loaded = model::load_checkpoint(args.checkpoint, &info);

  // --ablate-ctr drops the w_c * c_t term without retraining. The switch is
  // forward-only (the parameter set is unchanged), so rebuild under the
  // patched config and carry the weights over.
  model::ModelConfig cfg = loaded.config();
  if (args.ablate_ctr) {
    cfg.ablation.no_ctr = true;
  }
  model::PPRecModel model(cfg, loaded.word_vocab_size(), loaded.entity_vocab_size());
  for (const auto& [name, param] : loaded.params()) {
    model.params().at(name).value = param.value;
  }

  const data::Dataset ds = prepare_corpus(data_dir, PrepSpec::from_model(loaded.config()));
  check_vocab_match(ds, info, args.checkpoint);

  const std::string news_path =
      args.news_file.empty() ? data_dir + "/news.jsonl" : args.news_file;
  const std::vector<data::RawNews> raw_news = data::read_news_jsonl(news_path);
  if (raw_news.empty()) {
    throw DataError("news file '" + news_path + "' holds no articles");
  }

  const fs::path dir = ensure_out_dir(args.out, args.force);
  RunManifest manifest;
  manifest.command = command;
  manifest.subcommand = "predict-popularity";
  manifest.seed = cfg.seed;
  manifest.config = model::to_json(cfg);
  manifest.config["reference_time"] = args.time;
  manifest.config["news_file"] = news_path;
  manifest.config["data_dir"] = data_dir;
  add_corpus_inputs(manifest, data::CorpusPaths::in_dir(data_dir));
  manifest.add_input(args.checkpoint);
  manifest.outputs = {"popularity.tsv"};
  manifest.begin(dir);

  bool any_published = false;
  for (const data::RawNews& n : raw_news) {
    if (n.publish_ts <= args.time) {
      any_published = true;
      break;
    }
  }
  if (!any_published) {
    std::fprintf(stderr,
                 "pprec: warning: reference time %lld precedes every publish time; "
                 "recency clamps to 0\n",
                 static_cast<long long>(args.time));
  }

  struct Row {
    std::string id;
    double ctr, p_c, p_r, theta, s_p;
  };
  std::vector<Row> rows;
  rows.reserve(raw_news.size());
  const data::CtrConfig& ctr_cfg = ds.ctr->config();
  for (const data::RawNews& raw : raw_news) {
    const data::NewsArticle article = data::preprocess_news(
        raw, ds.word_vocab, ds.entity_vocab, cfg.seed, ds.limits.max_title_words,
        ds.limits.max_entities);
    // News known to the corpus get their windowed CTR at the reference time;
    // unseen news fall back to the smoothing prior.
    const auto idx = ds.news_index.find(raw.id);
    const double ctr = idx != ds.news_index.end() ? ds.ctr->ctr(idx->second, args.time)
                                                  : data::smoothed_ctr(0, 0, ctr_cfg);
    const int bin = data::quantize_recency(raw.publish_ts, args.time, cfg.recency_bins - 1);

    core::Tape tape(false);
    core::Var n = model.encode_news(tape, article);
    const double p_c = model.content_popularity(tape, n).item();
    auto [p_r_var, r_emb] = model.recency_popularity(tape, bin);
    const double p_r = p_r_var.item();
    double theta;
    if (cfg.ablation.no_recency) {
      theta = 1.0;
    } else if (cfg.ablation.no_content) {
      theta = 0.0;
    } else {
      theta = model.content_specific_gate(tape, n, r_emb).item();
    }
    const double s_p = model.time_aware_popularity(tape, n, bin, ctr).item();
    rows.push_back({raw.id, ctr, p_c, p_r, theta, s_p});
  }

  double lo = rows.front().s_p;
  double hi = rows.front().s_p;
  for (const Row& r : rows) {
    lo = std::min(lo, r.s_p);
    hi = std::max(hi, r.s_p);
  }
  std::ofstream out = open_output(dir / "popularity.tsv");
  out << "newsId\tc_t\tp_c\tp_r\ttheta\ts_p\ts_p_norm\n";
  for (const Row& r : rows) {
    // A degenerate range (one article or constant scores) normalizes to 0.5.
    const double norm = hi > lo ? (r.s_p - lo) / (hi - lo) : 0.5;
    out << r.id << '\t' << fmt(r.ctr) << '\t' << fmt(r.p_c) << '\t' << fmt(r.p_r) << '\t'
        << fmt(r.theta) << '\t' << fmt(r.s_p) << '\t' << fmt(norm) << '\n';
  }
  out.close();

  manifest.finish();
  std::printf("predict-popularity: %zu rows -> %s\n", rows.size(),
              (dir / "popularity.tsv").string().c_str());
  return 0;
}

// ---------------------------------------------------------------------------
// argument wiring
// ---------------------------------------------------------------------------

void add_prep_flags(CLI::App* sub, PrepSpec* spec) {
  sub->add_option("--ctr-window-hours", spec->window_hours, "Near-real-time CTR window in hours");
  sub->add_option("--max-history", spec->max_history, "Clicked-news history cap");
  sub->add_option("--max-title-words", spec->max_title_words, "Title token cap");
  sub->add_option("--max-entities", spec->max_entities, "Entity cap per news");
  sub->add_option("--seed", spec->seed, "Preparation seed (entity down-sampling)");
}

}  // namespace

int run(int argc, const char* const* argv) {
  CLI::App app{"popularity-aware news ranking: data generation, training, evaluation"};
  app.name("pprec");
  app.require_subcommand(1);
  const std::string command = join_argv(argc, argv);

  // ---- gen-data ----
  GenDataArgs gen;
  CLI::App* g = app.add_subcommand("gen-data", "Generate a synthetic click corpus");
  g->add_option("--users", gen.gen.users, "Number of users");
  g->add_option("--news", gen.gen.news, "Number of news articles");
  g->add_option("--topics", gen.gen.topics, "Number of topics");
  g->add_option("--vocab-words", gen.gen.vocab_words, "Title vocabulary size");
  g->add_option("--impressions", gen.gen.impressions, "Number of impressions");
  g->add_option("--candidates", gen.gen.candidates_per_impression, "Candidates per impression");
  g->add_option("--pop-weight", gen.gen.pop_weight, "Popularity weight in click mix [0,1]");
  g->add_option("--pop-half-life-hours", gen.gen.pop_half_life_hours,
                "Popularity decay half-life (0 = static)");
  g->add_option("--cold-user-fraction", gen.gen.cold_user_fraction,
                "Fraction of users capped to 0/1/3/5-click histories");
  g->add_option("--click-floor", gen.gen.click_floor, "Base click probability");
  g->add_option("--click-scale", gen.gen.click_scale, "Click probability scale");
  g->add_option("--affinity-secondary", gen.gen.affinity_secondary,
                "Interest level for secondary topics");
  g->add_option("--affinity-floor", gen.gen.affinity_floor, "Interest level for other topics");
  g->add_option("--seed", gen.seed, "Generator seed");
  g->add_option("--out", gen.out, "Output corpus directory")->required();
  g->add_flag("--force", gen.force, "Write into an existing directory");

  // ---- preprocess ----
  PreprocessArgs prep;
  CLI::App* p = app.add_subcommand("preprocess", "Prepare a corpus and report vocabularies");
  p->add_option("--data", prep.data, "Corpus directory (default $PPREC_DATA_DIR)");
  p->add_option("--out", prep.out, "Output directory")->required();
  p->add_flag("--force", prep.force, "Write into an existing directory");
  add_prep_flags(p, &prep.spec);

  // ---- train ----
  TrainArgs train;
  model::ModelConfig cl;  // flag receptacle; merged with --config below
  CLI::App* t = app.add_subcommand("train", "Train the ranking model");
  t->add_option("--data", train.data, "Corpus directory (default $PPREC_DATA_DIR)");
  t->add_option("--out", train.out, "Output directory")->required();
  t->add_flag("--force", train.force, "Write into an existing directory");
  t->add_option("--config", train.config_file, "JSON model-config file (flags win)");
  t->add_option("--runs", train.runs, "Independent runs with seeds seed..seed+runs-1");
  t->add_flag("--verbose", train.verbose, "Per-epoch progress on stderr");
  t->add_flag("--keep-epoch-checkpoints", train.keep_epoch_checkpoints,
              "Keep every epoch's checkpoint, not just the final model");
  t->add_option("--epochs", cl.epochs, "Training epochs");
  t->add_option("--batch-size", cl.batch_size, "Impressions per batch");
  t->add_option("--lr", cl.learning_rate, "Adam learning rate");
  t->add_option("--dropout", cl.dropout, "Dropout probability");
  t->add_option("--seed", cl.seed, "Root seed");
  t->add_option("--word-dim", cl.word_emb_dim, "Word embedding dimension");
  t->add_option("--entity-dim", cl.entity_emb_dim, "Entity embedding dimension");
  t->add_option("--heads", cl.attn_heads, "Attention heads");
  t->add_option("--head-dim", cl.head_dim, "Per-head dimension");
  t->add_option("--query-dim", cl.query_dim, "Additive-attention query dimension");
  t->add_option("--gate-hidden", cl.gate_hidden_dim, "Gate hidden width");
  t->add_option("--pop-hidden", cl.pop_hidden_dim, "Popularity net hidden width");
  t->add_option("--recency-dim", cl.recency_emb_dim, "Recency embedding dimension");
  t->add_option("--pop-emb-dim", cl.pop_emb_dim, "User-side popularity embedding dimension");
  t->add_option("--max-history", cl.max_history, "Clicked-news history cap");
  t->add_option("--ctr-window-hours", cl.ctr_window_hours, "CTR window in hours");
  model::AblationConfig ab;
  t->add_flag("--no-popularity-score", ab.no_popularity_score, "Rank by matching score alone");
  t->add_flag("--no-matching-score", ab.no_matching_score, "Rank by popularity score alone");
  t->add_flag("--no-ctr", ab.no_ctr, "Drop the near-real-time CTR term");
  t->add_flag("--no-content", ab.no_content, "Popularity from recency alone");
  t->add_flag("--no-recency", ab.no_recency, "Popularity from content alone");
  t->add_flag("--no-user-popularity", ab.no_user_popularity,
              "Constant popularity embedding in user attention");
  t->add_flag("--no-knowledge", ab.no_knowledge, "Drop entity branches from the news encoder");

  // ---- evaluate ----
  EvaluateArgs ev;
  CLI::App* e = app.add_subcommand("evaluate", "Score checkpoints and baselines on a split");
  e->add_option("--data", ev.data, "Corpus directory (default $PPREC_DATA_DIR)");
  e->add_option("--out", ev.out, "Output directory")->required();
  e->add_flag("--force", ev.force, "Write into an existing directory");
  e->add_option("--checkpoint", ev.checkpoints, "Model checkpoint (repeatable; runs aggregate)");
  e->add_option("--baseline", ev.baselines, "viewnum, recentpop or ctr (repeatable)");
  e->add_option("--split", ev.split, "train, valid or test")->capture_default_str();
  e->add_flag("--cold-start", ev.cold_start, "Bucket by exact history length 0/1/3/5");
  e->add_flag("--diversity", ev.diversity, "ILAD@K and new-topic-ratio@K");
  e->add_option("--diversity-k", ev.diversity_k, "Max K for diversity metrics")
      ->capture_default_str();
  e->add_option("--parallel", ev.parallel, "Worker threads for scoring")->capture_default_str();
  add_prep_flags(e, &ev.baseline_spec);

  // ---- predict-popularity ----
  PredictArgs pred;
  CLI::App* q = app.add_subcommand("predict-popularity",
                                   "Per-news popularity breakdown at a reference time");
  q->add_option("--data", pred.data, "Corpus directory (default $PPREC_DATA_DIR)");
  q->add_option("--out", pred.out, "Output directory")->required();
  q->add_flag("--force", pred.force, "Write into an existing directory");
  q->add_option("--checkpoint", pred.checkpoint, "Model checkpoint")->required();
  q->add_option("--news", pred.news_file, "News file (default <data>/news.jsonl)");
  q->add_option("--time", pred.time, "Reference time, epoch seconds")->required();
  q->add_flag("--ablate-ctr", pred.ablate_ctr, "Drop the CTR term from s_p");

  try {
    app.parse(argc, const_cast<char**>(argv));
  } catch (const CLI::ParseError& err) {
    const int code = app.exit(err);
    return code == 0 ? 0 : static_cast<int>(ErrorKind::config);
  }

  try {
    if (app.got_subcommand(g)) {
      return cmd_gen_data(gen, command);
    }
    if (app.got_subcommand(p)) {
      return cmd_preprocess(prep, command);
    }
    if (app.got_subcommand(t)) {
      // Defaults, then the config file, then explicit flags.
      model::ModelConfig cfg;
      if (!train.config_file.empty()) {
        std::ifstream in(train.config_file);
        if (!in) {
          throw ConfigError("cannot read config file '" + train.config_file + "'");
        }
        json j;
        try {
          in >> j;
        } catch (const json::exception& jex) {
          throw ConfigError("config file '" + train.config_file + "': " + jex.what());
        }
        cfg = model::model_config_from_json(j);
      }
      const auto won = [&](const std::string& flag) { return t->count(flag) > 0; };
      if (won("--epochs")) cfg.epochs = cl.epochs;
      if (won("--batch-size")) cfg.batch_size = cl.batch_size;
      if (won("--lr")) cfg.learning_rate = cl.learning_rate;
      if (won("--dropout")) cfg.dropout = cl.dropout;
      if (won("--seed")) cfg.seed = cl.seed;
      if (won("--word-dim")) cfg.word_emb_dim = cl.word_emb_dim;
      if (won("--entity-dim")) cfg.entity_emb_dim = cl.entity_emb_dim;
      if (won("--heads")) cfg.attn_heads = cl.attn_heads;
      if (won("--head-dim")) cfg.head_dim = cl.head_dim;
      if (won("--query-dim")) cfg.query_dim = cl.query_dim;
      if (won("--gate-hidden")) cfg.gate_hidden_dim = cl.gate_hidden_dim;
      if (won("--pop-hidden")) cfg.pop_hidden_dim = cl.pop_hidden_dim;
      if (won("--recency-dim")) cfg.recency_emb_dim = cl.recency_emb_dim;
      if (won("--pop-emb-dim")) cfg.pop_emb_dim = cl.pop_emb_dim;
      if (won("--max-history")) cfg.max_history = cl.max_history;
      if (won("--ctr-window-hours")) cfg.ctr_window_hours = cl.ctr_window_hours;
      if (ab.no_popularity_score) cfg.ablation.no_popularity_score = true;
      if (ab.no_matching_score) cfg.ablation.no_matching_score = true;
      if (ab.no_ctr) cfg.ablation.no_ctr = true;
      if (ab.no_content) cfg.ablation.no_content = true;
      if (ab.no_recency) cfg.ablation.no_recency = true;
      if (ab.no_user_popularity) cfg.ablation.no_user_popularity = true;
      if (ab.no_knowledge) cfg.ablation.no_knowledge = true;
      train.cfg = cfg;
      return cmd_train(train, command);
    }
    if (app.got_subcommand(e)) {
      return cmd_evaluate(ev, command);
    }
    if (app.got_subcommand(q)) {
      return cmd_predict_popularity(pred, command);
    }
    throw ConfigError("no subcommand given");
  } catch (const Error& err) {
    std::fprintf(stderr, "pprec: %s\n", err.what());
    return static_cast<int>(err.kind());
  } catch (const std::exception& err) {
    std::fprintf(stderr, "pprec: unexpected error: %s\n", err.what());
    return 1;
  }
}

}  // namespace pprec::cli
