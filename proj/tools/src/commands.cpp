#include "commands.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <mutex>
#include <optional>
#include <sstream>
#include <thread>

#include <nlohmann/json.hpp>

#include "attrsel/error.hpp"
#include "attrsel/experiment.hpp"
#include "attrsel/feasible.hpp"
#include "attrsel/trainer.hpp"
#include "attrsel/vlm.hpp"

namespace attrsel::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void require(const std::string& value, const char* flag, const char* what) {
  if (value.empty()) throw ConfigError(std::string(flag) + " is required (" + what + ")");
}

std::ofstream open_out(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open '" + path.string() + "' for writing");
  return out;
}

void write_text(const fs::path& path, const std::string& text) {
  auto out = open_out(path);
  out << text;
  if (!out) throw DataError("failed writing '" + path.string() + "'");
}

fs::path with_suffix(const fs::path& p, const std::string& suffix) {
  return fs::path(p.string() + suffix);
}

FeasibleSets feasible_for(const RunConfig& cfg, const Dataset& train) {
  if (!cfg.paths.feasible.empty() && fs::exists(cfg.paths.feasible)) {
    return load_feasible(cfg.paths.feasible, train);
  }
  FeasibleSets sets = build_feasible(train, cfg.feasible);
  if (!cfg.paths.feasible.empty()) write_feasible(fs::path(cfg.paths.feasible), sets, train);
  return sets;
}

std::optional<PresenceTable> presence_for(const RunConfig& cfg, const Dataset& train,
                                          const FeasibleSets& sets) {
  if (!cfg.paths.presence.empty()) return load_presence(cfg.paths.presence, train, sets);
  if (!cfg.paths.scores.empty()) return load_scores(cfg.paths.scores, train, sets, cfg.score);
  if (!cfg.paths.embeddings.empty()) {
    return score_dataset(train, sets, load_embeddings(cfg.paths.embeddings), cfg.score);
  }
  return std::nullopt;
}

void check_schema(const Dataset& a, const Dataset& b, const char* what) {
  if (a.vocab.names() != b.vocab.names() || a.objects != b.objects ||
      a.feature_dim != b.feature_dim) {
    throw DataError(std::string("schema mismatch between training and ") + what + " datasets");
  }
}

void write_history(const fs::path& path, const std::vector<EpochRecord>& history) {
  auto out = open_out(path);
  for (const EpochRecord& r : history) {
    json j = {{"epoch", r.epoch}, {"mean_loss", r.mean_loss}};
    j["eval_map"] = r.eval_map ? json(*r.eval_map) : json(nullptr);
    out << j.dump() << '\n';
  }
}

void write_truth(const fs::path& path, const Dataset& train, const LabelMatrix& truth) {
  auto out = open_out(path);
  for (std::size_t r = 0; r < truth.rows; ++r) {
    json labels = json::array();
    for (std::size_t c = 0; c < truth.cols; ++c) labels.push_back(int(truth.at(r, c)));
    out << json{{"instance_id", train.instances[r].id}, {"labels", labels}}.dump() << '\n';
  }
}

double sweep_number(const std::string& param, const std::string& value) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(value, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != value.size() || value.empty()) {
    throw ConfigError("sweep " + param + ": cannot parse value '" + value + "'");
  }
  return v;
}

// One (value, seed) point of a sweep over files on disk.
struct FileSweepData {
  Dataset train;
  Dataset test;
  FeasibleSets sets;
  std::vector<Bucket> buckets;
};

double run_file_point(const RunConfig& cfg, const FileSweepData& d) {
  const auto presence = presence_for(cfg, d.train, d.sets);
  const TrainResult res =
      train(d.train, d.sets, presence ? &*presence : nullptr, cfg.loss, cfg.train);
  const ScoreMatrix scores = predict(res.params, d.test.instances);
  return mean_ap(scores, d.test, d.buckets, cfg.eval).overall_map;
}

double run_synthetic_point(const RunConfig& cfg, std::size_t seed_offset) {
  ExperimentConfig e;
  e.synth = *cfg.synthetic;
  e.loss = cfg.loss;
  e.train = cfg.train;
  e.score = cfg.score;
  e.feasible = cfg.feasible;
  e.thresholds = cfg.thresholds;
  e.eval = cfg.eval;
  return run_synthetic_experiment(with_seed_offset(e, seed_offset)).report.overall_map;
}

}  // namespace

void cmd_gen_synth(const SyntheticSpec& spec, const fs::path& out_dir) {
  const SyntheticData data = generate_synthetic(spec);
  fs::create_directories(out_dir);
  const FeasibleSets sets = build_feasible(data.train);
  write_dataset(out_dir / kTrainFile, data.train);
  write_dataset(out_dir / kTestFile, data.test);
  write_truth(out_dir / kTruthFile, data.train, data.truth);
  write_scores(out_dir / kScoresFile, data.oracle_scores, data.train, sets);
  write_feasible(out_dir / kFeasibleFile, sets, data.train);
  write_text(out_dir / kSpecFile, to_json(spec).dump(2) + "\n");
}

void cmd_build_feasible(const RunConfig& cfg, const fs::path& out) {
  require(cfg.paths.dataset, "--dataset", "training split");
  const Dataset train = load_dataset(cfg.paths.dataset);
  write_feasible(out, build_feasible(train, cfg.feasible), train);
}

void cmd_score(const RunConfig& cfg, const fs::path& out) {
  require(cfg.paths.dataset, "--dataset", "instances to score");
  if (cfg.paths.embeddings.empty() && cfg.paths.scores.empty()) {
    throw ConfigError("score needs --embeddings or --scores");
  }
  cfg.score.validate();
  const Dataset train = load_dataset(cfg.paths.dataset);
  const FeasibleSets sets = feasible_for(cfg, train);
  RunConfig c = cfg;
  c.paths.presence.clear();
  if (!c.paths.embeddings.empty()) c.paths.scores.clear();
  write_presence(out, *presence_for(c, train, sets), train);
}

std::vector<EpochRecord> cmd_train(const RunConfig& cfg, std::ostream& log) {
  require(cfg.paths.dataset, "--dataset", "training split");
  require(cfg.paths.checkpoint, "--checkpoint", "output path");
  cfg.validate();
  const Dataset train_set = load_dataset(cfg.paths.dataset);
  const FeasibleSets sets = feasible_for(cfg, train_set);
  const auto presence = presence_for(cfg, train_set, sets);
  if (cfg.loss.mode == LossMode::kSelective && !presence) {
    throw ConfigError(
        "selective mode needs presence scores: pass --scores (or --presence / --embeddings)");
  }

  EpochEvaluator evaluator;
  std::optional<Dataset> test;
  std::vector<Bucket> buckets;
  if (!cfg.paths.test_dataset.empty()) {
    test = load_dataset(cfg.paths.test_dataset);
    check_schema(train_set, *test, "test");
    buckets = partition_head_medium_tail(train_set, cfg.thresholds);
    evaluator = [&](const ModelParams& params, std::size_t) -> std::optional<double> {
      return mean_ap(predict(params, test->instances), *test, buckets, cfg.eval).overall_map;
    };
  }

  TrainResult result =
      train(train_set, sets, presence ? &*presence : nullptr, cfg.loss, cfg.train, evaluator);

  Checkpoint ckpt{std::move(result.params), train_set.vocab.names(), train_set.objects,
                  model_config_hash(cfg)};
  const fs::path ckpt_path(cfg.paths.checkpoint);
  if (ckpt_path.has_parent_path()) fs::create_directories(ckpt_path.parent_path());
  write_checkpoint(ckpt_path, ckpt);
  write_history(with_suffix(ckpt_path, ".history.jsonl"), result.history);
  save_run_config(with_suffix(ckpt_path, ".config.json"), cfg);

  if (!result.history.empty()) {
    log << "epochs: " << result.history.size() << "  first loss: " << result.history.front().mean_loss
        << "  final loss: " << result.history.back().mean_loss << '\n';
  }
  log << "checkpoint: " << ckpt_path.string() << '\n';
  return result.history;
}

EvalReport cmd_eval(const RunConfig& cfg, std::ostream& log) {
  require(cfg.paths.checkpoint, "--checkpoint", "trained model");
  require(cfg.paths.test_dataset, "--test-dataset", "evaluation split");
  require(cfg.paths.dataset, "--dataset", "training split for head/medium/tail counts");
  require(cfg.paths.report, "--report", "output path");
  if (cfg.thresholds.head_min <= cfg.thresholds.tail_max) {
    throw ConfigError("--head-min must exceed --tail-max");
  }
  const Checkpoint ckpt = load_checkpoint(cfg.paths.checkpoint);
  const Dataset train_set = load_dataset(cfg.paths.dataset);
  const Dataset test = load_dataset(cfg.paths.test_dataset);
  check_schema(train_set, test, "test");
  const ModelShape& shape = ckpt.params.shape();
  if (ckpt.attributes != test.vocab.names() || ckpt.objects != test.objects ||
      shape.feature_dim != test.feature_dim) {
    throw DataError("checkpoint shape does not match the test dataset");
  }

  const auto buckets = partition_head_medium_tail(train_set, cfg.thresholds);
  const EvalReport report = mean_ap(predict(ckpt.params, test.instances), test, buckets, cfg.eval);

  const fs::path report_path(cfg.paths.report);
  {
    auto out = open_out(report_path);
    write_report_json(out, report, test);
  }
  const std::pair<std::string, EvalReport> row{fs::path(cfg.paths.checkpoint).stem().string(),
                                               report};
  const std::string table = format_report_table(std::span(&row, 1));
  write_text(fs::path(report_path).replace_extension(".txt"), table);
  save_run_config(fs::path(report_path).replace_extension(".config.json"), cfg);
  log << table;
  return report;
}

const std::vector<std::string>& sweep_params() {
  static const std::vector<std::string> names = {
      "num_ignore", "tau",       "annotation_rate", "gamma_pos",
      "gamma_neg",  "gamma_feasible", "gamma_infeasible"};
  return names;
}

RunConfig apply_sweep_value(RunConfig cfg, const std::string& param, const std::string& value) {
  if (param == "num_ignore") {
    cfg.loss.num_ignore = parse_num_ignore(value);
  } else if (param == "tau") {
    cfg.score.tau = sweep_number(param, value);
  } else if (param == "annotation_rate") {
    if (!cfg.synthetic) {
      throw ConfigError("sweeping annotation_rate needs a synthetic block in the config");
    }
    cfg.synthetic->annotation_rate = sweep_number(param, value);
  } else if (param == "gamma_pos") {
    cfg.loss.gamma_pos = sweep_number(param, value);
  } else if (param == "gamma_neg") {
    cfg.loss.gamma_neg = sweep_number(param, value);
  } else if (param == "gamma_feasible") {
    cfg.loss.gamma_feasible = sweep_number(param, value);
  } else if (param == "gamma_infeasible") {
    cfg.loss.gamma_infeasible = sweep_number(param, value);
  } else {
    throw ConfigError("unknown sweep parameter '" + param + "'");
  }
  cfg.validate();
  return cfg;
}

std::vector<SweepRow> cmd_sweep(const RunConfig& cfg, const SweepArgs& args, std::ostream& log) {
  if (args.values.empty()) throw ConfigError("--values must list at least one value");
  if (args.seeds == 0) throw ConfigError("--seeds must be >= 1");
  std::vector<RunConfig> points;
  for (const auto& v : args.values) points.push_back(apply_sweep_value(cfg, args.param, v));

  std::optional<FileSweepData> files;
  if (!cfg.synthetic) {
    require(cfg.paths.dataset, "--dataset", "training split, or a synthetic block");
    require(cfg.paths.test_dataset, "--test-dataset", "evaluation split");
    Dataset train_set = load_dataset(cfg.paths.dataset);
    Dataset test = load_dataset(cfg.paths.test_dataset);
    check_schema(train_set, test, "test");
    FeasibleSets sets = feasible_for(cfg, train_set);
    auto buckets = partition_head_medium_tail(train_set, cfg.thresholds);
    files = FileSweepData{std::move(train_set), std::move(test), std::move(sets),
                          std::move(buckets)};
  }

  const std::size_t n_jobs = points.size() * args.seeds;
  std::vector<double> results(n_jobs, 0.0);
  std::vector<std::exception_ptr> errors(n_jobs);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t job = next++; job < n_jobs; job = next++) {
      const std::size_t point = job / args.seeds;
      const std::size_t seed = job % args.seeds;
      try {
        if (files) {
          RunConfig c = points[point];
          c.train.seed += seed;
          results[job] = run_file_point(c, *files);
        } else {
          results[job] = run_synthetic_point(points[point], seed);
        }
      } catch (...) {
        errors[job] = std::current_exception();
      }
    }
  };
  const std::size_t n_threads = std::clamp<std::size_t>(args.parallel, 1, n_jobs);
  if (n_threads == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < n_threads; ++t) pool.emplace_back(worker);
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }

  std::vector<SweepRow> rows;
  for (std::size_t p = 0; p < points.size(); ++p) {
    SweepRow row;
    row.value = args.param == "num_ignore" ? format_num_ignore(points[p].loss.num_ignore)
                                           : args.values[p];
    row.per_seed.assign(results.begin() + p * args.seeds, results.begin() + (p + 1) * args.seeds);
    double sum = 0.0;
    for (double v : row.per_seed) sum += v;
    row.mean_map = sum / static_cast<double>(args.seeds);
    rows.push_back(std::move(row));
  }

  const std::string table = format_sweep_table(args.param, rows);
  if (!args.out_dir.empty()) {
    fs::create_directories(args.out_dir);
    json j = {{"param", args.param}, {"seeds", args.seeds}, {"rows", json::array()}};
    for (const auto& r : rows) {
      j["rows"].push_back({{"value", r.value}, {"mean_map", r.mean_map}, {"per_seed", r.per_seed}});
    }
    write_text(args.out_dir / "sweep.json", j.dump(2) + "\n");
    write_text(args.out_dir / "sweep.txt", table);
    save_run_config(args.out_dir / "run_config.json", cfg);
  }
  log << table;
  return rows;
}

std::string format_sweep_table(const std::string& param, const std::vector<SweepRow>& rows) {
  std::size_t width = param.size();
  for (const auto& r : rows) width = std::max(width, r.value.size());
  std::ostringstream os;
  os << std::left << std::setw(static_cast<int>(width)) << param << "  " << std::right
     << std::setw(8) << "mAP" << '\n';
  os << std::string(width + 10, '-') << '\n';
  for (const auto& r : rows) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%8.2f", 100.0 * r.mean_map);
    os << std::left << std::setw(static_cast<int>(width)) << r.value << "  " << buf << '\n';
  }
  return os.str();
}

}  // namespace attrsel::cli
