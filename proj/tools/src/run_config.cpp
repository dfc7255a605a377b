#include "run_config.hpp"

#include <charconv>
#include <fstream>
#include <set>

#include "attrsel/error.hpp"
#include "attrsel/experiment.hpp"
#include "attrsel/rng.hpp"

namespace attrsel::cli {

using nlohmann::json;

namespace {

// Reads fields out of one JSON object and complains about leftovers.
class ObjectReader {
 public:
  ObjectReader(const json& j, std::string where) : j_(j), where_(std::move(where)) {
    if (!j_.is_object()) throw ConfigError(where_ + ": expected an object");
  }

  template <typename T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    auto it = j_.find(key);
    if (it == j_.end()) return;
    try {
      out = it->template get<T>();
    } catch (const json::exception&) {
      throw ConfigError(where_ + "." + key + ": wrong type");
    }
  }

  const json* sub(const char* key) {
    seen_.insert(key);
    auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      if (!seen_.count(it.key())) throw ConfigError(where_ + ": unknown key '" + it.key() + "'");
    }
  }

 private:
  const json& j_;
  std::string where_;
  std::set<std::string> seen_;
};

json num_ignore_json(std::size_t k) {
  if (k == kIgnoreAll) return "ALL";
  return k;
}

std::size_t num_ignore_from_json(const json& j) {
  if (j.is_string()) return parse_num_ignore(j.get<std::string>());
  if (j.is_number_unsigned()) return j.get<std::size_t>();
  if (j.is_number_integer() && j.get<long long>() >= 0) return j.get<std::size_t>();
  throw ConfigError("loss.num_ignore: expected a non-negative integer or \"ALL\"");
}

json loss_json(const LossConfig& l) {
  return {{"mode", std::string(to_string(l.mode))},
          {"gamma_pos", l.gamma_pos},
          {"gamma_neg", l.gamma_neg},
          {"gamma_feasible", l.gamma_feasible},
          {"gamma_infeasible", l.gamma_infeasible},
          {"num_ignore", num_ignore_json(l.num_ignore)},
          {"sample_with_replacement", l.sample_with_replacement},
          {"ignore_cadence", std::string(to_string(l.cadence))}};
}

LossConfig loss_from_json(const json& j) {
  LossConfig l;
  ObjectReader r(j, "loss");
  std::string mode(to_string(l.mode));
  std::string cadence(to_string(l.cadence));
  r.get("mode", mode);
  r.get("gamma_pos", l.gamma_pos);
  r.get("gamma_neg", l.gamma_neg);
  r.get("gamma_feasible", l.gamma_feasible);
  r.get("gamma_infeasible", l.gamma_infeasible);
  if (const json* k = r.sub("num_ignore")) l.num_ignore = num_ignore_from_json(*k);
  r.get("sample_with_replacement", l.sample_with_replacement);
  r.get("ignore_cadence", cadence);
  r.finish();
  auto m = parse_loss_mode(mode);
  if (!m) throw ConfigError("loss.mode: unknown mode '" + mode + "'");
  l.mode = *m;
  auto c = parse_ignore_cadence(cadence);
  if (!c) throw ConfigError("loss.ignore_cadence: unknown cadence '" + cadence + "'");
  l.cadence = *c;
  return l;
}

json train_json(const TrainConfig& t) {
  return {{"lr_backbone", t.lr_backbone}, {"lr_head", t.lr_head},
          {"epochs", t.epochs},           {"batch_size", t.batch_size},
          {"adam_beta1", t.adam_beta1},   {"adam_beta2", t.adam_beta2},
          {"adam_eps", t.adam_eps},       {"object_embed_dim", t.object_embed_dim},
          {"hidden_dim", t.hidden_dim}};
}

void train_from_json(const json& j, TrainConfig& t) {
  ObjectReader r(j, "train");
  r.get("lr_backbone", t.lr_backbone);
  r.get("lr_head", t.lr_head);
  r.get("epochs", t.epochs);
  r.get("batch_size", t.batch_size);
  r.get("adam_beta1", t.adam_beta1);
  r.get("adam_beta2", t.adam_beta2);
  r.get("adam_eps", t.adam_eps);
  r.get("object_embed_dim", t.object_embed_dim);
  r.get("hidden_dim", t.hidden_dim);
  r.finish();
}

json paths_json(const RunPaths& p) {
  return {{"dataset", p.dataset},   {"test_dataset", p.test_dataset},
          {"embeddings", p.embeddings}, {"scores", p.scores},
          {"presence", p.presence}, {"feasible", p.feasible},
          {"checkpoint", p.checkpoint}, {"report", p.report}};
}

RunPaths paths_from_json(const json& j) {
  RunPaths p;
  ObjectReader r(j, "paths");
  r.get("dataset", p.dataset);
  r.get("test_dataset", p.test_dataset);
  r.get("embeddings", p.embeddings);
  r.get("scores", p.scores);
  r.get("presence", p.presence);
  r.get("feasible", p.feasible);
  r.get("checkpoint", p.checkpoint);
  r.get("report", p.report);
  r.finish();
  return p;
}

}  // namespace

std::string format_num_ignore(std::size_t k) {
  return k == kIgnoreAll ? std::string("ALL") : std::to_string(k);
}

std::size_t parse_num_ignore(const std::string& s) {
  if (s == "ALL" || s == "all") return kIgnoreAll;
  std::size_t v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || s.empty()) {
    throw ConfigError("num_ignore: expected a non-negative integer or ALL, got '" + s + "'");
  }
  return v;
}

json to_json(const SyntheticSpec& s) {
  return {{"n_objects", s.n_objects},
          {"n_attributes", s.n_attributes},
          {"n_instances", s.n_instances},
          {"feature_dim", s.feature_dim},
          {"annotation_rate", s.annotation_rate},
          {"tail_skew", s.tail_skew},
          {"oracle_noise", s.oracle_noise},
          {"feature_noise", s.feature_noise},
          {"positive_salience", s.positive_salience},
          {"test_fraction", s.test_fraction},
          {"seed", s.seed}};
}

SyntheticSpec synthetic_spec_from_json(const json& j) {
  SyntheticSpec s;
  ObjectReader r(j, "synthetic");
  r.get("n_objects", s.n_objects);
  r.get("n_attributes", s.n_attributes);
  r.get("n_instances", s.n_instances);
  r.get("feature_dim", s.feature_dim);
  r.get("annotation_rate", s.annotation_rate);
  r.get("tail_skew", s.tail_skew);
  r.get("oracle_noise", s.oracle_noise);
  r.get("feature_noise", s.feature_noise);
  r.get("positive_salience", s.positive_salience);
  r.get("test_fraction", s.test_fraction);
  r.get("seed", s.seed);
  r.finish();
  return s;
}

void RunConfig::validate() const {
  loss.validate();
  train.validate();
  score.validate();
  if (thresholds.head_min <= thresholds.tail_max) {
    throw ConfigError("eval.head_min must exceed eval.tail_max");
  }
  if (synthetic) synthetic->validate();
}

RunConfig benchmark_run_config() {
  const ExperimentConfig e = benchmark_experiment();
  RunConfig c;
  c.loss = e.loss;
  c.train = e.train;
  c.score = e.score;
  c.feasible = e.feasible;
  c.thresholds = e.thresholds;
  c.eval = e.eval;
  c.synthetic = e.synth;
  return c;
}

json to_json(const RunConfig& c) {
  json j = {{"seed", c.train.seed},
            {"paths", paths_json(c.paths)},
            {"loss", loss_json(c.loss)},
            {"train", train_json(c.train)},
            {"score", {{"tau", c.score.tau}}},
            {"feasible", {{"include_negatives", c.feasible.include_negatives}}},
            {"eval",
             {{"head_min", c.thresholds.head_min},
              {"tail_max", c.thresholds.tail_max},
              {"interpolated", c.eval.interpolated}}}};
  if (c.synthetic) j["synthetic"] = to_json(*c.synthetic);
  return j;
}

RunConfig run_config_from_json(const json& j) {
  RunConfig c;
  ObjectReader r(j, "config");
  std::uint64_t seed = c.train.seed;
  r.get("seed", seed);
  if (const json* p = r.sub("paths")) c.paths = paths_from_json(*p);
  if (const json* l = r.sub("loss")) c.loss = loss_from_json(*l);
  if (const json* t = r.sub("train")) train_from_json(*t, c.train);
  c.train.seed = seed;
  if (const json* s = r.sub("score")) {
    ObjectReader sr(*s, "score");
    sr.get("tau", c.score.tau);
    sr.finish();
  }
  if (const json* f = r.sub("feasible")) {
    ObjectReader fr(*f, "feasible");
    fr.get("include_negatives", c.feasible.include_negatives);
    fr.finish();
  }
  if (const json* e = r.sub("eval")) {
    ObjectReader er(*e, "eval");
    er.get("head_min", c.thresholds.head_min);
    er.get("tail_max", c.thresholds.tail_max);
    er.get("interpolated", c.eval.interpolated);
    er.finish();
  }
  if (const json* s = r.sub("synthetic")) c.synthetic = synthetic_spec_from_json(*s);
  r.finish();
  return c;
}

std::string dump_config(const RunConfig& c) { return to_json(c).dump(2) + "\n"; }

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("config file " + path.string() + ": " + e.what());
  }
  return run_config_from_json(j);
}

void save_run_config(const std::filesystem::path& path, const RunConfig& c) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << dump_config(c);
  if (!out) throw DataError("failed writing " + path.string());
}

std::uint64_t model_config_hash(const RunConfig& c) {
  const json j = {{"seed", c.train.seed},
                  {"loss", loss_json(c.loss)},
                  {"train", train_json(c.train)},
                  {"score", {{"tau", c.score.tau}}},
                  {"feasible", {{"include_negatives", c.feasible.include_negatives}}}};
  return fnv1a64(j.dump());
}

}  // namespace attrsel::cli
