#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "CLI11.hpp"
#include "attrsel/error.hpp"
#include "commands.hpp"

namespace attrsel::cli {

namespace {

// Flag values that, when given, override the config file.
struct Overrides {
  std::string config;
  std::string preset;
  std::optional<std::string> dataset, test_dataset, embeddings, scores, presence, feasible,
      checkpoint, report;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> loss_mode, num_ignore, cadence;
  std::optional<double> gamma_pos, gamma_neg, gamma_feasible, gamma_infeasible;
  bool with_replacement = false;
  std::optional<double> lr_head, lr_backbone, tau;
  std::optional<std::size_t> epochs, batch_size, embed_dim, hidden_dim, head_min, tail_max;
  bool include_negatives = false;
  bool interpolated = false;
};

void add_path_flags(CLI::App* cmd, Overrides& o, bool inputs_only) {
  cmd->add_option("--config", o.config, "JSON run config; flags override its values");
  cmd->add_option("--dataset", o.dataset, "Training split (JSONL)");
  cmd->add_option("--feasible", o.feasible, "Feasible-set cache (read if present, else written)");
  if (inputs_only) return;
  cmd->add_option("--test-dataset", o.test_dataset, "Fully labeled evaluation split");
  cmd->add_option("--embeddings", o.embeddings, "Binary embedding table");
  cmd->add_option("--scores", o.scores, "Similarity rows (JSONL) over feasible sets");
  cmd->add_option("--presence", o.presence, "Cached presence distributions (JSONL)");
  cmd->add_option("--checkpoint", o.checkpoint, "Model checkpoint");
  cmd->add_option("--report", o.report, "Evaluation report (JSON)");
}

void add_model_flags(CLI::App* cmd, Overrides& o) {
  cmd->add_option("--preset", o.preset, "Start from a named preset (benchmark)")
      ->check(CLI::IsMember({"benchmark"}));
  cmd->add_option("--seed", o.seed, "Run seed");
  cmd->add_option("--loss-mode", o.loss_mode,
                  "ce_ignoring | ce_negatifying | asl_ignoring | asl_negatifying | selective");
  cmd->add_option("--num-ignore", o.num_ignore, "Ignore-set size per instance, or ALL");
  cmd->add_option("--ignore-cadence", o.cadence, "per_step | fixed");
  cmd->add_flag("--ignore-with-replacement", o.with_replacement,
                "Draw ignore sets with replacement");
  cmd->add_option("--gamma-pos", o.gamma_pos);
  cmd->add_option("--gamma-neg", o.gamma_neg);
  cmd->add_option("--gamma-feasible", o.gamma_feasible);
  cmd->add_option("--gamma-infeasible", o.gamma_infeasible);
  cmd->add_option("--lr-head", o.lr_head);
  cmd->add_option("--lr-backbone", o.lr_backbone, "Learning rate of the hidden layer");
  cmd->add_option("--epochs", o.epochs);
  cmd->add_option("--batch-size", o.batch_size);
  cmd->add_option("--object-embed-dim", o.embed_dim);
  cmd->add_option("--hidden-dim", o.hidden_dim, "0 for a linear head");
  cmd->add_option("--tau", o.tau, "Softmax temperature for presence scores");
  cmd->add_flag("--feasible-include-negatives", o.include_negatives,
                "Count negative annotations when building feasible sets");
}

void add_eval_flags(CLI::App* cmd, Overrides& o) {
  cmd->add_option("--head-min", o.head_min, "Minimum training positives for the head bucket");
  cmd->add_option("--tail-max", o.tail_max, "Maximum training positives for the tail bucket");
  cmd->add_flag("--interpolated-ap", o.interpolated, "Use interpolated precision");
}

template <typename T>
void set_if(const std::optional<T>& v, T& dst) {
  if (v) dst = *v;
}

RunConfig resolve(const Overrides& o) {
  RunConfig c;
  if (o.preset == "benchmark") c = benchmark_run_config();
  if (!o.config.empty()) {
    RunConfig file = load_run_config(o.config);
    c = file;
  }
  set_if(o.dataset, c.paths.dataset);
  set_if(o.test_dataset, c.paths.test_dataset);
  set_if(o.embeddings, c.paths.embeddings);
  set_if(o.scores, c.paths.scores);
  set_if(o.presence, c.paths.presence);
  set_if(o.feasible, c.paths.feasible);
  set_if(o.checkpoint, c.paths.checkpoint);
  set_if(o.report, c.paths.report);
  set_if(o.seed, c.train.seed);
  if (o.loss_mode) {
    auto m = parse_loss_mode(*o.loss_mode);
    if (!m) throw ConfigError("--loss-mode: unknown mode '" + *o.loss_mode + "'");
    c.loss.mode = *m;
  }
  if (o.num_ignore) c.loss.num_ignore = parse_num_ignore(*o.num_ignore);
  if (o.cadence) {
    auto cad = parse_ignore_cadence(*o.cadence);
    if (!cad) throw ConfigError("--ignore-cadence: expected per_step or fixed");
    c.loss.cadence = *cad;
  }
  if (o.with_replacement) c.loss.sample_with_replacement = true;
  set_if(o.gamma_pos, c.loss.gamma_pos);
  set_if(o.gamma_neg, c.loss.gamma_neg);
  set_if(o.gamma_feasible, c.loss.gamma_feasible);
  set_if(o.gamma_infeasible, c.loss.gamma_infeasible);
  set_if(o.lr_head, c.train.lr_head);
  set_if(o.lr_backbone, c.train.lr_backbone);
  set_if(o.epochs, c.train.epochs);
  set_if(o.batch_size, c.train.batch_size);
  set_if(o.embed_dim, c.train.object_embed_dim);
  set_if(o.hidden_dim, c.train.hidden_dim);
  set_if(o.tau, c.score.tau);
  if (o.include_negatives) c.feasible.include_negatives = true;
  set_if(o.head_min, c.thresholds.head_min);
  set_if(o.tail_max, c.thresholds.tail_max);
  if (o.interpolated) c.eval.interpolated = true;
  return c;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Partial-label attribute learning with a selective loss", "attrsel"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "attrsel 0.1.0");

  Overrides o;

  SyntheticSpec spec;
  std::string synth_out;
  std::string synth_preset;
  auto* gen = app.add_subcommand("gen-synth", "Generate a synthetic benchmark");
  gen->add_option("--out-dir", synth_out, "Output directory")->required();
  gen->add_option("--preset", synth_preset, "Start from a named preset (benchmark)")
      ->check(CLI::IsMember({"benchmark"}));
  std::optional<std::uint32_t> n_objects, n_attributes, n_instances, feature_dim;
  std::optional<double> annotation_rate, tail_skew, oracle_noise, feature_noise, salience,
      test_fraction;
  std::optional<std::uint64_t> synth_seed;
  gen->add_option("--n-objects", n_objects);
  gen->add_option("--n-attributes", n_attributes);
  gen->add_option("--n-instances", n_instances);
  gen->add_option("--feature-dim", feature_dim);
  gen->add_option("--annotation-rate", annotation_rate);
  gen->add_option("--tail-skew", tail_skew);
  gen->add_option("--oracle-noise", oracle_noise);
  gen->add_option("--feature-noise", feature_noise);
  gen->add_option("--positive-salience", salience,
                  "Relative annotation weight of present attributes");
  gen->add_option("--test-fraction", test_fraction);
  gen->add_option("--seed", synth_seed);

  std::string feasible_out;
  auto* bf = app.add_subcommand("build-feasible", "Compute per-object feasible attribute sets");
  add_path_flags(bf, o, true);
  bf->add_option("--out", feasible_out, "Output JSON")->required();
  bf->add_flag("--feasible-include-negatives", o.include_negatives,
               "Count negative annotations as co-occurrence");

  std::string score_out;
  auto* sc = app.add_subcommand("score", "Compute presence distributions");
  add_path_flags(sc, o, true);
  sc->add_option("--embeddings", o.embeddings, "Binary embedding table");
  sc->add_option("--scores", o.scores, "Similarity rows (JSONL), used without --embeddings");
  sc->add_option("--tau", o.tau, "Softmax temperature");
  sc->add_flag("--feasible-include-negatives", o.include_negatives);
  sc->add_option("--out", score_out, "Output presence JSONL")->required();

  auto* tr = app.add_subcommand("train", "Train a model and write a checkpoint");
  add_path_flags(tr, o, false);
  add_model_flags(tr, o);
  add_eval_flags(tr, o);

  auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint on a fully labeled split");
  add_path_flags(ev, o, false);
  add_eval_flags(ev, o);

  SweepArgs sweep;
  std::string sweep_out;
  auto* sw = app.add_subcommand("sweep", "Train and evaluate over values of one parameter");
  add_path_flags(sw, o, false);
  add_model_flags(sw, o);
  add_eval_flags(sw, o);
  sw->add_option("--param", sweep.param, "num_ignore | tau | annotation_rate | gamma_*")
      ->required();
  sw->add_option("--values", sweep.values, "Values to sweep (ALL allowed for num_ignore)")
      ->required()
      ->delimiter(',');
  sw->add_option("--seeds", sweep.seeds, "Seeds averaged per value");
  sw->add_option("--parallel", sweep.parallel, "Sweep points run concurrently");
  sw->add_option("--out-dir", sweep_out, "Directory for sweep.json, sweep.txt and the config");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*gen) {
      if (synth_preset == "benchmark") spec = benchmark_run_config().synthetic.value();
      set_if(n_objects, spec.n_objects);
      set_if(n_attributes, spec.n_attributes);
      set_if(n_instances, spec.n_instances);
      set_if(feature_dim, spec.feature_dim);
      set_if(annotation_rate, spec.annotation_rate);
      set_if(tail_skew, spec.tail_skew);
      set_if(oracle_noise, spec.oracle_noise);
      set_if(feature_noise, spec.feature_noise);
      set_if(salience, spec.positive_salience);
      set_if(test_fraction, spec.test_fraction);
      set_if(synth_seed, spec.seed);
      cmd_gen_synth(spec, synth_out);
      out << "wrote synthetic benchmark to " << synth_out << '\n';
    } else if (*bf) {
      cmd_build_feasible(resolve(o), feasible_out);
    } else if (*sc) {
      cmd_score(resolve(o), score_out);
    } else if (*tr) {
      cmd_train(resolve(o), out);
    } else if (*ev) {
      cmd_eval(resolve(o), out);
    } else if (*sw) {
      sweep.out_dir = sweep_out;
      cmd_sweep(resolve(o), sweep, out);
    }
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  } catch (const NumericError& e) {
    err << "numeric failure: " << e.what() << '\n';
    return 3;
  } catch (const DataError& e) {
    err << "data error: " << e.what() << '\n';
    return 2;
  } catch (const nlohmann::json::exception& e) {
    err << "data error: " << e.what() << '\n';
    return 2;
  } catch (const std::filesystem::filesystem_error& e) {
    err << "data error: " << e.what() << '\n';
    return 2;
  } catch (const std::out_of_range& e) {
    err << "data error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}

}  // namespace attrsel::cli
