// Acceptance suite: prints one PASS/FAIL line per criterion and exits
// non-zero if any criterion fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include "attrsel/experiment.hpp"
#include "attrsel/loss.hpp"
#include "attrsel/rng.hpp"
#include "attrsel/trainer.hpp"
#include "attrsel/vlm.hpp"
#include "commands.hpp"
#include "oracles.hpp"
#include "toy.hpp"

using namespace attrsel;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

int failures = 0;

void report(int id, const char* name, bool ok, const std::string& detail) {
  std::printf("%s  [%d] %-28s %s\n", ok ? "PASS" : "FAIL", id, name, detail.c_str());
  std::fflush(stdout);
  if (!ok) ++failures;
}

std::string fmt(const char* f, double a = 0, double b = 0, double c = 0, double d = 0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c, d);
  return buf;
}

void gradient_correctness() {
  const auto t0 = Clock::now();
  double worst = 0.0;
  std::size_t checks = 0;
  for (LossMode mode : kAllLossModes) {
    for (std::uint64_t cfg_seed = 0; cfg_seed < 100; ++cfg_seed) {
      Rng rng(mix_seed(cfg_seed, static_cast<std::uint64_t>(mode) + 1));
      const Dataset d = toy::random_dataset(5, 3, 2, 4, mix_seed(cfg_seed, 11), 0.5);
      const FeasibleSets sets = build_feasible(d);
      const PresenceTable pres = toy::random_presence(d, sets, cfg_seed, 0.05 + uniform01(rng));
      LossConfig loss;
      loss.mode = mode;
      loss.num_ignore = uniform_index(rng, 3);
      ModelShape shape{5, 3, 2, 2, 0};
      ModelParams params = init_params(shape, cfg_seed);
      for (auto& b : params.b()) b = 0.5 * standard_normal(rng);

      std::vector<double> grad(params.data().size());
      dataset_loss(params, d, sets, &pres, loss, cfg_seed, 1, grad);
      const std::vector<double> x(params.data().begin(), params.data().end());
      const auto fd = oracle::central_difference(
          [&](std::vector<double>& v) {
            std::copy(v.begin(), v.end(), params.data().begin());
            return dataset_loss(params, d, sets, &pres, loss, cfg_seed, 1);
          },
          x, 1e-5);
      worst = std::max(worst, oracle::relative_error(grad, fd));
      ++checks;
    }
  }
  const double secs = seconds_since(t0);
  report(1, "gradient correctness", worst < 1e-4 && secs < 10.0,
         fmt("%.0f configs, max rel err %.2e (< 1e-4), %.2fs (< 10s)", double(checks), worst, secs));
}

void softmax_contract() {
  Rng rng(2026);
  double worst_sum = 0.0, worst_shift = 0.0, worst_uniform = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const std::size_t n_attr = 2 + uniform_index(rng, 30);
    std::vector<AttrIndex> omega;
    for (AttrIndex a = 0; a < n_attr; ++a) {
      if (bernoulli(rng, 0.5)) omega.push_back(a);
    }
    if (omega.empty()) omega.push_back(0);
    const FeasibleSets sets(n_attr, {omega});
    const double tau = std::pow(10.0, -2.0 + 2.0 * uniform01(rng));
    std::vector<double> sims(n_attr);
    for (auto& s : sims) s = 2.0 * uniform01(rng) - 1.0;
    const auto p = presence_from_dense("x", 0, sims, sets, ScoreConfig{tau});
    double sum = 0.0;
    for (double v : p.probs) sum += v;
    worst_sum = std::max(worst_sum, std::abs(sum - 1.0));

    auto shifted = sims;
    const double c = 10.0 * standard_normal(rng);
    for (auto& s : shifted) s += c;
    const auto q = presence_from_dense("x", 0, shifted, sets, ScoreConfig{tau});
    for (std::size_t k = 0; k < p.probs.size(); ++k) {
      worst_shift = std::max(worst_shift, std::abs(p.probs[k] - q.probs[k]));
    }

    const std::vector<double> flat(n_attr, sims[0]);
    const auto u = presence_from_dense("x", 0, flat, sets, ScoreConfig{tau});
    for (double v : u.probs) {
      worst_uniform = std::max(worst_uniform, std::abs(v - 1.0 / double(omega.size())));
    }
  }
  report(2, "softmax contract",
         worst_sum <= 1e-9 && worst_shift <= 1e-9 && worst_uniform <= 1e-12,
         fmt("1000 instances, |sum-1| %.1e, shift %.1e, uniform %.1e", worst_sum, worst_shift,
             worst_uniform));
}

void sampler_fidelity() {
  const auto t0 = Clock::now();
  PresenceDistribution d;
  d.attributes = {0, 1, 2};
  d.probs = {0.9, 0.05, 0.05};
  const std::vector<AttrIndex> pool{0, 1, 2};
  const std::size_t trials = 10000;

  std::size_t hits = 0;
  for (std::size_t s = 0; s < trials; ++s) {
    Rng rng(mix_seed(31337, s));
    if (sample_ignore_set(d, pool, 1, rng).contains(0)) ++hits;
  }
  const double freq = double(hits) / double(trials);
  const bool single_ok = freq >= 0.891 && freq <= 0.909;

  const auto expect = oracle::inclusion_without_replacement(d.probs, 2);
  std::vector<std::size_t> count(3, 0);
  for (std::size_t s = 0; s < trials; ++s) {
    Rng rng(mix_seed(4242, s));
    for (AttrIndex a : sample_ignore_set(d, pool, 2, rng).ignored) ++count[a];
  }
  bool pair_ok = true;
  double worst_z = 0.0;
  for (std::size_t i = 0; i < 3; ++i) {
    const double mean = expect[i] * double(trials);
    const double sd = std::sqrt(double(trials) * expect[i] * (1.0 - expect[i]));
    const double z = std::abs(double(count[i]) - mean) / sd;
    worst_z = std::max(worst_z, z);
    pair_ok = pair_ok && z <= 3.0;
  }
  const double secs = seconds_since(t0);
  report(3, "sampler fidelity", single_ok && pair_ok && secs < 5.0,
         fmt("k=1 freq %.4f in [0.891,0.909]; k=2 max |z| %.2f (<= 3); %.2fs", freq, worst_z,
             secs));
}

void mode_identities() {
  Rng rng(77);
  const Dataset d = toy::random_dataset(12, 1, 3, 500, 5, 0.5);
  const FeasibleSets sets = build_feasible(d);
  double worst_sel = 0.0, worst_ce = 0.0, worst_full = 0.0;

  for (const auto& inst : d.instances) {
    std::vector<double> p(12);
    for (auto& x : p) x = 1e-3 + (1 - 2e-3) * uniform01(rng);
    const double g = 3.0 * uniform01(rng);

    LossConfig sel;
    sel.mode = LossMode::kSelective;
    sel.num_ignore = 0;
    sel.gamma_pos = 1.0;
    sel.gamma_neg = sel.gamma_feasible = sel.gamma_infeasible = g;
    LossConfig neg = sel;
    neg.mode = LossMode::kAslNegatifying;
    // num_ignore = 0 means an empty mask.
    Rng mrng(1);
    PresenceDistribution dist;
    dist.attributes = sets.of(inst.object);
    dist.probs.assign(dist.attributes.size(), 1.0 / std::max<std::size_t>(1, dist.attributes.size()));
    const IgnoreMask empty = sample_ignore_set(dist, partial_sets(inst, 12).unannotated, 0, mrng);
    worst_sel = std::max(worst_sel, std::abs(instance_loss(p, inst, sets, empty, sel) -
                                             instance_loss(p, inst, sets, empty, neg)));

    for (auto [asl, ce] : {std::pair{LossMode::kAslIgnoring, LossMode::kCeIgnoring},
                           std::pair{LossMode::kAslNegatifying, LossMode::kCeNegatifying}}) {
      LossConfig a;
      a.mode = asl;
      a.gamma_pos = a.gamma_neg = 0.0;
      LossConfig c;
      c.mode = ce;
      worst_ce = std::max(worst_ce, std::abs(instance_loss(p, inst, sets, {}, a) -
                                             instance_loss(p, inst, sets, {}, c)));
    }

    Instance full = inst;
    full.negatives = partial_sets(inst, 12).negatives;
    for (AttrIndex a : partial_sets(inst, 12).unannotated) full.negatives.push_back(a);
    normalize_index_set(full.negatives);
    LossConfig ref;
    ref.mode = LossMode::kAslIgnoring;
    const double base = instance_loss(p, full, sets, {}, ref);
    for (LossMode m : {LossMode::kAslNegatifying, LossMode::kSelective}) {
      LossConfig c;
      c.mode = m;
      worst_full = std::max(worst_full, std::abs(instance_loss(p, full, sets, {}, c) - base));
    }
    LossConfig ci, cn;
    ci.mode = LossMode::kCeIgnoring;
    cn.mode = LossMode::kCeNegatifying;
    worst_full = std::max(worst_full, std::abs(instance_loss(p, full, sets, {}, ci) -
                                               instance_loss(p, full, sets, {}, cn)));
  }
  report(4, "mode-reduction identities",
         worst_sel <= 1e-12 && worst_ce <= 1e-12 && worst_full <= 1e-12,
         fmt("sel(k=0)~asl_neg %.1e, asl(g=0)~ce %.1e, fully annotated %.1e", worst_sel, worst_ce,
             worst_full));
}

void ap_oracle() {
  Rng rng(5150);
  double worst = 0.0;
  std::size_t ties = 0;
  for (int t = 0; t < 1000; ++t) {
    const std::size_t n = 1 + uniform_index(rng, 200);
    std::vector<double> scores(n);
    std::vector<int> raw(n);
    std::vector<Label> labels(n);
    const bool tied = t % 3 == 0;
    for (std::size_t i = 0; i < n; ++i) {
      scores[i] = tied ? double(uniform_index(rng, 6)) / 5.0 : uniform01(rng);
      raw[i] = bernoulli(rng, 0.35) ? 1 : -1;
      labels[i] = static_cast<Label>(raw[i]);
    }
    raw[uniform_index(rng, n)] = 1;
    for (std::size_t i = 0; i < n; ++i) labels[i] = static_cast<Label>(raw[i]);
    if (tied) ++ties;
    worst = std::max(worst, std::abs(*average_precision(scores, labels) -
                                     oracle::brute_force_ap(scores, raw)));
  }
  const std::vector<double> ex{0.9, 0.8, 0.1};
  const std::vector<Label> exl{Label::kPositive, Label::kNegative, Label::kPositive};
  const double example = *average_precision(ex, exl);
  report(5, "AP oracle equivalence",
         worst <= 1e-9 && std::abs(example - 0.833333) < 1e-6,
         fmt("1000 cases (%.0f with ties), max diff %.1e; example %.6f", double(ties), worst,
             example));
}

double mean_map(ExperimentConfig cfg, LossMode mode, std::size_t k, std::size_t seeds) {
  cfg.loss.mode = mode;
  cfg.loss.num_ignore = k;
  double sum = 0.0;
  for (std::size_t s = 0; s < seeds; ++s) {
    sum += run_synthetic_experiment(with_seed_offset(cfg, s)).report.overall_map;
  }
  return 100.0 * sum / double(seeds);
}

void benchmark_criteria() {
  const ExperimentConfig bench = benchmark_experiment();
  const std::size_t seeds = 5;

  const auto t0 = Clock::now();
  const double sel = mean_map(bench, LossMode::kSelective, bench.loss.num_ignore, seeds);
  const double neg = mean_map(bench, LossMode::kAslNegatifying, 0, seeds);
  const double ign = mean_map(bench, LossMode::kAslIgnoring, 0, seeds);
  const double secs = seconds_since(t0);
  report(6, "selective beats baselines",
         sel - neg >= 1.0 && sel - ign >= 1.0 && secs < 300.0,
         fmt("mAP sel %.2f, asl_neg %.2f, asl_ign %.2f over 5 seeds; %.0fs", sel, neg, ign, secs));

  std::vector<double> curve;
  std::string detail = "num_ignore";
  for (std::size_t k : kBenchmarkIgnoreSweep) {
    const double m =
        k == bench.loss.num_ignore ? sel : mean_map(bench, LossMode::kSelective, k, seeds);
    curve.push_back(m);
    detail += " " + cli::format_num_ignore(k) + ":" + fmt("%.2f", m);
  }
  bool interior_beats_zero = false;
  for (std::size_t i = 1; i + 1 < curve.size(); ++i) {
    interior_beats_zero = interior_beats_zero || curve[i] > curve.front();
  }
  bool all_worst = true;
  for (std::size_t i = 0; i + 1 < curve.size(); ++i) all_worst = all_worst && curve.back() < curve[i];
  report(7, "ignore-size ablation shape", interior_beats_zero && all_worst, detail);
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

int run(std::vector<std::string> args) {
  args.insert(args.begin(), "attrsel");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  return cli::run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
}

void determinism() {
  const fs::path dir = fs::temp_directory_path() / ("attrsel_accept_" + std::to_string(::getpid()));
  fs::remove_all(dir);
  const std::string d = (dir / "data").string();
  bool ok = run({"gen-synth", "--out-dir", d, "--n-instances", "800"}) == 0;
  for (const char* tag : {"a", "b"}) {
    const std::string base = (dir / tag).string();
    ok = ok && run({"train", "--dataset", d + "/train.jsonl", "--feasible", d + "/feasible.json",
                    "--scores", d + "/scores.jsonl", "--epochs", "5", "--seed", "7",
                    "--checkpoint", base + "/model.ckpt"}) == 0;
    ok = ok && run({"eval", "--checkpoint", base + "/model.ckpt", "--dataset", d + "/train.jsonl",
                    "--test-dataset", d + "/test.jsonl", "--report", base + "/report.json"}) == 0;
  }
  std::size_t identical = 0;
  const char* files[] = {"model.ckpt", "model.ckpt.history.jsonl", "report.json", "report.txt"};
  for (const char* f : files) {
    const std::string a = slurp(dir / "a" / f), b = slurp(dir / "b" / f);
    if (!a.empty() && a == b) ++identical;
  }
  fs::remove_all(dir);
  report(8, "determinism", ok && identical == 4,
         fmt("train+eval twice: %.0f/4 artifacts byte-identical", double(identical)));
}

}  // namespace

int main() {
  gradient_correctness();
  softmax_contract();
  sampler_fidelity();
  mode_identities();
  ap_oracle();
  benchmark_criteria();
  determinism();
  std::printf("%s: %d criteria failed\n", failures == 0 ? "ALL PASS" : "FAILURES", failures);
  return failures == 0 ? 0 : 1;
}
