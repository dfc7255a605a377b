#include <benchmark/benchmark.h>

#include <vector>

#include "attrsel/eval.hpp"
#include "attrsel/experiment.hpp"
#include "attrsel/loss.hpp"
#include "attrsel/trainer.hpp"
#include "toy.hpp"

using namespace attrsel;

namespace {

void BM_InstanceLossAndGrad(benchmark::State& state) {
  const auto n_attr = static_cast<std::size_t>(state.range(0));
  const Dataset d = toy::random_dataset(n_attr, 4, 3, 64, 1, 0.3);
  const FeasibleSets fs = build_feasible(d);
  LossConfig cfg;
  std::vector<double> p(n_attr, 0.3), grad(n_attr);
  std::size_t i = 0;
  for (auto _ : state) {
    const auto& inst = d.instances[i++ % d.instances.size()];
    benchmark::DoNotOptimize(instance_loss_and_grad(p, inst, fs, {}, cfg, grad));
  }
  state.SetItemsProcessed(state.iterations());
}
BENCHMARK(BM_InstanceLossAndGrad)->Arg(64)->Arg(620);

void BM_SampleIgnoreSet(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  PresenceDistribution dist;
  std::vector<AttrIndex> pool(n);
  for (AttrIndex a = 0; a < n; ++a) {
    pool[a] = a;
    dist.attributes.push_back(a);
    dist.probs.push_back(1.0 / double(n));
  }
  Rng rng(7);
  for (auto _ : state) {
    benchmark::DoNotOptimize(sample_ignore_set(dist, pool, 30, rng));
  }
}
BENCHMARK(BM_SampleIgnoreSet)->Arg(64)->Arg(300);

void BM_AveragePrecision(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  Rng rng(3);
  std::vector<double> scores(n);
  std::vector<Label> labels(n);
  for (std::size_t i = 0; i < n; ++i) {
    scores[i] = uniform01(rng);
    labels[i] = bernoulli(rng, 0.3) ? Label::kPositive : Label::kNegative;
  }
  for (auto _ : state) benchmark::DoNotOptimize(average_precision(scores, labels));
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_AveragePrecision)->RangeMultiplier(8)->Range(64, 32768)->Complexity();

void BM_TrainEpoch(benchmark::State& state) {
  ExperimentConfig cfg = benchmark_experiment();
  const SyntheticData data = generate_synthetic(cfg.synth);
  const FeasibleSets fs = build_feasible(data.train);
  const PresenceTable pres = presence_from_rows(data.oracle_scores, fs, cfg.score);
  TrainConfig tc = cfg.train;
  tc.epochs = 1;
  for (auto _ : state) {
    benchmark::DoNotOptimize(train(data.train, fs, &pres, cfg.loss, tc));
  }
  state.SetItemsProcessed(state.iterations() * data.train.instances.size());
}
BENCHMARK(BM_TrainEpoch)->Unit(benchmark::kMillisecond);

}  // namespace
BENCHMARK_MAIN();
