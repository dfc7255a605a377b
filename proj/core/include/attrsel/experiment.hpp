#pragma once

#include <cstdint>

#include "attrsel/dataset.hpp"
#include "attrsel/eval.hpp"
#include "attrsel/feasible.hpp"
#include "attrsel/loss.hpp"
#include "attrsel/trainer.hpp"
#include "attrsel/vlm.hpp"

namespace attrsel {

/// Everything needed to run generate -> feasible -> score -> train -> eval in memory.
struct ExperimentConfig {
  SyntheticSpec synth;
  LossConfig loss;
  TrainConfig train;
  ScoreConfig score;
  FeasibleOptions feasible;
  ImbalanceThresholds thresholds;
  EvalOptions eval;
};

struct ExperimentResult {
  EvalReport report;
  std::vector<EpochRecord> history;
};

/// The reference synthetic benchmark. Sizes, epochs and batch size are the
/// library defaults; present attributes are annotated more readily than absent
/// ones, the long tail is flattened a little and the learning rate is raised
/// so 50 epochs reach a plateau. The tail cutoff is raised to match the
/// smaller attribute counts of a desk-scale split.
ExperimentConfig benchmark_experiment();

/// num_ignore values swept by the reference ablation: none, small, medium,
/// large and everything.
inline constexpr std::size_t kBenchmarkIgnoreSweep[] = {0, 2, 8, 16, kIgnoreAll};

/// Evaluates on the fully labeled synthetic test split.
ExperimentResult run_synthetic_experiment(const ExperimentConfig& cfg);

/// The same configuration with the data and training seeds shifted by `offset`.
ExperimentConfig with_seed_offset(ExperimentConfig cfg, std::uint64_t offset);

}  // namespace attrsel
