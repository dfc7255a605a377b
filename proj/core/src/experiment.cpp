#include "attrsel/experiment.hpp"

namespace attrsel {

ExperimentConfig benchmark_experiment() {
  ExperimentConfig cfg;
  cfg.synth.tail_skew = 0.7;
  cfg.synth.positive_salience = 11.0;
  cfg.train.lr_head = 5e-3;
  cfg.train.lr_backbone = 5e-3;
  cfg.loss.num_ignore = 8;
  cfg.thresholds.tail_max = 30;
  return cfg;
}

ExperimentResult run_synthetic_experiment(const ExperimentConfig& cfg) {
  const SyntheticData data = generate_synthetic(cfg.synth);
  const FeasibleSets fs = build_feasible(data.train, cfg.feasible);
  const PresenceTable presence = presence_from_rows(data.oracle_scores, fs, cfg.score);
  const TrainResult trained = train(data.train, fs, &presence, cfg.loss, cfg.train);
  const ScoreMatrix scores = predict(trained.params, data.test.instances);
  const auto buckets = partition_head_medium_tail(data.train, cfg.thresholds);
  return {mean_ap(scores, data.test, buckets, cfg.eval), trained.history};
}

ExperimentConfig with_seed_offset(ExperimentConfig cfg, std::uint64_t offset) {
  cfg.synth.seed += offset;
  cfg.train.seed += offset;
  return cfg;
}

}  // namespace attrsel
