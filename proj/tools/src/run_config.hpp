#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include <nlohmann/json.hpp>

#include "attrsel/dataset.hpp"
#include "attrsel/eval.hpp"
#include "attrsel/feasible.hpp"
#include "attrsel/loss.hpp"
#include "attrsel/trainer.hpp"
#include "attrsel/vlm.hpp"

namespace attrsel::cli {

struct RunPaths {
  std::string dataset;       // training split
  std::string test_dataset;  // evaluation split
  std::string embeddings;
  std::string scores;        // raw similarity rows
  std::string presence;      // cached presence distributions
  std::string feasible;
  std::string checkpoint;
  std::string report;
  friend bool operator==(const RunPaths&, const RunPaths&) = default;
};

struct RunConfig {
  RunPaths paths;
  LossConfig loss;
  TrainConfig train;  // train.seed is the run seed
  ScoreConfig score;
  FeasibleOptions feasible;
  ImbalanceThresholds thresholds;
  EvalOptions eval;
  /// When present, sweeps regenerate data from this spec instead of reading files.
  std::optional<SyntheticSpec> synthetic;

  void validate() const;
  friend bool operator==(const RunConfig&, const RunConfig&) = default;
};

/// The reference synthetic benchmark expressed as a run config.
RunConfig benchmark_run_config();

nlohmann::json to_json(const RunConfig& c);
/// Missing keys keep their defaults; unknown keys and bad values raise ConfigError.
RunConfig run_config_from_json(const nlohmann::json& j);

nlohmann::json to_json(const SyntheticSpec& s);
SyntheticSpec synthetic_spec_from_json(const nlohmann::json& j);

std::string dump_config(const RunConfig& c);
RunConfig load_run_config(const std::filesystem::path& path);
void save_run_config(const std::filesystem::path& path, const RunConfig& c);

/// Hash of every setting that influences the trained weights.
std::uint64_t model_config_hash(const RunConfig& c);

std::string format_num_ignore(std::size_t k);
/// Accepts a non-negative integer or "ALL".
std::size_t parse_num_ignore(const std::string& s);

}  // namespace attrsel::cli
