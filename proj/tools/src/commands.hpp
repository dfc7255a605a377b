#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "attrsel/dataset.hpp"
#include "attrsel/eval.hpp"
#include "run_config.hpp"

namespace attrsel::cli {

// File names written by gen-synth inside its output directory.
inline constexpr const char* kTrainFile = "train.jsonl";
inline constexpr const char* kTestFile = "test.jsonl";
inline constexpr const char* kTruthFile = "truth.jsonl";
inline constexpr const char* kScoresFile = "scores.jsonl";
inline constexpr const char* kFeasibleFile = "feasible.json";
inline constexpr const char* kSpecFile = "spec.json";

void cmd_gen_synth(const SyntheticSpec& spec, const std::filesystem::path& out_dir);

/// Reads paths.dataset and writes the feasible sets to `out`.
void cmd_build_feasible(const RunConfig& cfg, const std::filesystem::path& out);

/// Presence distributions for paths.dataset from paths.embeddings (or, if no
/// embeddings are given, from the raw similarities in paths.scores).
void cmd_score(const RunConfig& cfg, const std::filesystem::path& out);

/// Writes paths.checkpoint plus `<checkpoint>.history.jsonl` and
/// `<checkpoint>.config.json`. Returns the training history.
std::vector<EpochRecord> cmd_train(const RunConfig& cfg, std::ostream& log);

/// Writes paths.report (JSON), the text table next to it and the resolved config.
EvalReport cmd_eval(const RunConfig& cfg, std::ostream& log);

struct SweepArgs {
  std::string param;
  std::vector<std::string> values;
  std::size_t seeds = 1;
  std::size_t parallel = 1;
  std::filesystem::path out_dir;  // optional
};

struct SweepRow {
  std::string value;
  double mean_map = 0.0;
  std::vector<double> per_seed;
};

/// Parameters accepted by sweep.
const std::vector<std::string>& sweep_params();

/// Returns `cfg` with `param` set to `value`. Throws ConfigError for unknown
/// names or unparsable values.
RunConfig apply_sweep_value(RunConfig cfg, const std::string& param, const std::string& value);

std::vector<SweepRow> cmd_sweep(const RunConfig& cfg, const SweepArgs& args, std::ostream& log);
std::string format_sweep_table(const std::string& param, const std::vector<SweepRow>& rows);

/// Full command-line entry point. Returns the process exit code:
/// 0 success, 1 usage or configuration error, 2 data error, 3 numeric failure.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace attrsel::cli
