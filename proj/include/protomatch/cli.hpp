#pragma once

#include "protomatch/config.hpp"

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace protomatch {

/// Command-line overrides applied on top of the config file.
struct CliOptions {
  std::optional<std::filesystem::path> config;
  std::optional<std::filesystem::path> out;
  std::optional<std::uint64_t> seed;
  std::vector<std::string> ablations;
  std::optional<int> folds_parallel;
  std::optional<int> target_subject;
  std::optional<int> split_target_k;
  bool inject_fault = false;
  std::vector<std::filesystem::path> run_dirs;  // report
};

/// Config file (or defaults) with the overrides applied and validated.
RunConfig resolve_config(const CliOptions& options);

/// Each command returns the process exit code and writes human-readable
/// output to `out`. Errors are thrown as Error.
int cmd_synth(const CliOptions& options, std::ostream& out);
int cmd_train(const CliOptions& options, std::ostream& out);
int cmd_gradcheck(const CliOptions& options, std::ostream& out);
int cmd_report(const CliOptions& options, std::ostream& out);

struct RunSummary {
  std::filesystem::path dir;
  std::string ablations;
  std::vector<double> fold_accuracy;
  double mean = 0.0;
  double std = 0.0;
  /// Per epoch, fold-averaged {mmd_ST, mmd_SU, mmd_UT, weighted_divergence}.
  std::vector<std::pair<int, std::vector<double>>> mmd_trend;
};

/// Reads `<dir>/metrics.jsonl`; malformed lines fail with their line number.
RunSummary read_run(const std::filesystem::path& dir);

}  // namespace protomatch
