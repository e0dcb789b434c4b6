#pragma once

#include "protomatch/datamodel.hpp"
#include "protomatch/trainer.hpp"

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace protomatch {

enum class DataSource { kSynth, kFile };

/// Everything a command needs: the training config, the dataset source and
/// the run layout.
struct RunConfig {
  TrainConfig train;
  DataSource source = DataSource::kSynth;
  SynthConfig synth;
  std::filesystem::path data_path;  // CSV input (kFile) or synth output
  std::filesystem::path out_dir = "run";
  int folds_parallel = 1;
  std::optional<int> target_subject;

  /// Checks cross-field constraints on top of TrainConfig/SynthConfig.
  void validate() const;
};

/// Flat `key = value` lines under `[data]`, `[synth]`, `[train]` and `[run]`
/// headers. `#` starts a comment; lists are comma-separated. Unknown keys and
/// unparsable values fail with the line number, the key and the valid set.
RunConfig parse_config(std::istream& in, const std::string& source_name = "<config>");
RunConfig load_config(const std::filesystem::path& path);

/// The effective config in the same format; parse_config reads it back.
std::string format_config(const RunConfig& cfg);

/// `section.key` for every accepted key, in file order.
std::vector<std::string> config_keys();

}  // namespace protomatch
