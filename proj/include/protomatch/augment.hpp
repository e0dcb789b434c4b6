#pragma once

#include "protomatch/datamodel.hpp"
#include "protomatch/types.hpp"

#include <optional>
#include <span>
#include <utility>
#include <vector>

namespace protomatch {

enum class MixupMode { kEeg, kStandard, kOff };

struct MixupConfig {
  double alpha = 0.5;  // Beta(alpha, alpha) shape
  double ratio = 1.0;  // augmented rows per input row
  MixupMode mode = MixupMode::kEeg;
  std::optional<double> forced_weight;  // test hook: fixes omega

  void validate() const;
};

struct TrialGroup {
  GroupKey key;
  std::vector<Index> rows;  // in input order

  bool usable() const { return rows.size() >= 2; }
};

/// Partitions rows by exact key; groups appear in order of first occurrence.
std::vector<TrialGroup> group_by_trial(std::span<const GroupKey> keys);

struct MixupResult {
  Matrix features;
  Matrix labels;  // 0 rows when the input was unlabeled
  std::vector<GroupKey> keys;
  std::vector<std::pair<Index, Index>> parents;
  std::vector<double> weights;
  bool no_usable_rows = false;  // requested rows but nothing could be mixed
};

/// Number of rows an augmentation of `n` inputs produces: round(ratio * n).
Index augmented_count(Index n, double ratio);

/// Draws omega ~ Beta(alpha, alpha) through two Gamma(alpha, 1) variates.
double sample_beta(double alpha, Rng& rng);

/// Mixes only within a trial: picks a group with probability proportional to
/// its size (singletons excluded), two distinct members, and
/// x = w*x_i + (1-w)*x_j. `labels` may be empty (0 rows) for unlabeled data.
MixupResult eeg_mixup(const Matrix& features, const Matrix& labels, std::span<const GroupKey> keys,
                      std::span<const TrialGroup> groups, const MixupConfig& cfg, Rng& rng);

/// Ablation variant: pairs drawn uniformly across all rows, ignoring keys.
MixupResult standard_mixup(const Matrix& features, const Matrix& labels, std::span<const GroupKey> keys,
                           const MixupConfig& cfg, Rng& rng);

/// Dispatches on cfg.mode; kOff returns an empty result.
MixupResult augment(const Matrix& features, const Matrix& labels, std::span<const GroupKey> keys,
                    const MixupConfig& cfg, Rng& rng);

}  // namespace protomatch
