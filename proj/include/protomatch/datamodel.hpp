#pragma once

#include "protomatch/types.hpp"

#include <compare>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <vector>

namespace protomatch {

/// Identity of one trial recording; rows sharing a key are treated as IID.
struct GroupKey {
  int subject = 0;
  int session = 0;
  int trial = 0;
  auto operator<=>(const GroupKey&) const = default;
};

struct Segment {
  int subject = 0;
  int session = 0;
  int trial = 0;
  int index = 0;  // position within the trial
  RowVector features;
  std::optional<int> label;

  GroupKey key() const { return {subject, session, trial}; }
};

struct Dataset {
  std::vector<Segment> segments;
  int n_classes = 0;
  Index feature_dim = 0;
  std::vector<int> subjects;  // ascending

  /// Checks the dataset invariants; throws Error on violation.
  void validate() const;
};

// ---------------------------------------------------------------------------
// CSV ingestion
// ---------------------------------------------------------------------------

/// `#classes=<c>` line, then `subject,session,trial,segment,label,f0,...`.
Dataset load_dataset(const std::filesystem::path& path);
Dataset read_dataset(std::istream& in);
void write_dataset(std::ostream& out, const Dataset& ds);
void write_dataset(const std::filesystem::path& path, const Dataset& ds);

// ---------------------------------------------------------------------------
// Synthetic generator
// ---------------------------------------------------------------------------

struct SynthConfig {
  int n_subjects = 6;
  int trials_per_subject = 10;
  int segments_per_trial = 40;
  int n_classes = 3;
  int feature_dim = 32;
  double class_separation = 1.0;
  double subject_shift = 0.8;
  double trial_drift = 0.5;
  double noise = 0.5;
  std::uint64_t seed = 1;

  void validate() const;
};

/// Per class a Gaussian prototype; per subject a random affine map whose
/// deviation from identity scales with subject_shift; per trial an additive
/// drift; per segment additive noise. Trial k carries class (k-1) mod c.
Dataset synthesize_dataset(const SynthConfig& cfg);

// ---------------------------------------------------------------------------
// Leave-one-subject-out partition
// ---------------------------------------------------------------------------

struct LabeledSet {
  Matrix features;
  std::vector<int> labels;
  std::vector<GroupKey> keys;
  std::vector<std::size_t> rows;  // indices into the parent Dataset

  Index size() const { return features.rows(); }
};

struct UnlabeledSet {
  Matrix features;
  std::vector<GroupKey> keys;
  std::vector<std::size_t> rows;

  Index size() const { return features.rows(); }
};

/// Labels withheld from U and T. Only evaluation and diagnostics read this;
/// nothing on the training path receives it.
class SealedLabels {
 public:
  SealedLabels() = default;
  SealedLabels(std::vector<int> unlabeled_source, std::vector<int> target)
      : unlabeled_source_(std::move(unlabeled_source)), target_(std::move(target)) {}

  const std::vector<int>& unlabeled_source() const { return unlabeled_source_; }
  const std::vector<int>& target() const { return target_; }

 private:
  std::vector<int> unlabeled_source_;
  std::vector<int> target_;
};

struct DomainPartition {
  LabeledSet S;
  UnlabeledSet U;
  UnlabeledSet T;
  SealedLabels sealed;
  int target_subject = 0;
  int n_labeled_trials = 0;
  int n_classes = 0;
};

/// The target subject becomes T; of every other subject, the first N distinct
/// trial ids (ascending, sessions pooled) form S and the rest form U.
DomainPartition partition_loso(const Dataset& ds, int target_subject, int n_labeled_trials);

struct TargetSplit {
  UnlabeledSet validation;  // first K target trials, usable for adaptation
  UnlabeledSet test;        // remaining trials, never seen in training
  std::vector<int> validation_labels;
  std::vector<int> test_labels;
};

TargetSplit split_target(const DomainPartition& p, int k_trials);

/// Number of distinct (subject, session, trial) keys.
int count_trials(const std::vector<GroupKey>& keys);

// ---------------------------------------------------------------------------
// Minibatches
// ---------------------------------------------------------------------------

struct BatchSizes {
  Index labeled = 48;
  Index unlabeled = 48;
  Index target = 48;
};

/// One training step's draw. Carries no labels for U or T rows.
struct Batch {
  Matrix xs;
  Matrix ys;  // one-hot
  std::vector<GroupKey> keys_s;
  Matrix xu;
  std::vector<GroupKey> keys_u;
  Matrix xt;
  std::vector<GroupKey> keys_t;
  std::vector<Index> index_s, index_u, index_t;
  bool sampled_with_replacement = false;
};

/// Uniform draws without replacement from each domain independently; a
/// request larger than the population falls back to drawing with replacement
/// and sets Batch::sampled_with_replacement. A zero size skips the domain.
Batch sample_minibatch(const DomainPartition& p, const BatchSizes& sizes, Rng& rng);

Matrix one_hot(const std::vector<int>& labels, int n_classes);

}  // namespace protomatch
