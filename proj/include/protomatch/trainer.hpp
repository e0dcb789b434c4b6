#pragma once

#include "protomatch/adaptation.hpp"
#include "protomatch/augment.hpp"
#include "protomatch/datamodel.hpp"
#include "protomatch/diffkernel.hpp"
#include "protomatch/pairwise.hpp"

#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace protomatch {

struct Ablations {
  bool no_augment = false;
  bool standard_mixup = false;
  bool no_prototype = false;          // prototypes from labeled rows only
  bool no_instance_pairwise = false;  // drops both instance pairwise losses
  bool two_domain_adaptation = false; // {S and U} vs T, 2-class discriminator
  bool no_unlabeled_source = false;   // U removed from every stage

  bool any() const;
  /// Comma-separated flag names, or "none".
  std::string to_string() const;
  /// Sets one flag by name; throws Error listing valid names otherwise.
  void set(const std::string& name);
  static const std::vector<std::string>& names();
};

enum class InferencePrototypes { kLastStep, kRecompute };

struct TrainConfig {
  int max_epoch = 100;
  int steps_per_epoch = 0;  // 0: ceil(|S| / labeled batch size)
  BatchSizes batch;
  double learning_rate = 1e-3;
  double weight_decay = 1e-5;
  double rms_decay = 0.99;
  double rms_epsilon = 1e-8;
  MixupConfig mixup;
  LossWeights weights;
  double tau_high0 = 0.9;
  double tau_low0 = 0.5;
  double ridge = 1e-6;
  Index hidden_width = 64;
  Index feature_width = 64;
  double dropout = 0.5;
  std::uint64_t seed = 1;
  Ablations ablations;
  int n_labeled_trials = 6;
  int split_target_k = 0;  // 0: plain LOSO; K > 0: adapt on the first K target trials
  PiMode pi_mode = PiMode::kProportion;
  int report_every = 1;
  Index mmd_samples = 512;
  InferencePrototypes inference_prototypes = InferencePrototypes::kLastStep;

  void validate() const;
  int n_domains() const;
};

/// Trainable state: extractor and discriminator weights, the bilinear matrix
/// "B", the latest batch prototypes, and the optimizer accumulators.
struct Model {
  MlpArch extractor;
  MlpArch discriminator;
  ParamSet params;
  Matrix prototypes;
  RmsPropState optimizer;
  int n_classes = 0;

  static Model create(Index input_dim, int n_classes, const TrainConfig& cfg, Rng& rng);

  Matrix features(const Matrix& x) const;
  Matrix predict_proba(const Matrix& x) const;
  std::vector<int> predict(const Matrix& x) const;
};

struct EpochContext {
  int epoch = 0;
  int max_epoch = 1;
  double lambda = 0.0;
  double gamma = 0.0;
  double tau_high = 0.9;
  double tau_low = 0.5;

  static EpochContext at(int epoch, const TrainConfig& cfg);
};

struct StepLosses {
  double pair_source = 0.0;
  double pair_target = 0.0;
  double penalty = 0.0;
  double pair = 0.0;
  double disc = 0.0;
  double total = 0.0;
  bool no_valid_pairs = false;
  double valid_pair_fraction = 0.0;
  bool sampled_with_replacement = false;
  bool mixup_starved = false;
};

/// One iteration of the training algorithm: augment each domain, pseudo-label
/// U with the previous prototypes, recompute prototypes, assemble the pairwise
/// and adversarial losses, back-propagate once through the gradient reversal
/// and apply one RMSprop update.
StepLosses train_step(Model& model, const Batch& batch, const EpochContext& ctx, const TrainConfig& cfg, Rng& rng);

struct Evaluation {
  double accuracy = 0.0;
  std::vector<std::vector<long>> confusion;  // [true][predicted]
  long count = 0;
};

/// Rows whose label is negative (unknown) are skipped.
Evaluation evaluate(const Model& model, const Matrix& features, const std::vector<int>& labels);

struct EpochRecord {
  int epoch = 0;
  bool trained = true;  // false for the closing post-training record
  double loss_pair_s = 0.0;
  double loss_pair_t = 0.0;
  double loss_disc = 0.0;
  double lambda = 0.0;
  double gamma = 0.0;
  double tau_h = 0.0;
  double tau_l = 0.0;
  std::optional<BoundReport> bound;
};

struct FoldResult {
  int fold = 0;
  int target_subject = 0;
  std::vector<EpochRecord> epochs;
  double accuracy = 0.0;
  std::vector<std::vector<long>> confusion;
  double seconds = 0.0;
  std::uint64_t seed = 0;
  bool failed = false;
  std::string error;
  std::shared_ptr<const Model> model;
};

struct EvaluationSet {
  Matrix features;
  std::vector<int> labels;
};

struct FoldOptions {
  int fold = 0;
  std::optional<std::filesystem::path> out_dir;  // metrics.jsonl + checkpoint.txt
  std::optional<EvaluationSet> held_out;        // evaluate here instead of on T
};

/// Runs max_epoch epochs; each epoch's record carries the bound report taken
/// before its first step, and a closing record (epoch = max_epoch) carries the
/// post-training report. Errors propagate.
FoldResult train_fold(const TrainConfig& cfg, const DomainPartition& partition, const FoldOptions& options = {});

struct ResultTable {
  std::vector<FoldResult> folds;
  double mean_accuracy = 0.0;
  double std_accuracy = 0.0;  // population standard deviation
  int failed_folds = 0;

  std::string format() const;
};

struct RunOptions {
  int workers = 1;
  std::optional<std::filesystem::path> out_dir;
  std::optional<int> target_subject;  // single-fold mode
};

/// Worker count after applying the PROTOMATCH_THREADS cap.
int effective_workers(int requested);

/// One fold per subject as target (or just `target_subject`); fold i uses seed
/// cfg.seed + i. Failed folds are recorded and the rest proceed.
ResultTable run_loso(const TrainConfig& cfg, const Dataset& ds, const RunOptions& options = {});

std::vector<NamedMatrix> checkpoint_blocks(const Model& model);
void save_checkpoint(const Model& model, const std::filesystem::path& path);
/// Loads into a model built with the expected architecture; every block must
/// be present with the declared shape.
void load_checkpoint(const std::filesystem::path& path, Model& model);

/// JSON-lines record for one epoch of one fold.
std::string epoch_record_json(int fold, const EpochRecord& record);
std::string final_record_json(const FoldResult& result);

// ---------------------------------------------------------------------------
// Gradient suite
// ---------------------------------------------------------------------------

struct GradientSuiteOptions {
  std::vector<std::uint64_t> seeds = {1, 2, 3, 4, 5};
  double h = 1e-5;
  double tolerance = 1e-4;
  bool inject_fault = false;  // negates the analytic gradient of B
};

struct GradientSuiteEntry {
  std::string loss;
  std::string param;
  double max_rel_error = 0.0;
};

struct GradientSuiteReport {
  std::vector<GradientSuiteEntry> entries;  // worst over seeds per (loss, param)
  double worst = 0.0;
  bool passed = false;
};

GradientSuiteReport run_gradient_suite(const GradientSuiteOptions& options = {});

}  // namespace protomatch
