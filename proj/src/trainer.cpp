#include "protomatch/trainer.hpp"

#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <map>
#include <sstream>
#include <thread>

namespace protomatch {

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

const std::vector<std::string>& Ablations::names() {
  static const std::vector<std::string> kNames = {"no_augment",           "standard_mixup",
                                                  "no_prototype",         "no_instance_pairwise",
                                                  "two_domain_adaptation", "no_unlabeled_source"};
  return kNames;
}

bool Ablations::any() const {
  return no_augment || standard_mixup || no_prototype || no_instance_pairwise || two_domain_adaptation ||
         no_unlabeled_source;
}

std::string Ablations::to_string() const {
  const bool flags[] = {no_augment, standard_mixup, no_prototype, no_instance_pairwise, two_domain_adaptation,
                        no_unlabeled_source};
  std::string out;
  for (std::size_t i = 0; i < names().size(); ++i) {
    if (!flags[i]) continue;
    if (!out.empty()) out += ',';
    out += names()[i];
  }
  return out.empty() ? "none" : out;
}

void Ablations::set(const std::string& name) {
  if (name == "none" || name.empty()) return;
  if (name == "no_augment") {
    no_augment = true;
  } else if (name == "standard_mixup") {
    standard_mixup = true;
  } else if (name == "no_prototype") {
    no_prototype = true;
  } else if (name == "no_instance_pairwise") {
    no_instance_pairwise = true;
  } else if (name == "two_domain_adaptation") {
    two_domain_adaptation = true;
  } else if (name == "no_unlabeled_source") {
    no_unlabeled_source = true;
  } else {
    std::string valid;
    for (const auto& n : names()) valid += (valid.empty() ? "" : ", ") + n;
    throw Error("unknown ablation '" + name + "'; valid: " + valid);
  }
}

void TrainConfig::validate() const {
  if (max_epoch < 3) throw Error("train config: max_epoch must be at least 3");
  if (steps_per_epoch < 0) throw Error("train config: steps_per_epoch must be nonnegative");
  if (batch.labeled < 1 || batch.target < 1 || batch.unlabeled < 0) {
    throw Error("train config: batch sizes must be positive");
  }
  if (!(learning_rate > 0.0) || weight_decay < 0.0) throw Error("train config: bad learning rate or weight decay");
  if (!(rms_decay > 0.0 && rms_decay < 1.0) || !(rms_epsilon > 0.0)) throw Error("train config: bad RMSprop constants");
  mixup.validate();
  weights.validate();
  if (!(tau_low0 >= 0.0 && tau_low0 <= tau_high0 && tau_high0 <= 1.0)) {
    throw Error("train config: thresholds must satisfy 0 <= tau_low0 <= tau_high0 <= 1");
  }
  if (ridge < 0.0) throw Error("train config: ridge must be nonnegative");
  if (hidden_width < 1 || feature_width < 1) throw Error("train config: widths must be positive");
  if (dropout < 0.0 || dropout >= 1.0) throw Error("train config: dropout must lie in [0, 1)");
  if (n_labeled_trials < 1) throw Error("train config: n_labeled_trials must be positive");
  if (split_target_k < 0) throw Error("train config: split_target_k must be nonnegative");
  if (report_every < 1) throw Error("train config: report_every must be positive");
  if (mmd_samples < 2) throw Error("train config: mmd_samples must be at least 2");
}

int TrainConfig::n_domains() const {
  return (ablations.two_domain_adaptation || ablations.no_unlabeled_source) ? 2 : 3;
}

// ---------------------------------------------------------------------------
// Model
// ---------------------------------------------------------------------------

namespace {

Matrix uniform_matrix(Index rows, Index cols, Rng& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(rows + cols));
  std::uniform_real_distribution<double> dist(-bound, bound);
  Matrix m(rows, cols);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = dist(rng);
  return m;
}

}  // namespace

Model Model::create(Index input_dim, int n_classes, const TrainConfig& cfg, Rng& rng) {
  Model m;
  m.n_classes = n_classes;
  m.extractor = feature_extractor_arch(input_dim, cfg.hidden_width, cfg.feature_width);
  m.discriminator = discriminator_arch(cfg.feature_width, cfg.hidden_width, cfg.n_domains(), cfg.dropout);
  init_mlp(m.params, m.extractor, rng);
  // Identity plus uniform noise: with a purely random B the pairwise losses
  // are indifferent to which output column a class lands in.
  m.params.add("B", Matrix::Identity(cfg.feature_width, cfg.feature_width) +
                        uniform_matrix(cfg.feature_width, cfg.feature_width, rng));
  init_mlp(m.params, m.discriminator, rng);
  m.prototypes = uniform_matrix(n_classes, cfg.feature_width, rng);
  m.optimizer.learning_rate = cfg.learning_rate;
  m.optimizer.weight_decay = cfg.weight_decay;
  m.optimizer.decay = cfg.rms_decay;
  m.optimizer.epsilon = cfg.rms_epsilon;
  return m;
}

Matrix Model::features(const Matrix& x) const { return predict_mlp(x, params, extractor); }

Matrix Model::predict_proba(const Matrix& x) const {
  return classify(features(x), params.value("B"), prototypes);
}

std::vector<int> Model::predict(const Matrix& x) const {
  const Matrix probs = predict_proba(x);
  std::vector<int> out(static_cast<std::size_t>(probs.rows()));
  for (Index r = 0; r < probs.rows(); ++r) {
    Index best = 0;
    probs.row(r).maxCoeff(&best);
    out[static_cast<std::size_t>(r)] = static_cast<int>(best);
  }
  return out;
}

EpochContext EpochContext::at(int epoch, const TrainConfig& cfg) {
  EpochContext ctx;
  ctx.epoch = epoch;
  ctx.max_epoch = cfg.max_epoch;
  ctx.lambda = lambda_schedule(epoch, cfg.max_epoch);
  ctx.gamma = target_weight(cfg.weights, epoch, cfg.max_epoch);
  ThresholdState state{cfg.tau_high0, cfg.tau_low0, cfg.tau_high0, cfg.tau_low0, cfg.max_epoch};
  const Thresholds t = threshold_schedule(epoch, state);
  ctx.tau_high = t.high;
  ctx.tau_low = t.low;
  return ctx;
}

// ---------------------------------------------------------------------------
// Training step
// ---------------------------------------------------------------------------

namespace {

Matrix stack_rows(const Matrix& a, const Matrix& b) {
  if (b.rows() == 0) return a;
  if (a.rows() == 0) return b;
  Matrix out(a.rows() + b.rows(), a.cols());
  out << a, b;
  return out;
}

MixupConfig effective_mixup(const TrainConfig& cfg) {
  MixupConfig m = cfg.mixup;
  if (cfg.ablations.no_augment) {
    m.mode = MixupMode::kOff;
  } else if (cfg.ablations.standard_mixup) {
    m.mode = MixupMode::kStandard;
  }
  return m;
}

void require_finite(double value, const char* term, const EpochContext& ctx) {
  if (std::isfinite(value)) return;
  std::ostringstream msg;
  msg << "non-finite " << term << " at epoch " << ctx.epoch << " (lambda=" << ctx.lambda << ", gamma=" << ctx.gamma
      << ", tau_h=" << ctx.tau_high << ", tau_l=" << ctx.tau_low << ")";
  throw Error(msg.str());
}

}  // namespace

StepLosses train_step(Model& model, const Batch& batch, const EpochContext& ctx, const TrainConfig& cfg, Rng& rng) {
  const Ablations& ab = cfg.ablations;
  const MixupConfig mix = effective_mixup(cfg);
  StepLosses out;
  out.sampled_with_replacement = batch.sampled_with_replacement;

  // Augment each domain separately; augmented rows follow the originals.
  const bool use_u = !ab.no_unlabeled_source && batch.xu.rows() > 0;
  const MixupResult aug_s = augment(batch.xs, batch.ys, batch.keys_s, mix, rng);
  const Matrix xs = stack_rows(batch.xs, aug_s.features);
  const Matrix ys = stack_rows(batch.ys, aug_s.labels);
  Matrix xu(0, batch.xs.cols());
  if (use_u) {
    const MixupResult aug_u = augment(batch.xu, Matrix(), batch.keys_u, mix, rng);
    xu = stack_rows(batch.xu, aug_u.features);
    out.mixup_starved = out.mixup_starved || aug_u.no_usable_rows;
  }
  const MixupResult aug_t = augment(batch.xt, Matrix(), batch.keys_t, mix, rng);
  const Matrix xt = stack_rows(batch.xt, aug_t.features);
  out.mixup_starved = out.mixup_starved || aug_s.no_usable_rows || aug_t.no_usable_rows;

  const Index ns = xs.rows();
  const Index nu = xu.rows();
  const Index nt = xt.rows();

  Tape tape;
  Var x = tape.constant(stack_rows(stack_rows(xs, xu), xt));
  Var features = forward_mlp(tape, x, model.params, model.extractor, nullptr);
  Var f_source = row_slice(tape, features, 0, ns + nu);
  Var f_labeled = row_slice(tape, features, 0, ns);
  Var f_target = row_slice(tape, features, ns + nu, nt);
  Var bilinear_w = tape.parameter(model.params, "B");

  // Pseudo-labels come from the previous prototypes and stay constant.
  Matrix y_source = ys;
  if (nu > 0) {
    const Matrix probs_u =
        classify(tape.value(features).middleRows(ns, nu), model.params.value("B"), model.prototypes);
    y_source = stack_rows(ys, sharpen(probs_u, cfg.weights.eta));
  }

  Var protos = ab.no_prototype ? tape_ops::prototypes(tape, f_labeled, ys, cfg.ridge)
                               : tape_ops::prototypes(tape, f_source, y_source, cfg.ridge);

  Var loss_s;
  Var loss_t;
  if (ab.no_instance_pairwise) {
    loss_s = tape.constant(Matrix::Zero(1, 1));
    loss_t = tape.constant(Matrix::Zero(1, 1));
  } else {
    Var probs_source = tape_ops::classify(tape, f_source, bilinear_w, protos);
    loss_s = tape_ops::pair_loss_source(tape, tape_ops::similarity(tape, probs_source), similarity_truth_source(y_source));

    Var probs_target = tape_ops::classify(tape, f_target, bilinear_w, protos);
    const auto truth = target_truth_mask(tape.value(probs_target), ctx.tau_high, ctx.tau_low);
    loss_t = tape_ops::pair_loss_target(tape, tape_ops::similarity(tape, probs_target), truth.truth, truth.mask,
                                        &out.no_valid_pairs);
    out.valid_pair_fraction = truth.mask.mean();
  }
  Var pair = tape_ops::combined_pair_loss(tape, loss_s, loss_t, protos, cfg.weights, ctx.epoch, ctx.max_epoch);

  std::vector<int> domains;
  domains.reserve(static_cast<std::size_t>(ns + nu + nt));
  const int n_domains = cfg.n_domains();
  const int u_domain = n_domains == 3 ? static_cast<int>(Domain::kUnlabeledSource) : 0;
  const int t_domain = n_domains == 3 ? static_cast<int>(Domain::kTarget) : 1;
  domains.insert(domains.end(), static_cast<std::size_t>(ns), 0);
  domains.insert(domains.end(), static_cast<std::size_t>(nu), u_domain);
  domains.insert(domains.end(), static_cast<std::size_t>(nt), t_domain);
  MlpArch disc_arch = model.discriminator;
  disc_arch.training = true;
  Var disc = tape_ops::domain_disc_loss(tape, features, domain_labels(domains, n_domains), model.params, disc_arch,
                                        &rng, ctx.lambda);
  Var total = add(tape, pair, disc);

  out.pair_source = tape.value(loss_s)(0, 0);
  out.pair_target = tape.value(loss_t)(0, 0);
  out.pair = tape.value(pair)(0, 0);
  out.penalty = orthogonality_penalty(tape.value(protos));
  out.disc = tape.value(disc)(0, 0);
  out.total = tape.value(total)(0, 0);
  require_finite(out.pair_source, "source pairwise loss", ctx);
  require_finite(out.pair_target, "target pairwise loss", ctx);
  require_finite(out.pair, "combined pairwise loss", ctx);
  require_finite(out.disc, "discriminator loss", ctx);

  tape.backward(total);
  rmsprop_step(model.params, model.optimizer);
  model.prototypes = tape.value(protos);
  return out;
}

// ---------------------------------------------------------------------------
// Evaluation and folds
// ---------------------------------------------------------------------------

Evaluation evaluate(const Model& model, const Matrix& features, const std::vector<int>& labels) {
  if (static_cast<Index>(labels.size()) != features.rows()) {
    throw Error("evaluate: " + std::to_string(labels.size()) + " labels for " + std::to_string(features.rows()) +
                " rows");
  }
  Evaluation ev;
  const auto c = static_cast<std::size_t>(model.n_classes);
  ev.confusion.assign(c, std::vector<long>(c, 0));
  if (features.rows() == 0) throw Error("evaluate: empty segment set");
  const std::vector<int> pred = model.predict(features);
  long correct = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0) continue;
    if (static_cast<std::size_t>(labels[i]) >= c) throw Error("evaluate: label out of range");
    ++ev.confusion[static_cast<std::size_t>(labels[i])][static_cast<std::size_t>(pred[i])];
    ++ev.count;
    if (pred[i] == labels[i]) ++correct;
  }
  ev.accuracy = ev.count > 0 ? static_cast<double>(correct) / static_cast<double>(ev.count) : 0.0;
  return ev;
}

namespace {

// Source pairwise loss of the current model on (a subsample of) S, eval mode.
double source_pair_loss_now(const Model& model, const LabeledSet& s, Index max_rows, std::uint64_t seed) {
  std::vector<Index> rows(static_cast<std::size_t>(s.size()));
  for (Index i = 0; i < s.size(); ++i) rows[static_cast<std::size_t>(i)] = i;
  if (s.size() > max_rows) {
    Rng rng(seed);
    std::shuffle(rows.begin(), rows.end(), rng);
    rows.resize(static_cast<std::size_t>(max_rows));
    std::sort(rows.begin(), rows.end());
  }
  Matrix x(static_cast<Index>(rows.size()), s.features.cols());
  std::vector<int> labels(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    x.row(static_cast<Index>(i)) = s.features.row(rows[i]);
    labels[i] = s.labels[static_cast<std::size_t>(rows[i])];
  }
  const Matrix probs = model.predict_proba(x);
  const Matrix y = one_hot(labels, model.n_classes);
  const Matrix truth = similarity_truth_source(y);
  return bce_sum(similarity_pred(probs), similarity_complement(probs), truth, nullptr) /
         static_cast<double>(truth.size());
}

// Prototypes over all source rows with pseudo-labels for U.
Matrix recompute_prototypes(const Model& model, const DomainPartition& p, const TrainConfig& cfg) {
  const Matrix fs = model.features(p.S.features);
  Matrix y = one_hot(p.S.labels, p.n_classes);
  if (p.U.size() == 0 || cfg.ablations.no_prototype) return prototypes(fs, y, cfg.ridge).prototypes;
  const Matrix fu = model.features(p.U.features);
  const Matrix yu = sharpen(classify(fu, model.params.value("B"), model.prototypes), cfg.weights.eta);
  return prototypes(stack_rows(fs, fu), stack_rows(y, yu), cfg.ridge).prototypes;
}

EpochRecord record_for(int epoch, const TrainConfig& cfg) {
  const EpochContext ctx = EpochContext::at(epoch, cfg);
  EpochRecord rec;
  rec.epoch = epoch;
  rec.lambda = ctx.lambda;
  rec.gamma = ctx.gamma;
  rec.tau_h = ctx.tau_high;
  rec.tau_l = ctx.tau_low;
  return rec;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
  if (!out) throw Error("write failed: " + path.string());
}

}  // namespace

FoldResult train_fold(const TrainConfig& cfg, const DomainPartition& partition, const FoldOptions& options) {
  cfg.validate();
  const auto start = std::chrono::steady_clock::now();
  DomainPartition p = partition;
  if (cfg.ablations.no_unlabeled_source) {
    p.U = UnlabeledSet{};
    p.U.features.resize(0, p.S.features.cols());
    p.sealed = SealedLabels({}, p.sealed.target());
  }
  if (p.S.size() == 0) throw Error("train_fold: labeled source set is empty");
  if (p.T.size() == 0) throw Error("train_fold: target set is empty");

  Rng rng(cfg.seed);
  auto model = std::make_shared<Model>(Model::create(p.S.features.cols(), p.n_classes, cfg, rng));

  BatchSizes sizes = cfg.batch;
  if (p.U.size() == 0) sizes.unlabeled = 0;
  const int steps = cfg.steps_per_epoch > 0
                        ? cfg.steps_per_epoch
                        : static_cast<int>((p.S.size() + sizes.labeled - 1) / sizes.labeled);

  const EvaluationSet eval = options.held_out ? *options.held_out : EvaluationSet{p.T.features, p.sealed.target()};
  const BoundOptions bound_opts{cfg.pi_mode, cfg.mmd_samples, cfg.seed};
  const FeatureFn features = [&model](const Matrix& x) { return model->features(x); };
  auto bound_now = [&](int epoch) {
    const double src = source_pair_loss_now(*model, p.S, cfg.mmd_samples, cfg.seed);
    const double acc = evaluate(*model, eval.features, eval.labels).accuracy;
    return bound_report(features, p, epoch, src, acc, bound_opts);
  };

  FoldResult result;
  result.fold = options.fold;
  result.target_subject = p.target_subject;
  result.seed = cfg.seed;

  std::optional<std::ofstream> metrics;
  if (options.out_dir) {
    std::filesystem::create_directories(*options.out_dir);
    metrics.emplace(*options.out_dir / "metrics.jsonl");
    if (!*metrics) throw Error("cannot write " + (*options.out_dir / "metrics.jsonl").string());
  }

  for (int epoch = 0; epoch < cfg.max_epoch; ++epoch) {
    EpochRecord rec = record_for(epoch, cfg);
    if (epoch % cfg.report_every == 0) rec.bound = bound_now(epoch);
    const EpochContext ctx = EpochContext::at(epoch, cfg);
    for (int s = 0; s < steps; ++s) {
      const Batch batch = sample_minibatch(p, sizes, rng);
      const StepLosses l = train_step(*model, batch, ctx, cfg, rng);
      rec.loss_pair_s += l.pair_source / steps;
      rec.loss_pair_t += l.pair_target / steps;
      rec.loss_disc += l.disc / steps;
    }
    if (metrics) *metrics << epoch_record_json(options.fold, rec) << '\n';
    result.epochs.push_back(std::move(rec));
  }

  if (cfg.inference_prototypes == InferencePrototypes::kRecompute) {
    model->prototypes = recompute_prototypes(*model, p, cfg);
  }
  EpochRecord closing = record_for(cfg.max_epoch, cfg);
  closing.trained = false;
  closing.bound = bound_now(cfg.max_epoch);
  if (metrics) *metrics << epoch_record_json(options.fold, closing) << '\n';
  result.epochs.push_back(std::move(closing));

  const Evaluation ev = evaluate(*model, eval.features, eval.labels);
  result.accuracy = ev.accuracy;
  result.confusion = ev.confusion;
  result.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  result.model = model;
  if (metrics) {
    *metrics << final_record_json(result) << '\n';
    if (!*metrics) throw Error("write failed: " + (*options.out_dir / "metrics.jsonl").string());
    metrics->close();
    save_checkpoint(*model, *options.out_dir / "checkpoint.txt");
  }
  return result;
}

std::string ResultTable::format() const {
  std::ostringstream out;
  char line[128];
  out << "fold  target  accuracy\n";
  for (const auto& f : folds) {
    if (f.failed) {
      std::snprintf(line, sizeof line, "%4d  %6d  FAILED: %s\n", f.fold, f.target_subject, f.error.c_str());
    } else {
      std::snprintf(line, sizeof line, "%4d  %6d  %8.2f\n", f.fold, f.target_subject, 100.0 * f.accuracy);
    }
    out << line;
  }
  std::snprintf(line, sizeof line, "mean+-std  %05.2f+-%05.2f", 100.0 * mean_accuracy, 100.0 * std_accuracy);
  out << line;
  if (failed_folds > 0) out << "  (" << failed_folds << " failed folds excluded)";
  out << '\n';
  return out.str();
}

int effective_workers(int requested) {
  int workers = std::max(1, requested);
  if (const char* cap = std::getenv("PROTOMATCH_THREADS")) {
    char* end = nullptr;
    const long v = std::strtol(cap, &end, 10);
    if (end != cap && *end == '\0' && v >= 1) workers = std::min<int>(workers, static_cast<int>(v));
  }
  return workers;
}

ResultTable run_loso(const TrainConfig& cfg, const Dataset& ds, const RunOptions& options) {
  cfg.validate();
  ds.validate();
  std::vector<std::pair<int, int>> folds;  // (fold index, target subject)
  for (std::size_t i = 0; i < ds.subjects.size(); ++i) {
    const int subject = ds.subjects[i];
    if (!options.target_subject || *options.target_subject == subject) folds.emplace_back(static_cast<int>(i), subject);
  }
  if (folds.empty()) {
    throw Error("target subject " + std::to_string(options.target_subject.value_or(-1)) + " is not in the dataset");
  }

  ResultTable table;
  table.folds.resize(folds.size());
  auto run_one = [&](std::size_t slot) {
    const auto [fold, subject] = folds[slot];
    FoldResult& out = table.folds[slot];
    out.fold = fold;
    out.target_subject = subject;
    TrainConfig fold_cfg = cfg;
    fold_cfg.seed = cfg.seed + static_cast<std::uint64_t>(fold);
    out.seed = fold_cfg.seed;
    try {
      DomainPartition p = partition_loso(ds, subject, cfg.n_labeled_trials);
      FoldOptions fo;
      fo.fold = fold;
      if (options.out_dir) fo.out_dir = *options.out_dir / ("fold_" + std::to_string(subject));
      if (cfg.split_target_k > 0) {
        TargetSplit split = split_target(p, cfg.split_target_k);
        fo.held_out = EvaluationSet{split.test.features, split.test_labels};
        p.T = std::move(split.validation);
        p.sealed = SealedLabels(p.sealed.unlabeled_source(), std::move(split.validation_labels));
      }
      out = train_fold(fold_cfg, p, fo);
    } catch (const std::exception& e) {
      out.failed = true;
      out.error = e.what();
    }
  };

  const int workers = std::min<int>(effective_workers(options.workers), static_cast<int>(folds.size()));
  if (workers <= 1) {
    for (std::size_t i = 0; i < folds.size(); ++i) run_one(i);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < folds.size(); i = next++) run_one(i);
      });
    }
    for (auto& t : pool) t.join();
  }

  std::vector<double> acc;
  for (const auto& f : table.folds) {
    if (f.failed) {
      ++table.failed_folds;
    } else {
      acc.push_back(f.accuracy);
    }
  }
  if (!acc.empty()) {
    double sum = 0.0;
    for (double a : acc) sum += a;
    table.mean_accuracy = sum / static_cast<double>(acc.size());
    double var = 0.0;
    for (double a : acc) var += (a - table.mean_accuracy) * (a - table.mean_accuracy);
    table.std_accuracy = std::sqrt(var / static_cast<double>(acc.size()));
  }

  if (options.out_dir) {
    std::filesystem::create_directories(*options.out_dir);
    std::ofstream merged(*options.out_dir / "metrics.jsonl");
    for (const auto& f : table.folds) {
      if (f.failed) continue;
      std::ifstream in(*options.out_dir / ("fold_" + std::to_string(f.target_subject)) / "metrics.jsonl");
      merged << in.rdbuf();
    }
    write_text(*options.out_dir / "summary.txt", table.format());
    nlohmann::json summary;
    summary["mean_accuracy"] = table.mean_accuracy;
    summary["std_accuracy"] = table.std_accuracy;
    summary["failed_folds"] = table.failed_folds;
    summary["ablations"] = cfg.ablations.to_string();
    summary["folds"] = nlohmann::json::array();
    for (const auto& f : table.folds) {
      nlohmann::json j{{"fold", f.fold}, {"target_subject", f.target_subject}, {"seed", f.seed}};
      if (f.failed) {
        j["failed"] = true;
        j["error"] = f.error;
      } else {
        j["accuracy"] = f.accuracy;
      }
      summary["folds"].push_back(j);
    }
    write_text(*options.out_dir / "summary.json", summary.dump(2) + "\n");
  }
  return table;
}

// ---------------------------------------------------------------------------
// Checkpoints and metrics
// ---------------------------------------------------------------------------

std::vector<NamedMatrix> checkpoint_blocks(const Model& model) {
  std::vector<NamedMatrix> blocks;
  for (const auto& name : model.params.names()) blocks.push_back({name, model.params.value(name)});
  blocks.push_back({"P", model.prototypes});
  return blocks;
}

void save_checkpoint(const Model& model, const std::filesystem::path& path) {
  write_checkpoint(path, checkpoint_blocks(model));
}

void load_checkpoint(const std::filesystem::path& path, Model& model) {
  const std::vector<NamedMatrix> blocks = read_checkpoint(path);
  std::map<std::string, const Matrix*> by_name;
  for (const auto& b : blocks) {
    if (!by_name.emplace(b.name, &b.value).second) throw Error("checkpoint: duplicate block '" + b.name + "'");
  }
  auto fetch = [&](const std::string& name, const Matrix& expected) -> const Matrix& {
    auto it = by_name.find(name);
    if (it == by_name.end()) throw Error("checkpoint: missing block '" + name + "'");
    if (it->second->rows() != expected.rows() || it->second->cols() != expected.cols()) {
      throw Error("checkpoint: block '" + name + "' has shape " + shape_of(*it->second) + ", expected " +
                  shape_of(expected));
    }
    return *it->second;
  };
  for (const auto& name : model.params.names()) model.params.value(name) = fetch(name, model.params.value(name));
  model.prototypes = fetch("P", model.prototypes);
  if (by_name.size() != model.params.size() + 1) throw Error("checkpoint: unexpected extra blocks");
}

std::string epoch_record_json(int fold, const EpochRecord& r) {
  nlohmann::json j{{"fold", fold},          {"epoch", r.epoch},     {"trained", r.trained},
                   {"loss_pair_s", r.loss_pair_s}, {"loss_pair_t", r.loss_pair_t}, {"loss_disc", r.loss_disc},
                   {"lambda", r.lambda},    {"gamma", r.gamma},     {"tau_h", r.tau_h},
                   {"tau_l", r.tau_l}};
  if (r.bound) {
    const BoundReport& b = *r.bound;
    j["source_pair_loss"] = b.source_pair_loss;
    j["mmd_SU"] = b.mmd_SU;
    j["mmd_UT"] = b.mmd_UT;
    j["mmd_ST"] = b.mmd_ST;
    j["pi_S"] = b.pi_S;
    j["pi_U"] = b.pi_U;
    j["weighted_divergence"] = b.weighted_divergence;
    j["target_acc"] = b.target_accuracy;
  }
  return j.dump();
}

std::string final_record_json(const FoldResult& result) {
  nlohmann::json j{{"fold", result.fold},         {"final", true},
                   {"target_subject", result.target_subject}, {"accuracy", result.accuracy},
                   {"confusion", result.confusion}, {"seconds", result.seconds},
                   {"seed", result.seed}};
  return j.dump();
}

}  // namespace protomatch
