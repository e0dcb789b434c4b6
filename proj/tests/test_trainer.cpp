#include "protomatch/trainer.hpp"

#include <gtest/gtest.h>
#include <json.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>

using namespace protomatch;

namespace {

SynthConfig tiny_data(std::uint64_t seed = 1) {
  SynthConfig s;
  s.n_subjects = 3;
  s.trials_per_subject = 6;
  s.segments_per_trial = 8;
  s.feature_dim = 6;
  s.seed = seed;
  return s;
}

TrainConfig tiny_train() {
  TrainConfig c;
  c.max_epoch = 4;
  c.steps_per_epoch = 2;
  c.batch = {12, 12, 12};
  c.hidden_width = 8;
  c.feature_width = 6;
  c.n_labeled_trials = 3;
  c.mmd_samples = 24;
  return c;
}

bool same_params(const Model& a, const Model& b) {
  for (const auto& name : a.params.names()) {
    if (a.params.value(name) != b.params.value(name)) return false;
  }
  return a.prototypes == b.prototypes;
}

struct StepFixture {
  Dataset ds = synthesize_dataset(tiny_data());
  DomainPartition p = partition_loso(ds, 1, 3);
  TrainConfig cfg = tiny_train();

  Model model(std::uint64_t seed = 3) const {
    Rng rng(seed);
    return Model::create(ds.feature_dim, ds.n_classes, cfg, rng);
  }
  Batch batch(std::uint64_t seed = 4) const {
    Rng rng(seed);
    return sample_minibatch(p, cfg.batch, rng);
  }
};

std::filesystem::path scratch(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("protomatch_trainer_" + name);
  std::filesystem::remove_all(dir);
  return dir;
}

}  // namespace

TEST(Ablations, ParseAndFormat) {
  Ablations a;
  EXPECT_EQ(a.to_string(), "none");
  EXPECT_FALSE(a.any());
  a.set("no_augment");
  a.set("two_domain_adaptation");
  EXPECT_EQ(a.to_string(), "no_augment,two_domain_adaptation");
  try {
    a.set("no_everything");
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("no_unlabeled_source"), std::string::npos);
  }
}

TEST(TrainStep, BitwiseReproducible) {
  StepFixture fx;
  Model a = fx.model(), b = fx.model();
  Batch batch = fx.batch();
  EpochContext ctx = EpochContext::at(2, fx.cfg);
  Rng ra(9), rb(9);
  StepLosses la = train_step(a, batch, ctx, fx.cfg, ra);
  StepLosses lb = train_step(b, batch, ctx, fx.cfg, rb);
  EXPECT_EQ(la.total, lb.total);
  EXPECT_TRUE(same_params(a, b));
}

TEST(TrainStep, ZeroLambdaLeavesExtractorToPairLoss) {
  StepFixture fx;
  fx.cfg.ablations.no_instance_pairwise = true;
  fx.cfg.weights.beta = 0.0;
  fx.cfg.weight_decay = 0.0;
  Model m = fx.model();
  m.optimizer.weight_decay = 0.0;
  const Model before = m;
  EpochContext ctx = EpochContext::at(0, fx.cfg);
  ASSERT_EQ(ctx.lambda, 0.0);
  Rng rng(1);
  train_step(m, fx.batch(), ctx, fx.cfg, rng);
  for (const auto& name : m.params.names()) {
    if (name.rfind("d.", 0) == 0) {
      EXPECT_NE(m.params.value(name), before.params.value(name)) << name;
    } else {
      EXPECT_EQ(m.params.value(name), before.params.value(name)) << name;
    }
  }
}

TEST(TrainStep, NoInstancePairwiseTermsExactlyZero) {
  StepFixture fx;
  fx.cfg.ablations.no_instance_pairwise = true;
  fx.cfg.weights.beta = 0.0;
  Model m = fx.model();
  m.optimizer.weight_decay = 0.0;
  const Matrix b = m.params.value("B");
  Rng rng(2);
  StepLosses l = train_step(m, fx.batch(), EpochContext::at(3, fx.cfg), fx.cfg, rng);
  EXPECT_EQ(l.pair_source, 0.0);
  EXPECT_EQ(l.pair_target, 0.0);
  EXPECT_EQ(l.pair, 0.0);
  EXPECT_GT(l.disc, 0.0);
  EXPECT_EQ(m.params.value("B"), b);
}

TEST(TrainStep, StepLossesConsistent) {
  StepFixture fx;
  Model m = fx.model();
  EpochContext ctx = EpochContext::at(2, fx.cfg);
  Rng rng(3);
  StepLosses l = train_step(m, fx.batch(), ctx, fx.cfg, rng);
  EXPECT_NEAR(l.pair, l.pair_source + ctx.gamma * l.pair_target + fx.cfg.weights.beta * l.penalty, 1e-12);
  EXPECT_NEAR(l.total, l.pair + l.disc, 1e-12);
  EXPECT_GT(l.pair_source, 0.0);
}

TEST(TrainStep, TwoDomainHead) {
  StepFixture fx;
  fx.cfg.ablations.two_domain_adaptation = true;
  Model m = fx.model();
  EXPECT_EQ(m.discriminator.output_width(), 2);
  Rng rng(4);
  StepLosses l = train_step(m, fx.batch(), EpochContext::at(1, fx.cfg), fx.cfg, rng);
  EXPECT_TRUE(std::isfinite(l.disc));
  fx.cfg.ablations = {};
  EXPECT_EQ(fx.model().discriminator.output_width(), 3);
}

TEST(EpochContext, Schedules) {
  TrainConfig cfg;
  cfg.max_epoch = 10;
  double gap = 1.0, lambda = -1.0;
  for (int e = 0; e <= 10; ++e) {
    EpochContext c = EpochContext::at(e, cfg);
    EXPECT_LE(c.tau_high - c.tau_low, gap);
    EXPECT_GE(c.lambda, lambda);
    EXPECT_NEAR(c.gamma, 2.0 * e / 10.0, 1e-15);
    gap = c.tau_high - c.tau_low;
    lambda = c.lambda;
  }
}

TEST(Evaluate, ConstantPredictor) {
  StepFixture fx;
  Model m = fx.model();
  m.params.value("B").setZero();  // equal logits; argmax picks class 0
  Matrix x = Matrix::Random(30, fx.ds.feature_dim);
  std::vector<int> labels;
  for (int i = 0; i < 30; ++i) labels.push_back(i % 3);
  Evaluation e = evaluate(m, x, labels);
  EXPECT_NEAR(e.accuracy, 1.0 / 3.0, 1e-15);
  EXPECT_EQ(e.confusion[1][0], 10);
  long total = 0;
  for (const auto& row : e.confusion) {
    for (long v : row) total += v;
  }
  EXPECT_EQ(total, 30);
  EXPECT_THROW(evaluate(m, Matrix(0, fx.ds.feature_dim), {}), Error);
}

TEST(TrainFold, NoiseFreeDataSeparates) {
  SynthConfig s = tiny_data();
  s.subject_shift = 0;
  s.trial_drift = 0;
  s.noise = 0;
  Dataset ds = synthesize_dataset(s);
  TrainConfig cfg = tiny_train();
  cfg.max_epoch = 20;
  cfg.learning_rate = 1e-2;
  FoldResult r = train_fold(cfg, partition_loso(ds, 2, 3));
  EXPECT_EQ(r.accuracy, 1.0);
}

TEST(TrainFold, RecordsAndConfusion) {
  Dataset ds = synthesize_dataset(tiny_data());
  DomainPartition p = partition_loso(ds, 3, 3);
  TrainConfig cfg = tiny_train();
  FoldResult r = train_fold(cfg, p);
  ASSERT_EQ(r.epochs.size(), static_cast<std::size_t>(cfg.max_epoch + 1));
  EXPECT_FALSE(r.epochs.back().trained);
  EXPECT_TRUE(r.epochs.back().bound.has_value());
  EXPECT_GE(r.accuracy, 0.0);
  EXPECT_LE(r.accuracy, 1.0);
  std::vector<long> per_class(3, 0);
  for (int y : p.sealed.target()) ++per_class[static_cast<std::size_t>(y)];
  long diag = 0, total = 0;
  for (std::size_t i = 0; i < 3; ++i) {
    long row = 0;
    for (long v : r.confusion[i]) row += v;
    EXPECT_EQ(row, per_class[i]);
    diag += r.confusion[i][i];
    total += row;
  }
  EXPECT_DOUBLE_EQ(r.accuracy, static_cast<double>(diag) / static_cast<double>(total));
}

TEST(TrainFold, NoUnlabeledSourceDropsU) {
  Dataset ds = synthesize_dataset(tiny_data());
  TrainConfig cfg = tiny_train();
  cfg.ablations.no_unlabeled_source = true;
  FoldResult r = train_fold(cfg, partition_loso(ds, 1, 3));
  for (const auto& e : r.epochs) {
    ASSERT_TRUE(e.bound.has_value());
    EXPECT_EQ(e.bound->pi_U, 0.0);
    EXPECT_EQ(e.bound->mmd_SU, 0.0);
    EXPECT_EQ(e.bound->mmd_UT, 0.0);
  }
  EXPECT_EQ(r.model->discriminator.output_width(), 2);
}

TEST(TrainFold, AblationTermsZeroInTrace) {
  Dataset ds = synthesize_dataset(tiny_data());
  TrainConfig cfg = tiny_train();
  cfg.ablations.no_instance_pairwise = true;
  FoldResult r = train_fold(cfg, partition_loso(ds, 1, 3));
  for (const auto& e : r.epochs) {
    EXPECT_EQ(e.loss_pair_s, 0.0);
    EXPECT_EQ(e.loss_pair_t, 0.0);
  }
}

TEST(TrainFold, SealedLabelsDoNotReachTraining) {
  Dataset ds = synthesize_dataset(tiny_data());
  DomainPartition clean = partition_loso(ds, 2, 3);
  DomainPartition poisoned = clean;
  std::vector<int> u = clean.sealed.unlabeled_source(), t = clean.sealed.target();
  for (int& y : u) y = (y + 1) % 3;
  for (int& y : t) y = (y + 2) % 3;
  poisoned.sealed = SealedLabels(u, t);
  TrainConfig cfg = tiny_train();
  FoldResult a = train_fold(cfg, clean);
  FoldResult b = train_fold(cfg, poisoned);
  ASSERT_EQ(a.epochs.size(), b.epochs.size());
  for (std::size_t i = 0; i < a.epochs.size(); ++i) {
    EXPECT_EQ(a.epochs[i].loss_pair_s, b.epochs[i].loss_pair_s);
    EXPECT_EQ(a.epochs[i].loss_pair_t, b.epochs[i].loss_pair_t);
    EXPECT_EQ(a.epochs[i].loss_disc, b.epochs[i].loss_disc);
  }
  EXPECT_TRUE(same_params(*a.model, *b.model));
}

TEST(TrainFold, MetricsAndCheckpoint) {
  Dataset ds = synthesize_dataset(tiny_data());
  TrainConfig cfg = tiny_train();
  FoldOptions opt;
  opt.fold = 4;
  opt.out_dir = scratch("fold");
  DomainPartition p = partition_loso(ds, 1, 3);
  FoldResult r = train_fold(cfg, p, opt);
  std::ifstream in(*opt.out_dir / "metrics.jsonl");
  std::string line;
  int records = 0;
  nlohmann::json last;
  while (std::getline(in, line)) {
    last = nlohmann::json::parse(line);
    EXPECT_EQ(last["fold"], 4);
    if (!last.contains("final")) {
      for (const char* key : {"epoch", "loss_pair_s", "loss_pair_t", "loss_disc", "lambda", "gamma", "tau_h", "tau_l",
                              "mmd_SU", "mmd_UT", "mmd_ST", "target_acc"}) {
        EXPECT_TRUE(last.contains(key)) << key;
      }
    }
    ++records;
  }
  EXPECT_EQ(records, cfg.max_epoch + 2);
  EXPECT_EQ(last["final"], true);
  EXPECT_EQ(last["confusion"].size(), 3u);
  EXPECT_DOUBLE_EQ(last["accuracy"].get<double>(), r.accuracy);

  Rng rng(0);
  Model loaded = Model::create(ds.feature_dim, ds.n_classes, cfg, rng);
  load_checkpoint(*opt.out_dir / "checkpoint.txt", loaded);
  EXPECT_TRUE(same_params(loaded, *r.model));
  EXPECT_EQ(evaluate(loaded, p.T.features, p.sealed.target()).accuracy, r.accuracy);
}

TEST(Checkpoint, ClassCountMismatch) {
  TrainConfig cfg = tiny_train();
  Rng rng(1);
  Model two = Model::create(6, 2, cfg, rng);
  Model three = Model::create(6, 3, cfg, rng);
  auto path = scratch("ckpt");
  std::filesystem::create_directories(path);
  save_checkpoint(two, path / "two.txt");
  try {
    load_checkpoint(path / "two.txt", three);
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("'P'"), std::string::npos) << e.what();
  }
}

TEST(RunLoso, FoldsAndStatistics) {
  Dataset ds = synthesize_dataset(tiny_data());
  TrainConfig cfg = tiny_train();
  ResultTable t = run_loso(cfg, ds);
  ASSERT_EQ(t.folds.size(), 3u);
  double mean = 0;
  for (const auto& f : t.folds) mean += f.accuracy / 3;
  double var = 0;
  for (const auto& f : t.folds) var += (f.accuracy - mean) * (f.accuracy - mean) / 3;
  EXPECT_NEAR(t.mean_accuracy, mean, 1e-15);
  EXPECT_NEAR(t.std_accuracy, std::sqrt(var), 1e-15);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(t.folds[i].seed, cfg.seed + i);
  EXPECT_NE(t.format().find("mean+-std"), std::string::npos);
}

TEST(RunLoso, ParallelMatchesSerial) {
  Dataset ds = synthesize_dataset(tiny_data());
  TrainConfig cfg = tiny_train();
  ResultTable serial = run_loso(cfg, ds);
  RunOptions par;
  par.workers = 3;
  ResultTable parallel = run_loso(cfg, ds, par);
  ASSERT_EQ(serial.folds.size(), parallel.folds.size());
  for (std::size_t i = 0; i < serial.folds.size(); ++i) {
    EXPECT_EQ(serial.folds[i].accuracy, parallel.folds[i].accuracy);
    EXPECT_EQ(serial.folds[i].confusion, parallel.folds[i].confusion);
    EXPECT_TRUE(same_params(*serial.folds[i].model, *parallel.folds[i].model));
  }
}

TEST(RunLoso, FailedFoldIsolated) {
  Dataset ds = synthesize_dataset(tiny_data());
  // Subject 3 keeps only 3 trials: as a source it leaves U empty for N = 3.
  std::erase_if(ds.segments, [](const Segment& s) { return s.subject == 3 && s.trial > 3; });
  TrainConfig cfg = tiny_train();
  ResultTable t = run_loso(cfg, ds);
  ASSERT_EQ(t.folds.size(), 3u);
  EXPECT_EQ(t.failed_folds, 2);
  EXPECT_TRUE(t.folds[0].failed);
  EXPECT_FALSE(t.folds[0].error.empty());
  EXPECT_FALSE(t.folds[2].failed);
  EXPECT_EQ(t.mean_accuracy, t.folds[2].accuracy);
  EXPECT_NE(t.format().find("FAILED"), std::string::npos);
}

TEST(RunLoso, SingleTargetAndSplit) {
  Dataset ds = synthesize_dataset(tiny_data());
  TrainConfig cfg = tiny_train();
  cfg.split_target_k = 2;
  RunOptions opt;
  opt.target_subject = 2;
  opt.out_dir = scratch("split");
  ResultTable t = run_loso(cfg, ds, opt);
  ASSERT_EQ(t.folds.size(), 1u);
  EXPECT_EQ(t.folds[0].target_subject, 2);
  EXPECT_EQ(t.folds[0].fold, 1);
  long total = 0;
  for (const auto& row : t.folds[0].confusion) {
    for (long v : row) total += v;
  }
  EXPECT_EQ(total, 4 * 8);  // trials 3..6 of the target
  EXPECT_TRUE(std::filesystem::exists(*opt.out_dir / "fold_2" / "checkpoint.txt"));
  EXPECT_TRUE(std::filesystem::exists(*opt.out_dir / "summary.json"));
}

TEST(BoundReport, DivergenceDropsWithTraining) {
  double before = 0, after = 0;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    SynthConfig s = tiny_data(seed);
    s.segments_per_trial = 12;
    Dataset ds = synthesize_dataset(s);
    TrainConfig cfg = tiny_train();
    cfg.max_epoch = 15;
    cfg.report_every = 15;
    cfg.seed = seed;
    FoldResult r = train_fold(cfg, partition_loso(ds, 1, 3));
    before += r.epochs.front().bound->weighted_divergence;
    after += r.epochs.back().bound->weighted_divergence;
  }
  EXPECT_LT(after, before);
}
