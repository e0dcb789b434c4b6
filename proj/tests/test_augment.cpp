#include "protomatch/augment.hpp"

#include <gtest/gtest.h>

#include <set>

using namespace protomatch;

namespace {

std::vector<GroupKey> trial_keys(std::initializer_list<std::pair<int, int>> trial_counts) {
  std::vector<GroupKey> keys;
  for (auto [trial, count] : trial_counts) {
    for (int i = 0; i < count; ++i) keys.push_back({1, 1, trial});
  }
  return keys;
}

MixupConfig forced(double w, MixupMode mode = MixupMode::kEeg) {
  MixupConfig cfg;
  cfg.forced_weight = w;
  cfg.mode = mode;
  return cfg;
}

}  // namespace

TEST(GroupByTrial, TwoTrials) {
  auto keys = trial_keys({{1, 3}, {2, 5}});
  auto groups = group_by_trial(keys);
  ASSERT_EQ(groups.size(), 2u);
  EXPECT_EQ(groups[0].rows.size(), 3u);
  EXPECT_EQ(groups[1].rows.size(), 5u);
  EXPECT_TRUE(groups[0].key < groups[1].key || groups[1].key < groups[0].key);
}

TEST(GroupByTrial, SingletonUnusable) {
  auto keys = trial_keys({{4, 1}});
  auto groups = group_by_trial(keys);
  ASSERT_EQ(groups.size(), 1u);
  EXPECT_FALSE(groups[0].usable());
}

TEST(GroupByTrial, SessionSeparatesGroups) {
  std::vector<GroupKey> keys{{1, 1, 3}, {1, 2, 3}, {1, 1, 3}};
  auto groups = group_by_trial(keys);
  ASSERT_EQ(groups.size(), 2u);
  EXPECT_EQ(groups[0].rows, (std::vector<Index>{0, 2}));
}

TEST(EegMixup, ForcedEndpoint) {
  Matrix x = Matrix::Random(6, 3);
  auto keys = trial_keys({{1, 3}, {2, 3}});
  Rng rng(1);
  MixupResult r = eeg_mixup(x, Matrix(), keys, group_by_trial(keys), forced(1.0), rng);
  ASSERT_EQ(r.features.rows(), 6);
  for (Index z = 0; z < 6; ++z) {
    EXPECT_EQ(r.features.row(z), x.row(r.parents[static_cast<std::size_t>(z)].first));
  }
  EXPECT_EQ(r.labels.rows(), 0);
}

TEST(EegMixup, Midpoint) {
  Matrix x(2, 2), y(2, 3);
  x << 2, 4, 4, 8;
  y << 0, 1, 0, 0, 1, 0;
  auto keys = trial_keys({{1, 2}});
  Rng rng(1);
  MixupResult r = eeg_mixup(x, y, keys, group_by_trial(keys), forced(0.5), rng);
  for (Index z = 0; z < r.features.rows(); ++z) {
    EXPECT_DOUBLE_EQ(r.features(z, 0), 3.0);
    EXPECT_DOUBLE_EQ(r.features(z, 1), 6.0);
    EXPECT_EQ(r.labels.row(z), y.row(0));
  }
}

TEST(EegMixup, RatioCounts) {
  Matrix x = Matrix::Random(96, 4);
  std::vector<GroupKey> keys;
  for (int i = 0; i < 96; ++i) keys.push_back({1, 1, i / 8});
  auto groups = group_by_trial(keys);
  Rng rng(3);
  MixupConfig cfg;
  for (double ratio : {0.5, 1.0, 2.0}) {
    cfg.ratio = ratio;
    EXPECT_EQ(eeg_mixup(x, Matrix(), keys, groups, cfg, rng).features.rows(), augmented_count(96, ratio));
  }
  cfg.ratio = 1.0;
  EXPECT_EQ(eeg_mixup(x, Matrix(), keys, groups, cfg, rng).features.rows(), 96);
}

TEST(EegMixup, ConvexAndWithinTrial) {
  Matrix x = Matrix::Random(40, 5);
  std::vector<GroupKey> keys;
  for (int i = 0; i < 40; ++i) keys.push_back({i % 2, 1, i % 5});
  auto groups = group_by_trial(keys);
  Rng rng(4);
  MixupConfig cfg;
  cfg.ratio = 3.0;
  MixupResult r = eeg_mixup(x, Matrix(), keys, groups, cfg, rng);
  for (Index z = 0; z < r.features.rows(); ++z) {
    auto [i, j] = r.parents[static_cast<std::size_t>(z)];
    EXPECT_NE(i, j);
    EXPECT_EQ(keys[static_cast<std::size_t>(i)], keys[static_cast<std::size_t>(j)]);
    EXPECT_EQ(r.keys[static_cast<std::size_t>(z)], keys[static_cast<std::size_t>(i)]);
    RowVector lo = x.row(i).cwiseMin(x.row(j)).array() - 1e-12;
    RowVector hi = x.row(i).cwiseMax(x.row(j)).array() + 1e-12;
    EXPECT_TRUE((r.features.row(z).array() >= lo.array()).all());
    EXPECT_TRUE((r.features.row(z).array() <= hi.array()).all());
  }
}

TEST(EegMixup, AllSingletonsStarve) {
  Matrix x = Matrix::Random(3, 2);
  auto keys = trial_keys({{1, 1}, {2, 1}, {3, 1}});
  Rng rng(1);
  MixupResult r = eeg_mixup(x, Matrix(), keys, group_by_trial(keys), MixupConfig{}, rng);
  EXPECT_EQ(r.features.rows(), 0);
  EXPECT_TRUE(r.no_usable_rows);
}

TEST(StandardMixup, SoftLabel) {
  Matrix x(2, 2), y(2, 3);
  x << 1, 0, 0, 1;
  y << 1, 0, 0, 0, 1, 0;
  auto keys = trial_keys({{1, 1}, {2, 1}});
  Rng rng(2);
  MixupResult r = standard_mixup(x, y, keys, forced(0.5, MixupMode::kStandard), rng);
  ASSERT_EQ(r.labels.rows(), 2);
  for (Index z = 0; z < 2; ++z) {
    EXPECT_DOUBLE_EQ(r.labels(z, 0), 0.5);
    EXPECT_DOUBLE_EQ(r.labels(z, 1), 0.5);
    EXPECT_DOUBLE_EQ(r.labels(z, 2), 0.0);
  }
}

TEST(StandardMixup, ForcedEndpointDuplicates) {
  Matrix x = Matrix::Random(5, 3);
  auto keys = trial_keys({{1, 2}, {2, 3}});
  Rng rng(2);
  MixupResult r = standard_mixup(x, Matrix(), keys, forced(1.0, MixupMode::kStandard), rng);
  for (Index z = 0; z < r.features.rows(); ++z) {
    EXPECT_EQ(r.features.row(z), x.row(r.parents[static_cast<std::size_t>(z)].first));
  }
}

TEST(StandardMixup, MatchesEegOnSingleTrial) {
  const Index n = 12;
  Matrix x(n, 2);
  for (Index i = 0; i < n; ++i) x.row(i) << static_cast<double>(i), static_cast<double>(i * i) / 10.0;
  auto keys = trial_keys({{1, static_cast<int>(n)}});
  auto groups = group_by_trial(keys);
  MixupConfig cfg;
  cfg.ratio = 1.0;
  Rng ra(10), rb(20);
  RowVector mean_a = RowVector::Zero(2), mean_b = RowVector::Zero(2);
  RowVector sq_a = RowVector::Zero(2), sq_b = RowVector::Zero(2);
  const int draws = 10000 / static_cast<int>(n) + 1;
  Index total = 0;
  for (int d = 0; d < draws; ++d) {
    Matrix a = eeg_mixup(x, Matrix(), keys, groups, cfg, ra).features;
    Matrix b = standard_mixup(x, Matrix(), keys, cfg, rb).features;
    mean_a += a.colwise().sum();
    mean_b += b.colwise().sum();
    sq_a += a.array().square().matrix().colwise().sum();
    sq_b += b.array().square().matrix().colwise().sum();
    total += a.rows();
  }
  const double t = static_cast<double>(total);
  mean_a /= t;
  mean_b /= t;
  RowVector var_a = sq_a / t - mean_a.cwiseProduct(mean_a);
  RowVector var_b = sq_b / t - mean_b.cwiseProduct(mean_b);
  for (Index c = 0; c < 2; ++c) {
    // ~4 standard errors of the mean
    const double se = std::sqrt((var_a(c) + var_b(c)) / t);
    EXPECT_NEAR(mean_a(c), mean_b(c), 4 * se);
    EXPECT_NEAR(var_a(c), var_b(c), 0.08 * var_a(c));
  }
}

TEST(Augment, OffIsEmpty) {
  MixupConfig cfg;
  cfg.mode = MixupMode::kOff;
  Matrix x = Matrix::Random(4, 2);
  auto keys = trial_keys({{1, 4}});
  Rng rng(1);
  EXPECT_EQ(augment(x, Matrix(), keys, cfg, rng).features.rows(), 0);
}

TEST(SampleBeta, MeanAndRange) {
  Rng rng(8);
  double sum = 0;
  for (int i = 0; i < 20000; ++i) {
    const double w = sample_beta(0.5, rng);
    ASSERT_GE(w, 0.0);
    ASSERT_LE(w, 1.0);
    sum += w;
  }
  EXPECT_NEAR(sum / 20000, 0.5, 0.01);
}
