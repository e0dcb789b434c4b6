#include "protomatch/adaptation.hpp"
#include "protomatch/diffkernel.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

using namespace protomatch;

namespace {

Matrix gaussian(Index rows, Index cols, double mean, Rng& rng) {
  std::normal_distribution<double> n(mean, 1.0);
  Matrix m(rows, cols);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
  return m;
}

std::vector<int> cycle_ids(int n, int k) {
  std::vector<int> ids(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) ids[static_cast<std::size_t>(i)] = i % k;
  return ids;
}

}  // namespace

TEST(DomainDiscLoss, UniformIsLog3) {
  for (int n : {3, 7, 20}) {
    Matrix labels = domain_labels(cycle_ids(n, 3), 3);
    EXPECT_NEAR(domain_disc_loss(Matrix::Constant(n, 3, 1.0 / 3.0), labels), std::log(3.0), 1e-12);
  }
}

TEST(DomainDiscLoss, PerfectIsZero) {
  Matrix labels = domain_labels(cycle_ids(9, 3), 3);
  EXPECT_NEAR(domain_disc_loss(labels, labels), 0.0, 1e-15);
}

TEST(DomainDiscLoss, PermutationInvariant) {
  Rng rng(1);
  std::vector<int> ids = cycle_ids(12, 3);
  Matrix probs = gaussian(12, 3, 0, rng).array().exp();
  for (Index r = 0; r < 12; ++r) probs.row(r) /= probs.row(r).sum();
  std::vector<int> order(12);
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  Matrix shuffled(12, 3);
  std::vector<int> shuffled_ids;
  for (int i = 0; i < 12; ++i) {
    shuffled.row(i) = probs.row(order[static_cast<std::size_t>(i)]);
    shuffled_ids.push_back(ids[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])]);
  }
  EXPECT_NEAR(domain_disc_loss(probs, domain_labels(ids, 3)),
              domain_disc_loss(shuffled, domain_labels(shuffled_ids, 3)), 1e-14);
}

TEST(DomainDiscLoss, MissingDomainFails) {
  Matrix labels = domain_labels(std::vector<int>{0, 0, 1, 1}, 3);
  try {
    domain_disc_loss(Matrix::Constant(4, 3, 1.0 / 3.0), labels);
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("all three domains"), std::string::npos);
  }
}

TEST(DomainDiscLoss, TapeGradients) {
  MlpArch arch = discriminator_arch(4, 5, 3, 0.0);
  ParamSet params;
  Rng rng(2);
  init_mlp(params, arch, rng);
  for (const auto& name : params.names()) {
    if (name.find(".b") != std::string::npos) params.value(name) = gaussian(1, params.value(name).cols(), 0, rng) * 0.1;
  }
  params.add("x", gaussian(9, 4, 0, rng));
  Matrix labels = domain_labels(cycle_ids(9, 3), 3);
  const double lambda = 0.6;
  LossFn loss = [&](ParamSet& p) {
    Tape tape;
    Var l = tape_ops::domain_disc_loss(tape, tape.parameter(p, "x"), labels, p, arch, nullptr, lambda);
    tape.backward(l);
    return tape.value(l)(0, 0);
  };
  GradCheckReport d = finite_diff_check(loss, params, 1e-5, [](std::string_view n) { return n != "x"; });
  EXPECT_LE(d.max_rel_error, 1e-5);

  // Through the reversal the features see -lambda times the true gradient.
  ParamSet copy = params;
  copy.zero_grad();
  loss(copy);
  Matrix analytic = copy.grad("x");
  LossFn plain = [&](ParamSet& p) {
    Tape tape;
    Var l = tape_ops::domain_disc_loss(tape, tape.parameter(p, "x"), labels, p, arch, nullptr, lambda);
    tape.backward(l);
    p.grad("x") *= -1.0 / lambda;
    return tape.value(l)(0, 0);
  };
  GradCheckReport x = finite_diff_check(plain, params, 1e-5, [](std::string_view n) { return n == "x"; });
  EXPECT_LE(x.max_rel_error, 1e-5);
  EXPECT_GT(analytic.norm(), 0.0);
}

TEST(DomainDiscLoss, ZeroLambdaBlocksFeatures) {
  MlpArch arch = discriminator_arch(3, 4, 3, 0.0);
  ParamSet params;
  Rng rng(3);
  init_mlp(params, arch, rng);
  Tape tape;
  Var x = tape.input(gaussian(6, 3, 0, rng));
  Var l = tape_ops::domain_disc_loss(tape, x, domain_labels(cycle_ids(6, 3), 3), params, arch, nullptr, 0.0);
  tape.backward(l);
  EXPECT_TRUE(tape.grad(x).isZero(0.0));
  EXPECT_GT(params.grad(arch.weight_name(0)).norm(), 0.0);
}

TEST(LambdaSchedule, Values) {
  EXPECT_EQ(lambda_schedule(0, 100), 0.0);
  EXPECT_NEAR(lambda_schedule(100, 100), 2.0 / (1.0 + std::exp(-10.0)) - 1.0, 1e-15);
  EXPECT_NEAR(lambda_schedule(100, 100), 0.999909, 1e-6);
  for (int e = 1; e <= 100; ++e) EXPECT_GT(lambda_schedule(e, 100), lambda_schedule(e - 1, 100));
}

TEST(Mmd, IdenticalIsZero) {
  Rng rng(4);
  Matrix a = gaussian(30, 5, 0, rng);
  EXPECT_NEAR(mmd(a, a), 0.0, 1e-9);
}

TEST(Mmd, FarClusters) {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    Rng rng(seed);
    const double sigma = 1.0;
    Matrix a = gaussian(40, 3, 0, rng) * 0.1;
    Matrix b = gaussian(40, 3, 0, rng) * 0.1;
    b.col(0).array() += 10 * sigma;
    EXPECT_GT(mmd(a, b, std::optional<double>(sigma)), 0.5);
    EXPECT_GT(mmd(a, b), 0.5);
  }
}

TEST(Mmd, SymmetricAndDegenerate) {
  Rng rng(5);
  Matrix a = gaussian(20, 4, 0, rng), b = gaussian(25, 4, 0.5, rng);
  EXPECT_NEAR(mmd(a, b), mmd(b, a), 1e-14);
  Matrix same = Matrix::Ones(5, 4);
  EXPECT_EQ(mmd(same, same), 0.0);
  EXPECT_THROW(mmd(Matrix(Matrix::Ones(1, 4)), same), Error);
}

TEST(ProjectionWeights, Modes) {
  auto [s, u] = projection_weights(PiMode::kProportion, 30, 10, 0.2, 0.1);
  EXPECT_DOUBLE_EQ(s, 0.75);
  EXPECT_DOUBLE_EQ(s + u, 1.0);
  auto [gs, gu] = projection_weights(PiMode::kGrid, 30, 10, 0.2, 0.1);
  EXPECT_DOUBLE_EQ(gs, 0.0);
  EXPECT_DOUBLE_EQ(gu, 1.0);
  auto [ns, nu] = projection_weights(PiMode::kProportion, 30, 0, 0.2, 0.0);
  EXPECT_EQ(ns, 1.0);
  EXPECT_EQ(nu, 0.0);
}

TEST(BoundReport, Fields) {
  DomainPartition p;
  Rng rng(6);
  p.S.features = gaussian(40, 3, 0, rng);
  p.U.features = gaussian(30, 3, 0.5, rng);
  p.T.features = gaussian(20, 3, 2.0, rng);
  for (PiMode mode : {PiMode::kProportion, PiMode::kGrid}) {
    BoundOptions opt;
    opt.pi_mode = mode;
    opt.max_samples = 25;
    BoundReport r = bound_report([](const Matrix& x) { return x; }, p, 3, 0.4, 0.6, opt);
    EXPECT_EQ(r.epoch, 3);
    EXPECT_EQ(r.pi_S + r.pi_U, 1.0);
    EXPECT_GE(r.mmd_SU, 0.0);
    EXPECT_GE(r.mmd_UT, 0.0);
    EXPECT_GT(r.mmd_ST, r.mmd_SU);
    EXPECT_NEAR(r.weighted_divergence, r.pi_U * (r.mmd_SU + r.mmd_UT) + r.pi_S * r.mmd_ST, 1e-15);
    EXPECT_EQ(r.source_pair_loss, 0.4);
    EXPECT_EQ(r.target_accuracy, 0.6);
  }
}
