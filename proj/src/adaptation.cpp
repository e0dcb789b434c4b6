#include "protomatch/adaptation.hpp"

#include "protomatch/diffkernel/ops.hpp"

#include <limits>

namespace protomatch {

Matrix domain_labels(std::span<const int> domain_ids, int n_domains) {
  Matrix y = Matrix::Zero(static_cast<Index>(domain_ids.size()), n_domains);
  for (std::size_t i = 0; i < domain_ids.size(); ++i) {
    if (domain_ids[i] < 0 || domain_ids[i] >= n_domains) throw Error("domain_labels: domain id out of range");
    y(static_cast<Index>(i), domain_ids[i]) = 1.0;
  }
  return y;
}

namespace {

constexpr double kProbFloor = 1e-300;

void check_domains(const Matrix& probs, const Matrix& onehot) {
  if (probs.rows() != onehot.rows() || probs.cols() != onehot.cols()) {
    throw Error("domain_disc_loss: predictions " + shape_of(probs) + " vs labels " + shape_of(onehot));
  }
  if (probs.rows() == 0) throw Error("domain_disc_loss: empty batch");
  const RowVector counts = onehot.colwise().sum();
  if ((counts.array() <= 0.0).any()) {
    throw Error("discriminator batch must contain all " +
                std::string(onehot.cols() == 3 ? "three" : std::to_string(onehot.cols())) + " domains");
  }
}

}  // namespace

double domain_disc_loss(const Matrix& probs, const Matrix& domain_onehot) {
  check_domains(probs, domain_onehot);
  const Matrix logs = probs.cwiseMax(kProbFloor).array().log().matrix();
  return -(domain_onehot.cwiseProduct(logs)).sum() / static_cast<double>(probs.rows());
}

double lambda_schedule(int epoch, int max_epoch) {
  if (max_epoch <= 0) throw Error("lambda_schedule: max_epoch must be positive");
  const double p = static_cast<double>(epoch) / static_cast<double>(max_epoch);
  return 2.0 / (1.0 + std::exp(-10.0 * p)) - 1.0;
}

namespace tape_ops {

Var cross_entropy(Tape& tape, Var probs, const Matrix& onehot) {
  const double value = protomatch::domain_disc_loss(tape.value(probs), onehot);
  return tape.record(Matrix::Constant(1, 1, value), {probs}, [probs, onehot](Tape& t, const Matrix& g) {
    const Matrix& q = t.value(probs);
    const double n = static_cast<double>(q.rows());
    Matrix d = (-(g(0, 0) / n)) * onehot.cwiseQuotient(q.cwiseMax(kProbFloor));
    t.accumulate(probs, d);
  });
}

Var domain_disc_loss(Tape& tape, Var features, const Matrix& domain_onehot, ParamSet& params, const MlpArch& arch,
                     Rng* rng, double lambda) {
  if (arch.activations.back() != Activation::kSoftmax) {
    throw Error("domain discriminator must end in a softmax layer");
  }
  if (arch.output_width() != domain_onehot.cols()) {
    throw Error("domain discriminator has " + std::to_string(arch.output_width()) + " outputs for " +
                std::to_string(domain_onehot.cols()) + " domains");
  }
  Var reversed = gradient_reversal(tape, features, lambda);
  Var probs = forward_mlp(tape, reversed, params, arch, rng);
  return cross_entropy(tape, probs, domain_onehot);
}

}  // namespace tape_ops

std::pair<double, double> projection_weights(PiMode mode, Index n_s, Index n_u, double mmd_st, double mmd_ut) {
  if (n_u == 0) return {1.0, 0.0};
  if (mode == PiMode::kProportion) {
    const double pi_s = static_cast<double>(n_s) / static_cast<double>(n_s + n_u);
    return {pi_s, 1.0 - pi_s};
  }
  double best = std::numeric_limits<double>::infinity();
  double best_s = 1.0;
  for (int step = 0; step <= 20; ++step) {
    const double pi_s = step / 20.0;
    const double v = pi_s * mmd_st + (1.0 - pi_s) * mmd_ut;
    if (v < best) {
      best = v;
      best_s = pi_s;
    }
  }
  return {best_s, 1.0 - best_s};
}

namespace {

Matrix subsample(const Matrix& m, Index cap, Rng& rng) {
  if (m.rows() <= cap) return m;
  std::vector<Index> idx(static_cast<std::size_t>(m.rows()));
  for (Index i = 0; i < m.rows(); ++i) idx[static_cast<std::size_t>(i)] = i;
  for (Index i = 0; i < cap; ++i) {
    std::uniform_int_distribution<Index> pick(i, m.rows() - 1);
    std::swap(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(pick(rng))]);
  }
  Matrix out(cap, m.cols());
  for (Index i = 0; i < cap; ++i) out.row(i) = m.row(idx[static_cast<std::size_t>(i)]);
  return out;
}

}  // namespace

BoundReport bound_report(const FeatureFn& features, const DomainPartition& partition, int epoch,
                         double source_pair_loss, double target_accuracy, const BoundOptions& options) {
  Rng rng(options.seed);
  const Matrix fs = features(subsample(partition.S.features, options.max_samples, rng));
  const Matrix ft = features(subsample(partition.T.features, options.max_samples, rng));
  BoundReport r;
  r.epoch = epoch;
  r.source_pair_loss = source_pair_loss;
  r.target_accuracy = target_accuracy;
  r.mmd_ST = mmd(fs, ft);
  if (partition.U.size() >= 2) {
    const Matrix fu = features(subsample(partition.U.features, options.max_samples, rng));
    r.mmd_SU = mmd(fs, fu);
    r.mmd_UT = mmd(fu, ft);
  }
  std::tie(r.pi_S, r.pi_U) =
      projection_weights(options.pi_mode, partition.S.size(), partition.U.size(), r.mmd_ST, r.mmd_UT);
  r.weighted_divergence = r.pi_U * (r.mmd_SU + r.mmd_UT) + r.pi_S * r.mmd_ST;
  return r;
}

}  // namespace protomatch
