#pragma once

#include "protomatch/datamodel.hpp"
#include "protomatch/diffkernel/mlp.hpp"
#include "protomatch/diffkernel/tape.hpp"
#include "protomatch/types.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <optional>
#include <span>
#include <vector>

namespace protomatch {

enum class Domain : int { kLabeledSource = 0, kUnlabeledSource = 1, kTarget = 2 };

/// One-hot rows over `n_domains` classes.
Matrix domain_labels(std::span<const int> domain_ids, int n_domains);

/// Mean categorical cross-entropy of discriminator probabilities against
/// one-hot domain labels. Every domain column must be represented.
double domain_disc_loss(const Matrix& probs, const Matrix& domain_onehot);

/// 2 / (1 + exp(-10 p)) - 1 with p = epoch / max_epoch.
double lambda_schedule(int epoch, int max_epoch);

namespace tape_ops {

Var cross_entropy(Tape& tape, Var probs, const Matrix& onehot);

/// features -> gradient reversal(lambda) -> discriminator -> mean cross-entropy.
/// Minimizing the result moves the discriminator toward separating domains
/// while the features upstream of the reversal receive -lambda times that push.
Var domain_disc_loss(Tape& tape, Var features, const Matrix& domain_onehot, ParamSet& params,
                     const MlpArch& arch, Rng* rng, double lambda);

}  // namespace tape_ops

// ---------------------------------------------------------------------------
// Maximum mean discrepancy
// ---------------------------------------------------------------------------

template <typename DerivedA, typename DerivedB>
MatrixX<typename DerivedA::Scalar> squared_distances(const Eigen::MatrixBase<DerivedA>& a,
                                                     const Eigen::MatrixBase<DerivedB>& b) {
  using Scalar = typename DerivedA::Scalar;
  const VectorX<Scalar> na = a.rowwise().squaredNorm();
  const RowVectorX<Scalar> nb = b.rowwise().squaredNorm().transpose();
  MatrixX<Scalar> d = -2 * (a * b.transpose());
  d.colwise() += na;
  d.rowwise() += nb;
  return d.cwiseMax(Scalar(0));
}

/// Median of the pairwise Euclidean distances over the rows of A and B pooled.
template <typename DerivedA, typename DerivedB>
typename DerivedA::Scalar median_bandwidth(const Eigen::MatrixBase<DerivedA>& a, const Eigen::MatrixBase<DerivedB>& b) {
  using Scalar = typename DerivedA::Scalar;
  MatrixX<Scalar> pooled(a.rows() + b.rows(), a.cols());
  pooled << a, b;
  const MatrixX<Scalar> d2 = squared_distances(pooled, pooled);
  std::vector<Scalar> upper;
  upper.reserve(static_cast<std::size_t>(pooled.rows() * (pooled.rows() - 1) / 2));
  for (Index i = 0; i < pooled.rows(); ++i) {
    for (Index j = i + 1; j < pooled.rows(); ++j) upper.push_back(d2(i, j));
  }
  if (upper.empty()) return Scalar(0);
  auto mid = upper.begin() + static_cast<std::ptrdiff_t>(upper.size() / 2);
  std::nth_element(upper.begin(), mid, upper.end());
  return std::sqrt(*mid);
}

/// Unbiased MMD^2 with a Gaussian kernel exp(-|x-y|^2 / (2 sigma^2)), floored
/// at 0. A missing bandwidth selects the median heuristic; a degenerate
/// bandwidth (all points identical) gives 0.
template <typename DerivedA, typename DerivedB>
typename DerivedA::Scalar mmd(const Eigen::MatrixBase<DerivedA>& a, const Eigen::MatrixBase<DerivedB>& b,
                              std::optional<typename DerivedA::Scalar> bandwidth = std::nullopt) {
  using Scalar = typename DerivedA::Scalar;
  if (a.rows() < 2 || b.rows() < 2) throw Error("mmd: each sample needs at least two rows");
  if (a.cols() != b.cols()) throw Error("mmd: " + shape_of(a) + " vs " + shape_of(b));
  const Scalar sigma = bandwidth ? *bandwidth : median_bandwidth(a, b);
  if (!(sigma > 0)) return Scalar(0);
  const Scalar scale = Scalar(-1) / (2 * sigma * sigma);

  auto mean_kernel = [scale](const auto& x, const auto& y, bool skip_diagonal) {
    const MatrixX<Scalar> k = (squared_distances(x, y).array() * scale).exp().matrix();
    Scalar total = k.sum();
    Scalar count = static_cast<Scalar>(k.size());
    if (skip_diagonal) {
      total -= k.trace();
      count -= static_cast<Scalar>(k.rows());
    }
    return total / count;
  };
  const Scalar value = mean_kernel(a, a, true) + mean_kernel(b, b, true) - 2 * mean_kernel(a, b, false);
  return std::max(value, Scalar(0));
}

// ---------------------------------------------------------------------------
// Bound components
// ---------------------------------------------------------------------------

enum class PiMode { kProportion, kGrid };

struct BoundReport {
  int epoch = 0;
  double source_pair_loss = 0.0;
  double mmd_SU = 0.0;
  double mmd_UT = 0.0;
  double mmd_ST = 0.0;
  double pi_S = 1.0;
  double pi_U = 0.0;
  double weighted_divergence = 0.0;
  double target_accuracy = 0.0;
};

struct BoundOptions {
  PiMode pi_mode = PiMode::kProportion;
  Index max_samples = 512;  // per domain
  std::uint64_t seed = 0;
};

/// Maps raw inputs to features in eval mode.
using FeatureFn = std::function<Matrix(const Matrix&)>;

/// Convex-hull weights for the source mixture: sample proportions, or a
/// 0.05-step grid minimizing pi_S * mmd_ST + pi_U * mmd_UT.
std::pair<double, double> projection_weights(PiMode mode, Index n_s, Index n_u, double mmd_st, double mmd_ut);

/// Fills the observable terms of the target-error bound. The labeling-function
/// discrepancy terms are not estimable without target labels and are left out.
BoundReport bound_report(const FeatureFn& features, const DomainPartition& partition, int epoch,
                         double source_pair_loss, double target_accuracy, const BoundOptions& options);

}  // namespace protomatch
