#pragma once

#include "protomatch/diffkernel/ops.hpp"
#include "protomatch/diffkernel/tape.hpp"
#include "protomatch/types.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace protomatch {

/// Floor/ceiling applied to predicted similarities before any logarithm.
inline constexpr double kClip = 1e-7;

// ---------------------------------------------------------------------------
// Prototypes
// ---------------------------------------------------------------------------

template <typename Scalar>
struct PrototypeResult {
  MatrixX<Scalar> prototypes;           // c x M, row k is the class-k prototype
  MatrixX<Scalar> weights;              // c x n; prototypes = weights * features
  std::vector<int> empty_classes;       // classes with zero label mass
};

template <typename Derived>
bool is_one_hot(const Eigen::MatrixBase<Derived>& labels) {
  for (Index r = 0; r < labels.rows(); ++r) {
    int ones = 0;
    for (Index c = 0; c < labels.cols(); ++c) {
      const auto v = labels(r, c);
      if (v == 1) {
        ++ones;
      } else if (v != 0) {
        return false;
      }
    }
    if (ones != 1) return false;
  }
  return true;
}

/// Solves P = (Y^T Y + ridge I)^-1 Y^T F. With exactly one-hot labels the
/// system is diagonal and the per-class mean is used directly.
template <typename DerivedF, typename DerivedY>
PrototypeResult<typename DerivedF::Scalar> prototypes(const Eigen::MatrixBase<DerivedF>& features,
                                                      const Eigen::MatrixBase<DerivedY>& labels,
                                                      typename DerivedF::Scalar ridge) {
  using Scalar = typename DerivedF::Scalar;
  if (features.rows() < 1) throw Error("prototypes: empty batch");
  if (labels.rows() != features.rows()) {
    throw Error("prototypes: labels " + shape_of(labels) + " vs features " + shape_of(features));
  }
  if (ridge < 0) throw Error("prototypes: ridge must be nonnegative");
  const Index c = labels.cols();
  const RowVectorX<Scalar> mass = labels.colwise().sum();

  PrototypeResult<Scalar> out;
  for (Index k = 0; k < c; ++k) {
    if (mass(k) <= 0) {
      if (ridge == 0) throw Error("empty class in prototype batch (class " + std::to_string(k) + ")");
      out.empty_classes.push_back(static_cast<int>(k));
    }
  }

  if (is_one_hot(labels)) {
    out.weights = labels.transpose();
    for (Index k = 0; k < c; ++k) {
      if (mass(k) > 0) out.weights.row(k) /= mass(k);
    }
  } else {
    MatrixX<Scalar> gram = labels.transpose() * labels;
    gram.diagonal().array() += ridge;
    out.weights = gram.ldlt().solve(MatrixX<Scalar>(labels.transpose()));
  }
  out.prototypes = out.weights * features;
  return out;
}

// ---------------------------------------------------------------------------
// Classification and pseudo-labels
// ---------------------------------------------------------------------------

template <typename DerivedF, typename DerivedB, typename DerivedP>
MatrixX<typename DerivedF::Scalar> classify(const Eigen::MatrixBase<DerivedF>& features,
                                            const Eigen::MatrixBase<DerivedB>& bilinear,
                                            const Eigen::MatrixBase<DerivedP>& prototypes) {
  return softmax_rows(bilinear_logits(features, bilinear, prototypes));
}

/// Temperature sharpening p_c^(1/eta) / sum_j p_j^(1/eta).
template <typename Derived>
MatrixX<typename Derived::Scalar> sharpen(const Eigen::MatrixBase<Derived>& probs, typename Derived::Scalar eta) {
  using Scalar = typename Derived::Scalar;
  if (!(eta > 0) || eta > 1) throw Error("sharpen: eta must lie in (0, 1]");
  MatrixX<Scalar> out = probs.array().pow(Scalar(1) / eta).matrix();
  for (Index r = 0; r < out.rows(); ++r) {
    const Scalar total = out.row(r).sum();
    if (!(total > 0)) throw Error("sharpen: row " + std::to_string(r) + " has no probability mass");
    out.row(r) /= total;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Similarity matrices
// ---------------------------------------------------------------------------

/// Cosine Gram of the probability rows, floored at kClip.
template <typename Derived>
MatrixX<typename Derived::Scalar> similarity_pred(const Eigen::MatrixBase<Derived>& probs) {
  using Scalar = typename Derived::Scalar;
  const VectorX<Scalar> norms = probs.rowwise().norm();
  for (Index r = 0; r < norms.size(); ++r) {
    if (!(norms(r) > 0)) throw Error("similarity_pred: row " + std::to_string(r) + " has zero norm");
  }
  const MatrixX<Scalar> unit = norms.cwiseInverse().asDiagonal() * probs;
  return (unit * unit.transpose()).cwiseMax(Scalar(kClip));
}

/// 1 - cosine, computed as ||u_i - u_j||^2 / 2 over unit rows so it keeps
/// full relative precision when two rows are nearly parallel. Not floored.
template <typename Derived>
MatrixX<typename Derived::Scalar> similarity_complement(const Eigen::MatrixBase<Derived>& probs) {
  using Scalar = typename Derived::Scalar;
  const VectorX<Scalar> norms = probs.rowwise().norm();
  for (Index r = 0; r < norms.size(); ++r) {
    if (!(norms(r) > 0)) throw Error("similarity_complement: row " + std::to_string(r) + " has zero norm");
  }
  const MatrixX<Scalar> unit = norms.cwiseInverse().asDiagonal() * probs;
  MatrixX<Scalar> out(probs.rows(), probs.rows());
  for (Index i = 0; i < unit.rows(); ++i) {
    for (Index j = 0; j < unit.rows(); ++j) out(i, j) = (unit.row(i) - unit.row(j)).squaredNorm() / 2;
  }
  return out;
}

/// R = Y Y^T; for one-hot rows, 1 exactly when two rows share a class.
template <typename Derived>
MatrixX<typename Derived::Scalar> similarity_truth_source(const Eigen::MatrixBase<Derived>& labels) {
  return labels * labels.transpose();
}

template <typename Scalar>
struct TargetTruth {
  MatrixX<Scalar> truth;  // R^t
  MatrixX<Scalar> mask;   // 1 where the pair is confidently similar or dissimilar
};

/// Thresholds raw probability dot products: >= high -> (1, 1), < low -> (0, 1),
/// otherwise the pair is excluded (mask 0, truth 0).
template <typename Derived>
TargetTruth<typename Derived::Scalar> target_truth_mask(const Eigen::MatrixBase<Derived>& probs,
                                                        typename Derived::Scalar high,
                                                        typename Derived::Scalar low) {
  using Scalar = typename Derived::Scalar;
  if (low > high) throw Error("target_truth_mask: low threshold above high threshold");
  const MatrixX<Scalar> dots = probs * probs.transpose();
  TargetTruth<Scalar> out;
  out.truth = (dots.array() >= high).template cast<Scalar>().matrix();
  out.mask = ((dots.array() >= high) || (dots.array() < low)).template cast<Scalar>().matrix();
  return out;
}

// ---------------------------------------------------------------------------
// Losses
// ---------------------------------------------------------------------------

template <typename DerivedP, typename DerivedR>
typename DerivedP::Scalar bce_sum(const Eigen::MatrixBase<DerivedP>& pred, const Eigen::MatrixBase<DerivedR>& truth,
                                  const MatrixX<typename DerivedP::Scalar>* mask) {
  using Scalar = typename DerivedP::Scalar;
  Scalar total = 0;
  for (Index i = 0; i < pred.rows(); ++i) {
    for (Index j = 0; j < pred.cols(); ++j) {
      if (mask != nullptr && (*mask)(i, j) == 0) continue;
      const Scalar p = std::clamp(pred(i, j), Scalar(kClip), Scalar(1 - kClip));
      const Scalar r = truth(i, j);
      total -= r * std::log(p) + (1 - r) * std::log(1 - p);
    }
  }
  return total;
}

/// As above, with 1 - pred supplied separately. An entry whose pred or
/// complement falls below kClip is pinned to the nearer clamp bound.
template <typename DerivedP, typename DerivedQ, typename DerivedR>
typename DerivedP::Scalar bce_sum(const Eigen::MatrixBase<DerivedP>& pred, const Eigen::MatrixBase<DerivedQ>& complement,
                                  const Eigen::MatrixBase<DerivedR>& truth,
                                  const MatrixX<typename DerivedP::Scalar>* mask) {
  using Scalar = typename DerivedP::Scalar;
  Scalar total = 0;
  for (Index i = 0; i < pred.rows(); ++i) {
    for (Index j = 0; j < pred.cols(); ++j) {
      if (mask != nullptr && (*mask)(i, j) == 0) continue;
      Scalar p = pred(i, j);
      Scalar q = complement(i, j);
      if (p <= Scalar(kClip)) {
        p = Scalar(kClip);
        q = Scalar(1 - kClip);
      } else if (q <= Scalar(kClip)) {
        p = Scalar(1 - kClip);
        q = Scalar(kClip);
      }
      const Scalar r = truth(i, j);
      total -= r * std::log(p) + (1 - r) * std::log(q);
    }
  }
  return total;
}

/// Mean binary cross-entropy over all n^2 pairs.
template <typename DerivedP, typename DerivedR>
typename DerivedP::Scalar pair_loss_source(const Eigen::MatrixBase<DerivedP>& pred,
                                           const Eigen::MatrixBase<DerivedR>& truth) {
  if (pred.rows() != truth.rows() || pred.cols() != truth.cols()) {
    throw Error("pair_loss_source: " + shape_of(pred) + " vs " + shape_of(truth));
  }
  return bce_sum(pred, truth, nullptr) / static_cast<typename DerivedP::Scalar>(pred.size());
}

template <typename Scalar>
struct MaskedLoss {
  Scalar value = 0;
  bool no_valid_pairs = false;
};

/// Masked mean BCE; an empty mask yields 0 with no_valid_pairs set.
template <typename DerivedP, typename DerivedR, typename DerivedM>
MaskedLoss<typename DerivedP::Scalar> pair_loss_target(const Eigen::MatrixBase<DerivedP>& pred,
                                                       const Eigen::MatrixBase<DerivedR>& truth,
                                                       const Eigen::MatrixBase<DerivedM>& mask) {
  using Scalar = typename DerivedP::Scalar;
  if (pred.rows() != truth.rows() || pred.cols() != truth.cols() || pred.rows() != mask.rows() ||
      pred.cols() != mask.cols()) {
    throw Error("pair_loss_target: shapes " + shape_of(pred) + ", " + shape_of(truth) + ", " + shape_of(mask));
  }
  const Scalar count = mask.sum();
  if (count == 0) return {Scalar(0), true};
  const MatrixX<Scalar> m = mask;
  return {bce_sum(pred, truth, &m) / count, false};
}

// ---------------------------------------------------------------------------
// Schedules and the combined objective
// ---------------------------------------------------------------------------

struct ThresholdState {
  double high0 = 0.9;
  double low0 = 0.5;
  double high = 0.9;
  double low = 0.5;
  int max_epoch = 100;
};

struct Thresholds {
  double high = 0.0;
  double low = 0.0;
};

/// The band [low, high] narrows toward its midpoint as (2/max_epoch)^t -> 0.
Thresholds threshold_schedule(int epoch, const ThresholdState& state);

struct LossWeights {
  double delta = 2.0;   // target-loss ramp factor
  double beta = 0.01;   // orthogonality penalty weight
  double eta = 0.9;     // sharpen temperature

  void validate() const;
};

/// gamma = delta * epoch / max_epoch.
double target_weight(const LossWeights& w, int epoch, int max_epoch);

/// ||P P^T - I_c||_F.
template <typename Derived>
typename Derived::Scalar orthogonality_penalty(const Eigen::MatrixBase<Derived>& prototypes) {
  using Scalar = typename Derived::Scalar;
  const Index c = prototypes.rows();
  return (prototypes * prototypes.transpose() - MatrixX<Scalar>::Identity(c, c)).norm();
}

/// L_s + gamma * L_t + beta * ||P P^T - I||_F.
template <typename Derived>
typename Derived::Scalar combined_pair_loss(typename Derived::Scalar source_loss, typename Derived::Scalar target_loss,
                                            const Eigen::MatrixBase<Derived>& prototypes, const LossWeights& w,
                                            int epoch, int max_epoch) {
  return source_loss + target_weight(w, epoch, max_epoch) * target_loss +
         w.beta * orthogonality_penalty(prototypes);
}

// ---------------------------------------------------------------------------
// Tape nodes. Forward values come from the plain functions above.
// ---------------------------------------------------------------------------

namespace tape_ops {

/// Labels are constants: no gradient reaches them.
Var prototypes(Tape& tape, Var features, const Matrix& labels, double ridge, std::vector<int>* empty_classes = nullptr);
Var classify(Tape& tape, Var features, Var bilinear, Var prototypes);
Var similarity_pred(Tape& tape, Var probs);
/// 1 - cosine of the probability rows (see the plain similarity_complement).
Var similarity_complement(Tape& tape, Var probs);

struct SimilarityVars {
  Var pred;
  Var complement;
};
SimilarityVars similarity(Tape& tape, Var probs);

Var pair_loss_source(Tape& tape, const SimilarityVars& sim, const Matrix& truth);
Var pair_loss_target(Tape& tape, const SimilarityVars& sim, const Matrix& truth, const Matrix& mask,
                     bool* no_valid_pairs = nullptr);
Var orthogonality_penalty(Tape& tape, Var prototypes);
Var combined_pair_loss(Tape& tape, Var source_loss, Var target_loss, Var prototypes, const LossWeights& w,
                       int epoch, int max_epoch);

}  // namespace tape_ops

}  // namespace protomatch
