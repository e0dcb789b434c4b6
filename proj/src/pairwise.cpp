#include "protomatch/pairwise.hpp"

namespace protomatch {

Thresholds threshold_schedule(int epoch, const ThresholdState& state) {
  if (state.max_epoch < 3) throw Error("threshold_schedule: max_epoch must be at least 3");
  if (epoch < 0) throw Error("threshold_schedule: epoch must be nonnegative");
  if (state.low0 > state.high0) throw Error("threshold_schedule: initial low threshold above high threshold");
  const double half_gap = (state.high0 - state.low0) / 2.0;
  const double progress = 1.0 - std::pow(2.0 / state.max_epoch, epoch);
  return {state.high0 - half_gap * progress, state.low0 + half_gap * progress};
}

void LossWeights::validate() const {
  if (delta < 0.0 || beta < 0.0) throw Error("loss weights: delta and beta must be nonnegative");
  if (!(eta > 0.0) || eta > 1.0) throw Error("loss weights: eta must lie in (0, 1]");
}

double target_weight(const LossWeights& w, int epoch, int max_epoch) {
  if (max_epoch <= 0) throw Error("target_weight: max_epoch must be positive");
  return w.delta * static_cast<double>(epoch) / static_cast<double>(max_epoch);
}

namespace tape_ops {

Var prototypes(Tape& tape, Var features, const Matrix& labels, double ridge, std::vector<int>* empty_classes) {
  auto result = protomatch::prototypes(tape.value(features), labels, ridge);
  if (empty_classes != nullptr) *empty_classes = result.empty_classes;
  return tape.record(std::move(result.prototypes), {features},
                     [features, k = std::move(result.weights)](Tape& t, const Matrix& g) {
                       t.accumulate(features, k.transpose() * g);
                     });
}

Var classify(Tape& tape, Var features, Var bilinear, Var prototypes) {
  return softmax(tape, protomatch::bilinear(tape, features, bilinear, prototypes));
}

namespace {

// Gradient w.r.t. the probability rows of a function of the cosine Gram,
// given its gradient `g` w.r.t. the Gram.
Matrix cosine_backward(const Matrix& unit, const Vector& norms, const Matrix& g) {
  const Matrix d_unit = (g + g.transpose()) * unit;
  const Vector radial = (d_unit.array() * unit.array()).rowwise().sum();
  Matrix d_probs = d_unit - radial.asDiagonal() * unit;
  return norms.cwiseInverse().asDiagonal() * d_probs;
}

}  // namespace

Var similarity_pred(Tape& tape, Var probs) {
  const Matrix& p = tape.value(probs);
  Matrix value = protomatch::similarity_pred(p);
  const Vector norms = p.rowwise().norm();
  Matrix unit = norms.cwiseInverse().asDiagonal() * p;
  // Entries sitting on the floor carry no gradient.
  Matrix active = (value.array() > kClip).cast<double>().matrix();
  return tape.record(std::move(value), {probs},
                     [probs, unit = std::move(unit), norms, active = std::move(active)](Tape& t, const Matrix& g) {
                       t.accumulate(probs, cosine_backward(unit, norms, g.cwiseProduct(active)));
                     });
}

Var similarity_complement(Tape& tape, Var probs) {
  const Matrix& p = tape.value(probs);
  Matrix value = protomatch::similarity_complement(p);
  const Vector norms = p.rowwise().norm();
  Matrix unit = norms.cwiseInverse().asDiagonal() * p;
  return tape.record(std::move(value), {probs}, [probs, unit = std::move(unit), norms](Tape& t, const Matrix& g) {
    t.accumulate(probs, cosine_backward(unit, norms, -g));
  });
}

SimilarityVars similarity(Tape& tape, Var probs) {
  return {similarity_pred(tape, probs), similarity_complement(tape, probs)};
}

namespace {

// Gradients of the summed, optionally masked BCE w.r.t. pred and complement.
// Clamped entries contribute nothing.
std::pair<Matrix, Matrix> bce_grad(const Matrix& pred, const Matrix& complement, const Matrix& truth,
                                   const Matrix* mask) {
  Matrix gp = Matrix::Zero(pred.rows(), pred.cols());
  Matrix gq = Matrix::Zero(pred.rows(), pred.cols());
  for (Index i = 0; i < pred.rows(); ++i) {
    for (Index j = 0; j < pred.cols(); ++j) {
      if (mask != nullptr && (*mask)(i, j) == 0.0) continue;
      const double p = pred(i, j);
      const double q = complement(i, j);
      if (p <= kClip || q <= kClip) continue;
      const double r = truth(i, j);
      gp(i, j) = -r / p;
      gq(i, j) = -(1.0 - r) / q;
    }
  }
  return {std::move(gp), std::move(gq)};
}

void check_pair_shapes(const char* what, const Matrix& pred, const Matrix& complement, const Matrix& truth) {
  if (pred.rows() != truth.rows() || pred.cols() != truth.cols() || complement.rows() != pred.rows() ||
      complement.cols() != pred.cols()) {
    throw Error(std::string(what) + ": " + shape_of(pred) + " vs " + shape_of(truth));
  }
}

}  // namespace

Var pair_loss_source(Tape& tape, const SimilarityVars& sim, const Matrix& truth) {
  const Matrix& p = tape.value(sim.pred);
  const Matrix& q = tape.value(sim.complement);
  check_pair_shapes("pair_loss_source", p, q, truth);
  const double value = bce_sum(p, q, truth, nullptr) / static_cast<double>(p.size());
  return tape.record(Matrix::Constant(1, 1, value), {sim.pred, sim.complement}, [sim, truth](Tape& t, const Matrix& g) {
    const Matrix& p = t.value(sim.pred);
    auto [gp, gq] = bce_grad(p, t.value(sim.complement), truth, nullptr);
    const double s = g(0, 0) / static_cast<double>(p.size());
    t.accumulate(sim.pred, s * gp);
    t.accumulate(sim.complement, s * gq);
  });
}

Var pair_loss_target(Tape& tape, const SimilarityVars& sim, const Matrix& truth, const Matrix& mask,
                     bool* no_valid_pairs) {
  const Matrix& p = tape.value(sim.pred);
  const Matrix& q = tape.value(sim.complement);
  check_pair_shapes("pair_loss_target", p, q, truth);
  if (mask.rows() != p.rows() || mask.cols() != p.cols()) {
    throw Error("pair_loss_target: mask " + shape_of(mask) + " vs " + shape_of(p));
  }
  const double count = mask.sum();
  if (no_valid_pairs != nullptr) *no_valid_pairs = count == 0.0;
  const double value = count == 0.0 ? 0.0 : bce_sum(p, q, truth, &mask) / count;
  return tape.record(Matrix::Constant(1, 1, value), {sim.pred, sim.complement},
                     [sim, truth, mask, count](Tape& t, const Matrix& g) {
                       if (count == 0.0) return;
                       auto [gp, gq] = bce_grad(t.value(sim.pred), t.value(sim.complement), truth, &mask);
                       t.accumulate(sim.pred, (g(0, 0) / count) * gp);
                       t.accumulate(sim.complement, (g(0, 0) / count) * gq);
                     });
}

Var orthogonality_penalty(Tape& tape, Var prototypes) {
  const Matrix& p = tape.value(prototypes);
  Matrix residual = p * p.transpose() - Matrix::Identity(p.rows(), p.rows());
  const double norm = residual.norm();
  return tape.record(Matrix::Constant(1, 1, norm), {prototypes},
                     [prototypes, residual = std::move(residual), norm](Tape& t, const Matrix& g) {
                       if (norm == 0.0) return;
                       t.accumulate(prototypes, (2.0 * g(0, 0) / norm) * residual * t.value(prototypes));
                     });
}

Var combined_pair_loss(Tape& tape, Var source_loss, Var target_loss, Var prototypes, const LossWeights& w,
                       int epoch, int max_epoch) {
  const double gamma = target_weight(w, epoch, max_epoch);
  Var total = add(tape, source_loss, scale(tape, target_loss, gamma));
  return add(tape, total, scale(tape, orthogonality_penalty(tape, prototypes), w.beta));
}

}  // namespace tape_ops

}  // namespace protomatch
