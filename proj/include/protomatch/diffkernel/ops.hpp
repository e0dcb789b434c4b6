#pragma once

#include "protomatch/diffkernel/tape.hpp"
#include "protomatch/types.hpp"

namespace protomatch {

// ---------------------------------------------------------------------------
// Plain evaluation. These are the reference forms; the tape nodes below call
// them for their forward values.
// ---------------------------------------------------------------------------

/// Row-wise softmax, stabilized by subtracting each row's maximum.
template <typename Derived>
MatrixX<typename Derived::Scalar> softmax_rows(const Eigen::MatrixBase<Derived>& logits) {
  using Scalar = typename Derived::Scalar;
  MatrixX<Scalar> out(logits.rows(), logits.cols());
  for (Index r = 0; r < logits.rows(); ++r) {
    const Scalar peak = logits.row(r).maxCoeff();
    out.row(r) = (logits.row(r).array() - peak).exp().matrix();
    out.row(r) /= out.row(r).sum();
  }
  return out;
}

/// logits(n, i) = features.row(n) * B * prototypes.row(i)^T
template <typename DerivedF, typename DerivedB, typename DerivedP>
MatrixX<typename DerivedF::Scalar> bilinear_logits(const Eigen::MatrixBase<DerivedF>& features,
                                                   const Eigen::MatrixBase<DerivedB>& bilinear,
                                                   const Eigen::MatrixBase<DerivedP>& prototypes) {
  if (features.cols() != bilinear.rows() || bilinear.cols() != prototypes.cols()) {
    throw Error("bilinear_logits: features " + shape_of(features) + ", B " + shape_of(bilinear) +
                ", prototypes " + shape_of(prototypes) + " do not conform");
  }
  return features * bilinear * prototypes.transpose();
}

/// Gradient reversal forward pass: identity.
template <typename Derived>
MatrixX<typename Derived::Scalar> grl_forward(const Eigen::MatrixBase<Derived>& x) {
  return x;
}

/// Gradient reversal backward pass: -lambda * upstream.
template <typename Derived>
MatrixX<typename Derived::Scalar> grl(const Eigen::MatrixBase<Derived>& upstream,
                                      typename Derived::Scalar lambda) {
  return -lambda * upstream;
}

// ---------------------------------------------------------------------------
// Tape nodes.
// ---------------------------------------------------------------------------

/// x * W + b, with b broadcast over rows.
Var affine(Tape& tape, Var x, Var weight, Var bias);
Var relu(Tape& tape, Var x);
Var softmax(Tape& tape, Var logits);
/// Inverted dropout; the keep mask is drawn from `rng` at record time.
Var dropout(Tape& tape, Var x, double rate, Rng& rng);
Var bilinear(Tape& tape, Var features, Var bilinear, Var prototypes);
Var gradient_reversal(Tape& tape, Var x, double lambda);

Var vstack(Tape& tape, Var top, Var bottom);
Var row_slice(Tape& tape, Var x, Index begin, Index count);
Var add(Tape& tape, Var a, Var b);
Var scale(Tape& tape, Var x, double factor);

}  // namespace protomatch
