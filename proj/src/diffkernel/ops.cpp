#include "protomatch/diffkernel/ops.hpp"

namespace protomatch {

Var affine(Tape& tape, Var x, Var weight, Var bias) {
  const Matrix& xv = tape.value(x);
  const Matrix& wv = tape.value(weight);
  const Matrix& bv = tape.value(bias);
  if (xv.cols() != wv.rows() || bv.rows() != 1 || bv.cols() != wv.cols()) {
    throw Error("affine: input " + shape_of(xv) + ", weight " + shape_of(wv) + ", bias " +
                shape_of(bv) + " do not conform");
  }
  Matrix out = xv * wv;
  out.rowwise() += bv.row(0);
  return tape.record(std::move(out), {x, weight, bias}, [x, weight, bias](Tape& t, const Matrix& g) {
    if (t.requires_grad(x)) t.accumulate(x, g * t.value(weight).transpose());
    if (t.requires_grad(weight)) t.accumulate(weight, t.value(x).transpose() * g);
    if (t.requires_grad(bias)) t.accumulate(bias, g.colwise().sum());
  });
}

Var relu(Tape& tape, Var x) {
  Matrix out = tape.value(x).cwiseMax(0.0);
  return tape.record(std::move(out), {x}, [x](Tape& t, const Matrix& g) {
    Matrix dx = (t.value(x).array() > 0.0).select(g.array(), 0.0).matrix();
    t.accumulate(x, dx);
  });
}

Var softmax(Tape& tape, Var logits) {
  Matrix probs = softmax_rows(tape.value(logits));
  Matrix saved = probs;
  return tape.record(std::move(probs), {logits}, [logits, p = std::move(saved)](Tape& t, const Matrix& g) {
    const Vector inner = (g.array() * p.array()).rowwise().sum();
    Matrix dz = p.array() * (g.colwise() - inner).array();
    t.accumulate(logits, dz);
  });
}

Var dropout(Tape& tape, Var x, double rate, Rng& rng) {
  if (rate < 0.0 || rate >= 1.0) throw Error("dropout rate must lie in [0, 1)");
  const Matrix& xv = tape.value(x);
  std::bernoulli_distribution keep(1.0 - rate);
  Matrix mask(xv.rows(), xv.cols());
  for (Index i = 0; i < mask.size(); ++i) mask.data()[i] = keep(rng) ? 1.0 / (1.0 - rate) : 0.0;
  Matrix out = xv.cwiseProduct(mask);
  return tape.record(std::move(out), {x}, [x, m = std::move(mask)](Tape& t, const Matrix& g) {
    t.accumulate(x, g.cwiseProduct(m));
  });
}

Var bilinear(Tape& tape, Var features, Var bilinear, Var prototypes) {
  Matrix out = bilinear_logits(tape.value(features), tape.value(bilinear), tape.value(prototypes));
  return tape.record(std::move(out), {features, bilinear, prototypes},
                     [features, bilinear, prototypes](Tape& t, const Matrix& g) {
                       const Matrix& f = t.value(features);
                       const Matrix& b = t.value(bilinear);
                       const Matrix& p = t.value(prototypes);
                       if (t.requires_grad(features)) t.accumulate(features, g * p * b.transpose());
                       if (t.requires_grad(bilinear)) t.accumulate(bilinear, f.transpose() * g * p);
                       if (t.requires_grad(prototypes)) t.accumulate(prototypes, g.transpose() * f * b);
                     });
}

Var gradient_reversal(Tape& tape, Var x, double lambda) {
  if (lambda < 0.0) throw Error("gradient reversal needs lambda >= 0");
  return tape.record(grl_forward(tape.value(x)), {x},
                     [x, lambda](Tape& t, const Matrix& g) { t.accumulate(x, grl(g, lambda)); });
}

Var vstack(Tape& tape, Var top, Var bottom) {
  const Matrix& a = tape.value(top);
  const Matrix& b = tape.value(bottom);
  if (a.cols() != b.cols()) throw Error("vstack: " + shape_of(a) + " over " + shape_of(b));
  Matrix out(a.rows() + b.rows(), a.cols());
  out << a, b;
  const Index split = a.rows();
  return tape.record(std::move(out), {top, bottom}, [top, bottom, split](Tape& t, const Matrix& g) {
    t.accumulate(top, g.topRows(split));
    t.accumulate(bottom, g.bottomRows(g.rows() - split));
  });
}

Var row_slice(Tape& tape, Var x, Index begin, Index count) {
  const Matrix& xv = tape.value(x);
  if (begin < 0 || count < 0 || begin + count > xv.rows()) {
    throw Error("row_slice: rows [" + std::to_string(begin) + ", " + std::to_string(begin + count) +
                ") out of range for " + shape_of(xv));
  }
  Matrix out = xv.middleRows(begin, count);
  return tape.record(std::move(out), {x}, [x, begin, count](Tape& t, const Matrix& g) {
    Matrix full = Matrix::Zero(t.value(x).rows(), t.value(x).cols());
    full.middleRows(begin, count) = g;
    t.accumulate(x, full);
  });
}

Var add(Tape& tape, Var a, Var b) {
  if (tape.value(a).rows() != tape.value(b).rows() || tape.value(a).cols() != tape.value(b).cols()) {
    throw Error("add: " + shape_of(tape.value(a)) + " vs " + shape_of(tape.value(b)));
  }
  Matrix out = tape.value(a) + tape.value(b);
  return tape.record(std::move(out), {a, b}, [a, b](Tape& t, const Matrix& g) {
    t.accumulate(a, g);
    t.accumulate(b, g);
  });
}

Var scale(Tape& tape, Var x, double factor) {
  Matrix out = factor * tape.value(x);
  return tape.record(std::move(out), {x}, [x, factor](Tape& t, const Matrix& g) { t.accumulate(x, factor * g); });
}

}  // namespace protomatch
