#include "protomatch/diffkernel/tape.hpp"

namespace protomatch {

Var Tape::constant(Matrix value) {
  nodes_.push_back(Node{std::move(value), {}, {}, false, false});
  return Var{nodes_.size() - 1};
}

Var Tape::input(Matrix value) {
  nodes_.push_back(Node{std::move(value), {}, {}, true, false});
  return Var{nodes_.size() - 1};
}

Var Tape::parameter(ParamSet& params, const std::string& name) {
  Matrix value = params.value(name);
  ParamSet* owner = &params;
  Backward back = [owner, name](Tape&, const Matrix& g) { owner->grad(name) += g; };
  nodes_.push_back(Node{std::move(value), {}, std::move(back), true, false});
  return Var{nodes_.size() - 1};
}

Var Tape::record(Matrix value, std::initializer_list<Var> parents, Backward backward) {
  bool needs = false;
  for (Var p : parents) needs = needs || nodes_[p.id].requires_grad;
  nodes_.push_back(Node{std::move(value), {}, needs ? std::move(backward) : Backward{}, needs, false});
  return Var{nodes_.size() - 1};
}

Matrix Tape::grad(Var v) const {
  const Node& n = nodes_[v.id];
  if (!n.has_grad) return Matrix::Zero(n.value.rows(), n.value.cols());
  return n.grad;
}

void Tape::accumulate(Var v, const Matrix& g) {
  Node& n = nodes_[v.id];
  if (!n.requires_grad) return;
  if (g.rows() != n.value.rows() || g.cols() != n.value.cols()) {
    throw Error("gradient shape " + shape_of(g) + " does not match node shape " + shape_of(n.value));
  }
  if (n.has_grad) {
    n.grad += g;
  } else {
    n.grad = g;
    n.has_grad = true;
  }
}

void Tape::backward(Var scalar_out) {
  if (value(scalar_out).size() != 1) {
    throw Error("backward without a seed needs a 1x1 output, got " + shape_of(value(scalar_out)));
  }
  backward(scalar_out, Matrix::Ones(1, 1));
}

void Tape::backward(Var out, const Matrix& seed) {
  for (Node& n : nodes_) {
    n.has_grad = false;
    n.grad.resize(0, 0);
  }
  accumulate(out, seed);
  for (std::size_t i = out.id + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.has_grad || !n.backward) continue;
    n.backward(*this, n.grad);
  }
}

}  // namespace protomatch
