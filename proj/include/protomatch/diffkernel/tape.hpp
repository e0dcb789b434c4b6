#pragma once

#include "protomatch/diffkernel/params.hpp"
#include "protomatch/types.hpp"

#include <deque>
#include <functional>
#include <initializer_list>

namespace protomatch {

/// Handle to a node recorded on a Tape.
struct Var {
  std::size_t id = 0;
};

/// Reverse-mode tape. Nodes are appended in evaluation order, so a reverse
/// sweep visits every node after all of its consumers.
class Tape {
 public:
  /// Receives the gradient flowing into a node and pushes it to the node's
  /// parents through Tape::accumulate.
  using Backward = std::function<void(Tape&, const Matrix& grad)>;

  /// A leaf that never receives gradient.
  Var constant(Matrix value);
  /// A leaf whose gradient is kept on the tape (see Tape::grad).
  Var input(Matrix value);
  /// A leaf bound to a parameter; backward adds into params.grad(name).
  Var parameter(ParamSet& params, const std::string& name);

  Var record(Matrix value, std::initializer_list<Var> parents, Backward backward);

  const Matrix& value(Var v) const { return nodes_[v.id].value; }
  bool requires_grad(Var v) const { return nodes_[v.id].requires_grad; }

  /// Gradient accumulated at `v` by the last backward sweep (zeros if none).
  Matrix grad(Var v) const;

  void accumulate(Var v, const Matrix& g);

  /// Seeds d(out)/d(out) = 1 for a 1x1 output and sweeps.
  void backward(Var scalar_out);
  /// Seeds an arbitrary upstream gradient of the same shape as `out`.
  void backward(Var out, const Matrix& seed);

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    Backward backward;
    bool requires_grad = false;
    bool has_grad = false;
  };
  std::deque<Node> nodes_;
};

}  // namespace protomatch
