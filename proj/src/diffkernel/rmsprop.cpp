#include "protomatch/diffkernel/rmsprop.hpp"

namespace protomatch {

void rmsprop_step(ParamSet& params, RmsPropState& state, const ParamFilter& select) {
  for (const std::string& name : params.names()) {
    if (!params.grad(name).allFinite()) {
      throw Error("rmsprop: non-finite gradient in parameter '" + name + "'");
    }
  }
  for (const std::string& name : params.names()) {
    Matrix& theta = params.value(name);
    Matrix& g = params.grad(name);
    if (!select || select(name)) {
      auto [it, fresh] = state.accumulators.try_emplace(name, Matrix::Zero(theta.rows(), theta.cols()));
      Matrix& s = it->second;
      s = state.decay * s + (1.0 - state.decay) * g.cwiseAbs2();
      const Matrix step = (g.array() / (s.array().sqrt() + state.epsilon)).matrix();
      theta -= state.learning_rate * step + state.learning_rate * state.weight_decay * theta;
    }
    g.setZero();
  }
}

}  // namespace protomatch
