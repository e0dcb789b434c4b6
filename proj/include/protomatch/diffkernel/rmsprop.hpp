#pragma once

#include "protomatch/diffkernel/params.hpp"
#include "protomatch/types.hpp"

#include <map>
#include <string>

namespace protomatch {

/// Plain (non-centered) RMSprop with decoupled weight decay.
struct RmsPropState {
  double learning_rate = 1e-3;
  double decay = 0.99;
  double epsilon = 1e-8;
  double weight_decay = 1e-5;
  std::map<std::string, Matrix, std::less<>> accumulators;  // running mean of g^2
};

/// s <- decay*s + (1-decay)*g^2;  theta <- theta - lr*g/(sqrt(s)+eps) - lr*wd*theta.
/// Only parameters accepted by `select` move; every gradient is cleared.
void rmsprop_step(ParamSet& params, RmsPropState& state, const ParamFilter& select = {});

}  // namespace protomatch
