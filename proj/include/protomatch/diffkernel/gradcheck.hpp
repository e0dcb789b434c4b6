#pragma once

#include "protomatch/diffkernel/params.hpp"

#include <functional>
#include <string>
#include <vector>

namespace protomatch {

/// Evaluates a scalar loss at the current parameter values and adds its
/// analytic gradient into params.grad(...). Must be deterministic.
using LossFn = std::function<double(ParamSet&)>;

struct GradCheckEntry {
  std::string name;
  double max_rel_error = 0.0;   // worst entry
  double norm_rel_error = 0.0;  // ||a - n|| / max(||a||, ||n||, 1e-8) over the matrix
};

struct GradCheckReport {
  double max_rel_error = 0.0;
  double max_norm_rel_error = 0.0;
  std::vector<GradCheckEntry> per_param;
};

/// Compares every analytic gradient entry with the central difference
/// (L(theta+h) - L(theta-h)) / 2h. The per-entry error is
/// |a - n| / max(|a|, |n|, 1e-8); the matrix-level error uses Frobenius norms
/// in the same ratio. Parameters are left unchanged.
GradCheckReport finite_diff_check(const LossFn& loss, ParamSet& params, double h = 1e-5,
                                  const ParamFilter& select = {});

}  // namespace protomatch
