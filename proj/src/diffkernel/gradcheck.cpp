#include "protomatch/diffkernel/gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace protomatch {

GradCheckReport finite_diff_check(const LossFn& loss, ParamSet& params, double h, const ParamFilter& select) {
  params.zero_grad();
  loss(params);
  std::vector<Matrix> analytic;
  analytic.reserve(params.size());
  for (const std::string& name : params.names()) analytic.push_back(params.grad(name));

  GradCheckReport report;
  for (std::size_t p = 0; p < params.size(); ++p) {
    const std::string& name = params.names()[p];
    if (select && !select(name)) continue;
    GradCheckEntry entry{name, 0.0, 0.0};
    Matrix numeric_grad(params.value(name).rows(), params.value(name).cols());
    for (Index i = 0; i < params.value(name).size(); ++i) {
      double& theta = params.value(name).data()[i];
      const double saved = theta;
      theta = saved + h;
      const double up = loss(params);
      theta = saved - h;
      const double down = loss(params);
      theta = saved;
      const double numeric = (up - down) / (2.0 * h);
      numeric_grad.data()[i] = numeric;
      const double a = analytic[p].data()[i];
      const double denom = std::max({std::abs(a), std::abs(numeric), 1e-8});
      entry.max_rel_error = std::max(entry.max_rel_error, std::abs(a - numeric) / denom);
    }
    const double scale = std::max({analytic[p].norm(), numeric_grad.norm(), 1e-8});
    entry.norm_rel_error = (analytic[p] - numeric_grad).norm() / scale;
    report.max_rel_error = std::max(report.max_rel_error, entry.max_rel_error);
    report.max_norm_rel_error = std::max(report.max_norm_rel_error, entry.norm_rel_error);
    report.per_param.push_back(entry);
  }
  params.zero_grad();
  return report;
}

}  // namespace protomatch
