#include "protomatch/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <random>

namespace protomatch {

namespace {

// A small random problem: stacked [S; U; T] inputs, frozen pseudo-labels for
// U and a frozen target truth/mask, evaluated at the initial parameters.
struct Instance {
  MlpArch extractor;
  MlpArch discriminator;
  ParamSet params;
  Matrix x;
  Matrix y_source;
  Matrix truth_t;
  Matrix mask_t;
  Matrix domains;
  Index ns = 8, nu = 8, nt = 8;
  int classes = 3;
  double ridge = 1e-6;
};

constexpr double kLogitScale = 1.0;

Matrix gaussian(Index rows, Index cols, double scale, Rng& rng) {
  std::normal_distribution<double> n(0.0, scale);
  Matrix m(rows, cols);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
  return m;
}

double quantile(Matrix m, double q) {
  std::vector<double> v(m.data(), m.data() + m.size());
  std::sort(v.begin(), v.end());
  return v[static_cast<std::size_t>(q * static_cast<double>(v.size() - 1))];
}

Instance make_instance(std::uint64_t seed) {
  Instance in;
  Rng rng(seed);
  in.extractor = feature_extractor_arch(6, 5, 4);
  in.discriminator = discriminator_arch(4, 5, 3, 0.5);
  in.discriminator.training = false;
  init_mlp(in.params, in.extractor, rng);
  in.params.add("B", gaussian(4, 4, 0.5, rng));
  init_mlp(in.params, in.discriminator, rng);
  for (const auto& name : in.params.names()) {
    if (name.find(".b") != std::string::npos) in.params.value(name) = gaussian(1, in.params.value(name).cols(), 0.1, rng);
  }
  in.x = gaussian(in.ns + in.nu + in.nt, 6, 1.0, rng);

  std::vector<int> ys(static_cast<std::size_t>(in.ns));
  for (std::size_t i = 0; i < ys.size(); ++i) ys[i] = static_cast<int>(i % static_cast<std::size_t>(in.classes));
  const Matrix f = predict_mlp(in.x, in.params, in.extractor);
  const Matrix p_prev = gaussian(in.classes, 4, 1.0, rng);
  const Matrix yu = sharpen(classify(f.middleRows(in.ns, in.nu), in.params.value("B"), p_prev), 0.9);
  in.y_source.resize(in.ns + in.nu, in.classes);
  in.y_source << one_hot(ys, in.classes), yu;

  // Near-uniform probabilities put every cosine within ~1e-8 of 1, where the
  // pair loss is too curved for a central difference at h = 1e-5. Rescale B
  // so the logits spread by about kLogitScale.
  const Matrix p = prototypes(f.topRows(in.ns + in.nu), in.y_source, in.ridge).prototypes;
  const Matrix logits = bilinear_logits(f, in.params.value("B"), p);
  const double spread = std::sqrt((logits.array() - logits.mean()).square().mean());
  in.params.value("B") *= kLogitScale / spread;
  const Matrix& b = in.params.value("B");
  const Matrix probs_t = classify(f.bottomRows(in.nt), b, p);
  const Matrix dots = probs_t * probs_t.transpose();
  const auto tm = target_truth_mask(probs_t, quantile(dots, 0.7), quantile(dots, 0.3));
  in.truth_t = tm.truth;
  in.mask_t = tm.mask;

  std::vector<int> ids;
  for (Index i = 0; i < in.ns; ++i) ids.push_back(0);
  for (Index i = 0; i < in.nu; ++i) ids.push_back(1);
  for (Index i = 0; i < in.nt; ++i) ids.push_back(2);
  in.domains = domain_labels(ids, 3);
  return in;
}

enum class Term { kSource, kTarget, kCombined, kDisc, kDiscThroughReversal };

constexpr double kLambda = 0.7;

LossFn make_loss(const Instance& in, Term term, bool inject_fault) {
  return [&in, term, inject_fault](ParamSet& params) {
    const Matrix before = params.grad("B");
    Tape tape;
    Var x = tape.constant(in.x);
    Var f = forward_mlp(tape, x, params, in.extractor, nullptr);
    Var loss;
    double factor = 1.0;
    if (term == Term::kDisc || term == Term::kDiscThroughReversal) {
      loss = tape_ops::domain_disc_loss(tape, f, in.domains, params, in.discriminator, nullptr, kLambda);
      // Upstream of the reversal the analytic gradient is that of -lambda * L.
      if (term == Term::kDiscThroughReversal) factor = -kLambda;
    } else {
      Var fs = row_slice(tape, f, 0, in.ns + in.nu);
      Var ft = row_slice(tape, f, in.ns + in.nu, in.nt);
      Var b = tape.parameter(params, "B");
      Var p = tape_ops::prototypes(tape, fs, in.y_source, in.ridge);
      Var ls = tape_ops::pair_loss_source(tape, tape_ops::similarity(tape, tape_ops::classify(tape, fs, b, p)),
                                          similarity_truth_source(in.y_source));
      Var lt = tape_ops::pair_loss_target(tape, tape_ops::similarity(tape, tape_ops::classify(tape, ft, b, p)),
                                          in.truth_t, in.mask_t);
      if (term == Term::kSource) {
        loss = ls;
      } else if (term == Term::kTarget) {
        loss = lt;
      } else {
        LossWeights w;
        w.beta = 0.5;
        loss = tape_ops::combined_pair_loss(tape, ls, lt, p, w, 5, 10);
      }
    }
    tape.backward(loss);
    if (inject_fault) params.grad("B") = 2.0 * before - params.grad("B");
    return factor * tape.value(loss)(0, 0);
  };
}

}  // namespace

GradientSuiteReport run_gradient_suite(const GradientSuiteOptions& options) {
  const std::vector<std::pair<std::string, Term>> terms = {{"pair_loss_source", Term::kSource},
                                                           {"pair_loss_target", Term::kTarget},
                                                           {"combined_pair_loss", Term::kCombined},
                                                           {"domain_disc_loss", Term::kDiscThroughReversal},
                                                           {"domain_disc_loss", Term::kDisc}};
  GradientSuiteReport report;
  std::map<std::pair<std::size_t, std::string>, double> worst;
  std::vector<std::string> order;
  for (std::uint64_t seed : options.seeds) {
    Instance in = make_instance(seed);
    if (order.empty()) order = in.params.names();
    for (std::size_t t = 0; t < terms.size(); ++t) {
      const Term term = terms[t].second;
      const ParamFilter select = [term](std::string_view name) {
        if (term == Term::kDisc) return name.substr(0, 2) == "d.";
        if (term == Term::kDiscThroughReversal) return name.substr(0, 2) == "f.";
        return name.substr(0, 2) != "d.";
      };
      const GradCheckReport r = finite_diff_check(make_loss(in, term, options.inject_fault), in.params, options.h, select);
      for (const auto& e : r.per_param) {
        double& w = worst[{t, e.name}];
        w = std::max(w, e.max_rel_error);
      }
    }
  }
  for (std::size_t t = 0; t < terms.size(); ++t) {
    for (const auto& name : order) {
      auto it = worst.find({t, name});
      if (it == worst.end()) continue;
      report.entries.push_back({terms[t].first, name, it->second});
      report.worst = std::max(report.worst, it->second);
    }
  }
  report.passed = !report.entries.empty() && report.worst <= options.tolerance;
  return report;
}

}  // namespace protomatch
