#include "protomatch/diffkernel/mlp.hpp"

#include "protomatch/diffkernel/ops.hpp"

#include <cmath>

namespace protomatch {

void MlpArch::validate() const {
  if (widths.size() < 2) throw Error("mlp '" + prefix + "': needs at least one layer");
  for (Index w : widths) {
    if (w <= 0) throw Error("mlp '" + prefix + "': layer widths must be positive");
  }
  if (activations.size() != layers() || dropout_after.size() != layers()) {
    throw Error("mlp '" + prefix + "': activations/dropout flags must have one entry per layer");
  }
  if (dropout_rate < 0.0 || dropout_rate >= 1.0) {
    throw Error("mlp '" + prefix + "': dropout rate must lie in [0, 1)");
  }
}

MlpArch feature_extractor_arch(Index input_dim, Index hidden, Index feature_dim) {
  MlpArch arch;
  arch.prefix = "f.";
  arch.widths = {input_dim, hidden, hidden, feature_dim};
  arch.activations = {Activation::kRelu, Activation::kRelu, Activation::kNone};
  arch.dropout_after = {false, false, false};
  return arch;
}

MlpArch discriminator_arch(Index feature_dim, Index hidden, Index n_domains, double dropout_rate) {
  MlpArch arch;
  arch.prefix = "d.";
  arch.widths = {feature_dim, hidden, hidden, n_domains};
  arch.activations = {Activation::kRelu, Activation::kNone, Activation::kSoftmax};
  arch.dropout_after = {true, false, false};
  arch.dropout_rate = dropout_rate;
  return arch;
}

void init_mlp(ParamSet& params, const MlpArch& arch, Rng& rng) {
  arch.validate();
  for (std::size_t k = 0; k < arch.layers(); ++k) {
    const Index fan_in = arch.widths[k];
    const Index fan_out = arch.widths[k + 1];
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    std::uniform_real_distribution<double> dist(-bound, bound);
    Matrix w(fan_in, fan_out);
    for (Index i = 0; i < w.size(); ++i) w.data()[i] = dist(rng);
    params.add(arch.weight_name(k), std::move(w));
    params.add(arch.bias_name(k), Matrix::Zero(1, fan_out));
  }
}

namespace {

void check_layer_shapes(const Matrix& x, const ParamSet& params, const MlpArch& arch, std::size_t k) {
  const std::string wn = arch.weight_name(k);
  const std::string bn = arch.bias_name(k);
  if (!params.contains(wn) || !params.contains(bn)) {
    throw Error("mlp layer " + wn + ": parameters missing");
  }
  const Matrix& w = params.value(wn);
  const Matrix& b = params.value(bn);
  if (x.cols() != arch.widths[k]) {
    throw Error("mlp layer " + wn + ": expected input width " + std::to_string(arch.widths[k]) + ", got " +
                std::to_string(x.cols()));
  }
  if (w.rows() != arch.widths[k] || w.cols() != arch.widths[k + 1]) {
    throw Error("mlp layer " + wn + ": expected weight " + std::to_string(arch.widths[k]) + "x" +
                std::to_string(arch.widths[k + 1]) + ", got " + shape_of(w));
  }
  if (b.rows() != 1 || b.cols() != arch.widths[k + 1]) {
    throw Error("mlp layer " + bn + ": expected bias 1x" + std::to_string(arch.widths[k + 1]) + ", got " +
                shape_of(b));
  }
}

}  // namespace

Var forward_mlp(Tape& tape, Var x, ParamSet& params, const MlpArch& arch, Rng* rng) {
  arch.validate();
  Var h = x;
  for (std::size_t k = 0; k < arch.layers(); ++k) {
    check_layer_shapes(tape.value(h), params, arch, k);
    Var w = tape.parameter(params, arch.weight_name(k));
    Var b = tape.parameter(params, arch.bias_name(k));
    h = affine(tape, h, w, b);
    switch (arch.activations[k]) {
      case Activation::kRelu:
        h = relu(tape, h);
        break;
      case Activation::kSoftmax:
        h = softmax(tape, h);
        break;
      case Activation::kNone:
        break;
    }
    if (arch.training && arch.dropout_after[k] && arch.dropout_rate > 0.0) {
      if (rng == nullptr) throw Error("mlp '" + arch.prefix + "': training-mode dropout needs an rng");
      h = dropout(tape, h, arch.dropout_rate, *rng);
    }
  }
  return h;
}

MlpPass::MlpPass(const Matrix& x, ParamSet& params, const MlpArch& arch, Rng* rng) {
  in_ = tape_.input(x);
  out_ = forward_mlp(tape_, in_, params, arch, rng);
}

Matrix MlpPass::backward(const Matrix& upstream) {
  tape_.backward(out_, upstream);
  return tape_.grad(in_);
}

Matrix predict_mlp(const Matrix& x, const ParamSet& params, const MlpArch& arch) {
  arch.validate();
  Matrix h = x;
  for (std::size_t k = 0; k < arch.layers(); ++k) {
    check_layer_shapes(h, params, arch, k);
    Matrix next = h * params.value(arch.weight_name(k));
    next.rowwise() += params.value(arch.bias_name(k)).row(0);
    switch (arch.activations[k]) {
      case Activation::kRelu:
        next = next.cwiseMax(0.0);
        break;
      case Activation::kSoftmax:
        next = softmax_rows(next);
        break;
      case Activation::kNone:
        break;
    }
    h = std::move(next);
  }
  return h;
}

}  // namespace protomatch
