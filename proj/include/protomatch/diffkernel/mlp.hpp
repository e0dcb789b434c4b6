#pragma once

#include "protomatch/diffkernel/params.hpp"
#include "protomatch/diffkernel/tape.hpp"
#include "protomatch/types.hpp"

#include <string>
#include <vector>

namespace protomatch {

enum class Activation { kNone, kRelu, kSoftmax };

/// Fully connected stack: widths = {input, hidden..., output}; layer k maps
/// widths[k] -> widths[k+1] and is followed by activations[k] and, when
/// dropout_after[k] is set, by dropout at `dropout_rate` in training mode.
struct MlpArch {
  std::string prefix;  // parameter names are prefix + "W<k>" / prefix + "b<k>"
  std::vector<Index> widths;
  std::vector<Activation> activations;
  std::vector<bool> dropout_after;
  double dropout_rate = 0.0;
  bool training = false;

  Index input_width() const { return widths.front(); }
  Index output_width() const { return widths.back(); }
  std::size_t layers() const { return widths.size() - 1; }
  std::string weight_name(std::size_t layer) const { return prefix + "W" + std::to_string(layer); }
  std::string bias_name(std::size_t layer) const { return prefix + "b" + std::to_string(layer); }

  void validate() const;
};

/// 310-64-64-64 extractor: ReLU after the two hidden layers, linear output.
MlpArch feature_extractor_arch(Index input_dim, Index hidden = 64, Index feature_dim = 64);
/// 64-64-64-k discriminator: ReLU then dropout after the first layer, softmax head.
MlpArch discriminator_arch(Index feature_dim = 64, Index hidden = 64, Index n_domains = 3,
                           double dropout_rate = 0.5);

/// Uniform Glorot init, +-sqrt(6 / (fan_in + fan_out)); biases start at zero.
void init_mlp(ParamSet& params, const MlpArch& arch, Rng& rng);

/// Records the stack on `tape`. `rng` is required only in training mode with
/// dropout; in eval mode dropout is the identity.
Var forward_mlp(Tape& tape, Var x, ParamSet& params, const MlpArch& arch, Rng* rng);

/// A self-contained forward pass whose backward returns d(out)/dx and adds
/// the parameter gradients into `params`.
class MlpPass {
 public:
  MlpPass(const Matrix& x, ParamSet& params, const MlpArch& arch, Rng* rng);

  const Matrix& output() const { return tape_.value(out_); }
  Matrix backward(const Matrix& upstream);

 private:
  Tape tape_;
  Var in_;
  Var out_;
};

/// Eval-mode forward without recording gradients.
Matrix predict_mlp(const Matrix& x, const ParamSet& params, const MlpArch& arch);

}  // namespace protomatch
