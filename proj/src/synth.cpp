#include "protomatch/datamodel.hpp"

#include <cmath>

namespace protomatch {

void SynthConfig::validate() const {
  if (n_subjects < 1 || trials_per_subject < 1 || segments_per_trial < 1 || n_classes < 1 || feature_dim < 1) {
    throw Error("synth config: all counts must be positive");
  }
  if (class_separation < 0.0 || subject_shift < 0.0 || trial_drift < 0.0 || noise < 0.0) {
    throw Error("synth config: all scales must be nonnegative");
  }
}

Dataset synthesize_dataset(const SynthConfig& cfg) {
  cfg.validate();
  Rng rng(cfg.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  const Index d = cfg.feature_dim;
  auto gaussian = [&](Index rows, Index cols, double scale) {
    Matrix m(rows, cols);
    for (Index i = 0; i < m.size(); ++i) m.data()[i] = scale * normal(rng);
    return m;
  };

  const Matrix class_means = gaussian(cfg.n_classes, d, cfg.class_separation);

  Dataset ds;
  ds.n_classes = cfg.n_classes;
  ds.feature_dim = d;
  for (int subject = 1; subject <= cfg.n_subjects; ++subject) {
    ds.subjects.push_back(subject);
    // x -> x A + b with A = I + shift * G / sqrt(d).
    const Matrix mix = Matrix::Identity(d, d) + gaussian(d, d, cfg.subject_shift / std::sqrt(static_cast<double>(d)));
    const RowVector offset = gaussian(1, d, cfg.subject_shift).row(0);
    for (int trial = 1; trial <= cfg.trials_per_subject; ++trial) {
      const int label = (trial - 1) % cfg.n_classes;
      const RowVector drift = gaussian(1, d, cfg.trial_drift).row(0);
      const RowVector centre = (class_means.row(label) + drift) * mix + offset;
      for (int seg = 0; seg < cfg.segments_per_trial; ++seg) {
        Segment s;
        s.subject = subject;
        s.session = 1;
        s.trial = trial;
        s.index = seg;
        s.features = centre + gaussian(1, d, cfg.noise).row(0);
        s.label = label;
        ds.segments.push_back(std::move(s));
      }
    }
  }
  return ds;
}

}  // namespace protomatch
