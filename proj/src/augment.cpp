#include "protomatch/augment.hpp"

#include <cmath>
#include <map>

namespace protomatch {

void MixupConfig::validate() const {
  if (!(alpha > 0.0)) throw Error("mixup: alpha must be positive");
  if (!(ratio >= 0.0)) throw Error("mixup: ratio must be nonnegative");
  if (forced_weight && (*forced_weight < 0.0 || *forced_weight > 1.0)) {
    throw Error("mixup: forced weight must lie in [0, 1]");
  }
}

std::vector<TrialGroup> group_by_trial(std::span<const GroupKey> keys) {
  std::vector<TrialGroup> groups;
  std::map<GroupKey, std::size_t> slot;
  for (std::size_t i = 0; i < keys.size(); ++i) {
    auto [it, fresh] = slot.try_emplace(keys[i], groups.size());
    if (fresh) groups.push_back(TrialGroup{keys[i], {}});
    groups[it->second].rows.push_back(static_cast<Index>(i));
  }
  return groups;
}

Index augmented_count(Index n, double ratio) {
  return static_cast<Index>(std::llround(ratio * static_cast<double>(n)));
}

double sample_beta(double alpha, Rng& rng) {
  std::gamma_distribution<double> gamma(alpha, 1.0);
  const double a = gamma(rng);
  const double b = gamma(rng);
  if (a + b <= 0.0) return 0.5;
  return a / (a + b);
}

namespace {

MixupResult allocate(Index count, Index dim, Index label_dim) {
  MixupResult out;
  out.features.resize(count, dim);
  out.labels.resize(label_dim > 0 ? count : 0, label_dim);
  out.keys.reserve(static_cast<std::size_t>(count));
  out.parents.reserve(static_cast<std::size_t>(count));
  out.weights.reserve(static_cast<std::size_t>(count));
  return out;
}

void emit(MixupResult& out, Index row, const Matrix& features, const Matrix& labels, Index i, Index j, double w,
          const GroupKey& key) {
  out.features.row(row) = w * features.row(i) + (1.0 - w) * features.row(j);
  if (labels.rows() > 0) {
    // w*y + (1-w)*y need not round back to y, so a shared label is copied.
    if (labels.row(i) == labels.row(j)) {
      out.labels.row(row) = labels.row(i);
    } else {
      out.labels.row(row) = w * labels.row(i) + (1.0 - w) * labels.row(j);
    }
  }
  out.keys.push_back(key);
  out.parents.emplace_back(i, j);
  out.weights.push_back(w);
}

/// Two distinct positions in [0, n).
std::pair<Index, Index> distinct_pair(Index n, Rng& rng) {
  std::uniform_int_distribution<Index> first(0, n - 1);
  std::uniform_int_distribution<Index> second(0, n - 2);
  const Index a = first(rng);
  Index b = second(rng);
  if (b >= a) ++b;
  return {a, b};
}

void check_inputs(const Matrix& features, const Matrix& labels, std::span<const GroupKey> keys) {
  if (static_cast<Index>(keys.size()) != features.rows()) {
    throw Error("mixup: " + std::to_string(keys.size()) + " keys for " + std::to_string(features.rows()) + " rows");
  }
  if (labels.rows() != 0 && labels.rows() != features.rows()) {
    throw Error("mixup: label rows " + std::to_string(labels.rows()) + " vs feature rows " +
                std::to_string(features.rows()));
  }
}

}  // namespace

MixupResult eeg_mixup(const Matrix& features, const Matrix& labels, std::span<const GroupKey> keys,
                      std::span<const TrialGroup> groups, const MixupConfig& cfg, Rng& rng) {
  cfg.validate();
  check_inputs(features, labels, keys);
  const Index count = augmented_count(features.rows(), cfg.ratio);

  std::vector<double> mass;
  std::vector<std::size_t> usable;
  for (std::size_t g = 0; g < groups.size(); ++g) {
    if (!groups[g].usable()) continue;
    usable.push_back(g);
    mass.push_back(static_cast<double>(groups[g].rows.size()));
  }
  if (usable.empty()) {
    MixupResult empty = allocate(0, features.cols(), labels.rows() > 0 ? labels.cols() : 0);
    empty.no_usable_rows = count > 0;
    return empty;
  }

  MixupResult out = allocate(count, features.cols(), labels.rows() > 0 ? labels.cols() : 0);
  std::discrete_distribution<std::size_t> pick_group(mass.begin(), mass.end());
  for (Index z = 0; z < count; ++z) {
    const TrialGroup& g = groups[usable[pick_group(rng)]];
    const auto [a, b] = distinct_pair(static_cast<Index>(g.rows.size()), rng);
    const double w = cfg.forced_weight ? *cfg.forced_weight : sample_beta(cfg.alpha, rng);
    const Index i = g.rows[static_cast<std::size_t>(a)];
    const Index j = g.rows[static_cast<std::size_t>(b)];
    emit(out, z, features, labels, i, j, w, g.key);
  }
  return out;
}

MixupResult standard_mixup(const Matrix& features, const Matrix& labels, std::span<const GroupKey> keys,
                           const MixupConfig& cfg, Rng& rng) {
  cfg.validate();
  check_inputs(features, labels, keys);
  const Index n = features.rows();
  const Index count = augmented_count(n, cfg.ratio);
  if (n < 2) {
    MixupResult empty = allocate(0, features.cols(), labels.rows() > 0 ? labels.cols() : 0);
    empty.no_usable_rows = count > 0;
    return empty;
  }
  MixupResult out = allocate(count, features.cols(), labels.rows() > 0 ? labels.cols() : 0);
  for (Index z = 0; z < count; ++z) {
    const auto [i, j] = distinct_pair(n, rng);
    const double w = cfg.forced_weight ? *cfg.forced_weight : sample_beta(cfg.alpha, rng);
    emit(out, z, features, labels, i, j, w, keys[static_cast<std::size_t>(i)]);
  }
  return out;
}

MixupResult augment(const Matrix& features, const Matrix& labels, std::span<const GroupKey> keys,
                    const MixupConfig& cfg, Rng& rng) {
  switch (cfg.mode) {
    case MixupMode::kEeg: {
      const auto groups = group_by_trial(keys);
      return eeg_mixup(features, labels, keys, groups, cfg, rng);
    }
    case MixupMode::kStandard:
      return standard_mixup(features, labels, keys, cfg, rng);
    case MixupMode::kOff:
      break;
  }
  return allocate(0, features.cols(), labels.rows() > 0 ? labels.cols() : 0);
}

}  // namespace protomatch
