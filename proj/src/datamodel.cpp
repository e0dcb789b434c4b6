#include "protomatch/datamodel.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

namespace protomatch {

void Dataset::validate() const {
  if (segments.empty()) throw Error("dataset: no segments");
  if (n_classes < 1) throw Error("dataset: n_classes must be positive");
  std::set<int> seen;
  for (std::size_t i = 0; i < segments.size(); ++i) {
    const Segment& s = segments[i];
    if (s.features.size() != feature_dim) {
      throw Error("dataset: segment " + std::to_string(i) + " has " + std::to_string(s.features.size()) +
                  " features, expected " + std::to_string(feature_dim));
    }
    if (!s.features.allFinite()) throw Error("dataset: segment " + std::to_string(i) + " has non-finite features");
    if (s.label && (*s.label < 0 || *s.label >= n_classes)) {
      throw Error("dataset: segment " + std::to_string(i) + " label " + std::to_string(*s.label) +
                  " outside [0, " + std::to_string(n_classes) + ")");
    }
    seen.insert(s.subject);
  }
  if (std::vector<int>(seen.begin(), seen.end()) != subjects) {
    throw Error("dataset: subject list does not match segments");
  }
}

// ---------------------------------------------------------------------------
// CSV
// ---------------------------------------------------------------------------

namespace {

std::vector<std::string_view> split_commas(std::string_view line) {
  std::vector<std::string_view> cells;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      cells.push_back(line.substr(start));
      break;
    }
    cells.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
  return cells;
}

int parse_int(std::string_view cell, const std::string& what, std::size_t line_no) {
  int v = 0;
  auto [p, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
  if (ec != std::errc() || p != cell.data() + cell.size()) {
    throw Error("dataset line " + std::to_string(line_no) + ": bad " + what + " '" + std::string(cell) + "'");
  }
  return v;
}

double parse_real(std::string_view cell, std::size_t column, std::size_t line_no) {
  double v = 0.0;
  auto [p, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
  if (ec != std::errc() || p != cell.data() + cell.size() || !std::isfinite(v)) {
    throw Error("dataset line " + std::to_string(line_no) + ": non-finite or malformed feature f" +
                std::to_string(column) + " '" + std::string(cell) + "'");
  }
  return v;
}

constexpr std::string_view kIdColumns[] = {"subject", "session", "trial", "segment", "label"};

}  // namespace

Dataset read_dataset(std::istream& in) {
  std::string line;
  std::size_t line_no = 1;
  if (!std::getline(in, line) || line.rfind("#classes=", 0) != 0) {
    throw Error("dataset line 1: expected '#classes=<c>'");
  }
  Dataset ds;
  ds.n_classes = parse_int(std::string_view(line).substr(9), "class count", line_no);
  if (ds.n_classes < 1) throw Error("dataset line 1: class count must be positive");

  ++line_no;
  if (!std::getline(in, line)) throw Error("dataset line 2: missing header");
  const auto header = split_commas(line);
  if (header.size() < 6) throw Error("dataset line 2: header needs id columns and at least one feature");
  for (std::size_t i = 0; i < 5; ++i) {
    if (header[i] != kIdColumns[i]) {
      throw Error("dataset line 2: column " + std::to_string(i) + " must be '" + std::string(kIdColumns[i]) + "'");
    }
  }
  ds.feature_dim = static_cast<Index>(header.size() - 5);
  for (Index f = 0; f < ds.feature_dim; ++f) {
    if (header[5 + f] != "f" + std::to_string(f)) {
      throw Error("dataset line 2: feature column " + std::to_string(f) + " must be 'f" + std::to_string(f) + "'");
    }
  }

  std::set<int> subjects;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto cells = split_commas(line);
    if (cells.size() != header.size()) {
      throw Error("dataset line " + std::to_string(line_no) + ": expected " + std::to_string(header.size()) +
                  " columns, got " + std::to_string(cells.size()));
    }
    Segment s;
    s.subject = parse_int(cells[0], "subject", line_no);
    s.session = parse_int(cells[1], "session", line_no);
    s.trial = parse_int(cells[2], "trial", line_no);
    s.index = parse_int(cells[3], "segment", line_no);
    if (!cells[4].empty()) {
      const int label = parse_int(cells[4], "label", line_no);
      if (label < 0 || label >= ds.n_classes) {
        throw Error("dataset line " + std::to_string(line_no) + ": label " + std::to_string(label) +
                    " outside [0, " + std::to_string(ds.n_classes) + ")");
      }
      s.label = label;
    }
    s.features.resize(ds.feature_dim);
    for (Index f = 0; f < ds.feature_dim; ++f) {
      s.features[f] = parse_real(cells[5 + f], static_cast<std::size_t>(f), line_no);
    }
    subjects.insert(s.subject);
    ds.segments.push_back(std::move(s));
  }
  if (ds.segments.empty()) throw Error("dataset: no segments");
  ds.subjects.assign(subjects.begin(), subjects.end());
  return ds;
}

Dataset load_dataset(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open dataset " + path.string());
  return read_dataset(in);
}

void write_dataset(std::ostream& out, const Dataset& ds) {
  out << "#classes=" << ds.n_classes << '\n';
  out << "subject,session,trial,segment,label";
  for (Index f = 0; f < ds.feature_dim; ++f) out << ",f" << f;
  out << '\n';
  char buf[40];
  for (const Segment& s : ds.segments) {
    out << s.subject << ',' << s.session << ',' << s.trial << ',' << s.index << ',';
    if (s.label) out << *s.label;
    for (Index f = 0; f < s.features.size(); ++f) {
      std::snprintf(buf, sizeof(buf), "%.17g", s.features[f]);
      out << ',' << buf;
    }
    out << '\n';
  }
}

void write_dataset(const std::filesystem::path& path, const Dataset& ds) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write dataset " + path.string());
  write_dataset(out, ds);
}

// ---------------------------------------------------------------------------
// Partition
// ---------------------------------------------------------------------------

int count_trials(const std::vector<GroupKey>& keys) {
  return static_cast<int>(std::set<GroupKey>(keys.begin(), keys.end()).size());
}

namespace {

void append_row(Matrix& m, Index row, const RowVector& v) { m.row(row) = v; }

UnlabeledSet gather_unlabeled(const Dataset& ds, const std::vector<std::size_t>& rows) {
  UnlabeledSet set;
  set.features.resize(static_cast<Index>(rows.size()), ds.feature_dim);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    append_row(set.features, static_cast<Index>(i), ds.segments[rows[i]].features);
    set.keys.push_back(ds.segments[rows[i]].key());
  }
  set.rows = rows;
  return set;
}

std::vector<int> labels_or_unknown(const Dataset& ds, const std::vector<std::size_t>& rows) {
  std::vector<int> labels;
  labels.reserve(rows.size());
  for (std::size_t r : rows) labels.push_back(ds.segments[r].label.value_or(-1));
  return labels;
}

}  // namespace

DomainPartition partition_loso(const Dataset& ds, int target_subject, int n_labeled_trials) {
  if (!std::binary_search(ds.subjects.begin(), ds.subjects.end(), target_subject)) {
    throw Error("partition_loso: unknown target subject " + std::to_string(target_subject));
  }
  if (ds.subjects.size() < 2) throw Error("partition_loso: needs at least two subjects");

  std::map<int, std::set<int>> trials_of;
  for (const Segment& s : ds.segments) trials_of[s.subject].insert(s.trial);

  std::map<int, std::set<int>> labeled_trials;
  for (int subject : ds.subjects) {
    if (subject == target_subject) continue;
    const auto& trials = trials_of[subject];
    if (n_labeled_trials < 1 || n_labeled_trials >= static_cast<int>(trials.size())) {
      throw Error("partition_loso: N=" + std::to_string(n_labeled_trials) + " must lie in [1, " +
                  std::to_string(trials.size()) + ") for subject " + std::to_string(subject));
    }
    auto it = trials.begin();
    for (int i = 0; i < n_labeled_trials; ++i, ++it) labeled_trials[subject].insert(*it);
  }

  std::vector<std::size_t> s_rows, u_rows, t_rows;
  for (std::size_t i = 0; i < ds.segments.size(); ++i) {
    const Segment& seg = ds.segments[i];
    if (seg.subject == target_subject) {
      t_rows.push_back(i);
    } else if (labeled_trials[seg.subject].count(seg.trial) != 0) {
      if (!seg.label) {
        throw Error("partition_loso: labeled-trial segment " + std::to_string(i) + " has no label");
      }
      s_rows.push_back(i);
    } else {
      u_rows.push_back(i);
    }
  }

  DomainPartition p;
  p.target_subject = target_subject;
  p.n_labeled_trials = n_labeled_trials;
  p.n_classes = ds.n_classes;
  p.S.features.resize(static_cast<Index>(s_rows.size()), ds.feature_dim);
  for (std::size_t i = 0; i < s_rows.size(); ++i) {
    const Segment& seg = ds.segments[s_rows[i]];
    append_row(p.S.features, static_cast<Index>(i), seg.features);
    p.S.labels.push_back(*seg.label);
    p.S.keys.push_back(seg.key());
  }
  p.S.rows = s_rows;
  p.U = gather_unlabeled(ds, u_rows);
  p.T = gather_unlabeled(ds, t_rows);
  p.sealed = SealedLabels(labels_or_unknown(ds, u_rows), labels_or_unknown(ds, t_rows));
  return p;
}

TargetSplit split_target(const DomainPartition& p, int k_trials) {
  std::set<int> trials;
  for (const GroupKey& k : p.T.keys) trials.insert(k.trial);
  if (k_trials < 1 || k_trials >= static_cast<int>(trials.size())) {
    throw Error("split_target: K=" + std::to_string(k_trials) + " must lie in [1, " +
                std::to_string(trials.size()) + ")");
  }
  std::set<int> first;
  auto it = trials.begin();
  for (int i = 0; i < k_trials; ++i, ++it) first.insert(*it);

  std::vector<Index> v_idx, t_idx;
  for (Index i = 0; i < p.T.size(); ++i) {
    (first.count(p.T.keys[static_cast<std::size_t>(i)].trial) ? v_idx : t_idx).push_back(i);
  }
  auto take = [&p](const std::vector<Index>& idx, UnlabeledSet& set, std::vector<int>& labels) {
    set.features.resize(static_cast<Index>(idx.size()), p.T.features.cols());
    for (std::size_t i = 0; i < idx.size(); ++i) {
      set.features.row(static_cast<Index>(i)) = p.T.features.row(idx[i]);
      set.keys.push_back(p.T.keys[static_cast<std::size_t>(idx[i])]);
      set.rows.push_back(p.T.rows[static_cast<std::size_t>(idx[i])]);
      labels.push_back(p.sealed.target()[static_cast<std::size_t>(idx[i])]);
    }
  };
  TargetSplit split;
  take(v_idx, split.validation, split.validation_labels);
  take(t_idx, split.test, split.test_labels);
  return split;
}

// ---------------------------------------------------------------------------
// Minibatches
// ---------------------------------------------------------------------------

Matrix one_hot(const std::vector<int>& labels, int n_classes) {
  Matrix y = Matrix::Zero(static_cast<Index>(labels.size()), n_classes);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || labels[i] >= n_classes) throw Error("one_hot: label out of range");
    y(static_cast<Index>(i), labels[i]) = 1.0;
  }
  return y;
}

namespace {

std::vector<Index> draw_indices(Index population, Index count, Rng& rng, bool& with_replacement) {
  std::vector<Index> out;
  if (count <= 0) return out;
  if (population <= 0) throw Error("sample_minibatch: cannot sample from an empty domain");
  if (count > population) {
    with_replacement = true;
    std::uniform_int_distribution<Index> pick(0, population - 1);
    for (Index i = 0; i < count; ++i) out.push_back(pick(rng));
    return out;
  }
  std::vector<Index> pool(static_cast<std::size_t>(population));
  for (Index i = 0; i < population; ++i) pool[static_cast<std::size_t>(i)] = i;
  for (Index i = 0; i < count; ++i) {
    std::uniform_int_distribution<Index> pick(i, population - 1);
    std::swap(pool[static_cast<std::size_t>(i)], pool[static_cast<std::size_t>(pick(rng))]);
  }
  pool.resize(static_cast<std::size_t>(count));
  return pool;
}

Matrix gather(const Matrix& m, const std::vector<Index>& idx) {
  Matrix out(static_cast<Index>(idx.size()), m.cols());
  for (std::size_t i = 0; i < idx.size(); ++i) out.row(static_cast<Index>(i)) = m.row(idx[i]);
  return out;
}

template <typename T>
std::vector<T> gather(const std::vector<T>& v, const std::vector<Index>& idx) {
  std::vector<T> out;
  out.reserve(idx.size());
  for (Index i : idx) out.push_back(v[static_cast<std::size_t>(i)]);
  return out;
}

}  // namespace

Batch sample_minibatch(const DomainPartition& p, const BatchSizes& sizes, Rng& rng) {
  Batch b;
  b.index_s = draw_indices(p.S.size(), sizes.labeled, rng, b.sampled_with_replacement);
  b.index_u = draw_indices(p.U.size(), sizes.unlabeled, rng, b.sampled_with_replacement);
  b.index_t = draw_indices(p.T.size(), sizes.target, rng, b.sampled_with_replacement);

  b.xs = gather(p.S.features, b.index_s);
  b.ys = one_hot(gather(p.S.labels, b.index_s), p.n_classes);
  b.keys_s = gather(p.S.keys, b.index_s);
  b.xu = gather(p.U.features, b.index_u);
  b.keys_u = gather(p.U.keys, b.index_u);
  b.xt = gather(p.T.features, b.index_t);
  b.keys_t = gather(p.T.keys, b.index_t);
  return b;
}

}  // namespace protomatch
