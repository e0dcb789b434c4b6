#include "protomatch/diffkernel/params.hpp"

namespace protomatch {

void ParamSet::add(const std::string& name, Matrix value) {
  if (entries_.count(name) != 0) {
    throw Error("duplicate parameter name '" + name + "'");
  }
  if (!value.allFinite()) {
    throw Error("parameter '" + name + "' has non-finite entries");
  }
  Matrix grad = Matrix::Zero(value.rows(), value.cols());
  entries_.emplace(name, Entry{std::move(value), std::move(grad)});
  order_.push_back(name);
}

bool ParamSet::contains(std::string_view name) const {
  return entries_.find(name) != entries_.end();
}

ParamSet::Entry& ParamSet::entry(std::string_view name) {
  auto it = entries_.find(name);
  if (it == entries_.end()) {
    throw Error("unknown parameter '" + std::string(name) + "'");
  }
  return it->second;
}

const ParamSet::Entry& ParamSet::entry(std::string_view name) const {
  auto it = entries_.find(name);
  if (it == entries_.end()) {
    throw Error("unknown parameter '" + std::string(name) + "'");
  }
  return it->second;
}

Matrix& ParamSet::value(std::string_view name) { return entry(name).value; }
const Matrix& ParamSet::value(std::string_view name) const { return entry(name).value; }
Matrix& ParamSet::grad(std::string_view name) { return entry(name).grad; }
const Matrix& ParamSet::grad(std::string_view name) const { return entry(name).grad; }

Index ParamSet::total_entries() const {
  Index n = 0;
  for (const auto& [name, e] : entries_) n += e.value.size();
  return n;
}

void ParamSet::zero_grad() {
  for (auto& [name, e] : entries_) e.grad.setZero();
}

ParamFilter prefix_filter(std::string prefix) {
  return [prefix = std::move(prefix)](std::string_view name) {
    return name.substr(0, prefix.size()) == prefix;
  };
}

}  // namespace protomatch
