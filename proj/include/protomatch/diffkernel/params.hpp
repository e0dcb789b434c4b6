#pragma once

#include "protomatch/types.hpp"

#include <functional>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace protomatch {

/// Named trainable matrices, each paired with a gradient accumulator of the
/// same shape. Iteration order is insertion order.
class ParamSet {
 public:
  void add(const std::string& name, Matrix value);

  bool contains(std::string_view name) const;
  Matrix& value(std::string_view name);
  const Matrix& value(std::string_view name) const;
  Matrix& grad(std::string_view name);
  const Matrix& grad(std::string_view name) const;

  const std::vector<std::string>& names() const { return order_; }
  std::size_t size() const { return order_.size(); }
  Index total_entries() const;

  void zero_grad();

 private:
  struct Entry {
    Matrix value;
    Matrix grad;
  };
  Entry& entry(std::string_view name);
  const Entry& entry(std::string_view name) const;

  std::vector<std::string> order_;
  std::map<std::string, Entry, std::less<>> entries_;
};

using ParamFilter = std::function<bool(std::string_view)>;

/// Selects every parameter whose name starts with `prefix`.
ParamFilter prefix_filter(std::string prefix);

}  // namespace protomatch
