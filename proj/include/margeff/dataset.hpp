#pragma once

#include <cstddef>
#include <string>
#include <unordered_map>
#include <vector>

#include "margeff/errors.hpp"

namespace margeff {

// Column-oriented numeric table. All columns share the same length and
// names are unique.
class Dataset {
 public:
  Dataset() = default;

  std::size_t n_rows() const { return n_rows_; }
  std::size_t n_cols() const { return names_.size(); }
  const std::vector<std::string>& names() const { return names_; }

  bool has_column(const std::string& name) const {
    return index_.count(name) > 0;
  }

  const std::vector<double>& col(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) {
      throw Error(ErrorCode::missing_column, "column not found: " + name);
    }
    return columns_[it->second];
  }

  const std::vector<double>& col(std::size_t i) const { return columns_[i]; }

  void add_column(const std::string& name, std::vector<double> values) {
    if (has_column(name)) {
      throw Error(ErrorCode::duplicate_column, "duplicate column: " + name);
    }
    if (!names_.empty() && values.size() != n_rows_) {
      throw Error(ErrorCode::dimension_mismatch,
                  "column " + name + " has " + std::to_string(values.size()) +
                      " rows, expected " + std::to_string(n_rows_));
    }
    if (names_.empty()) n_rows_ = values.size();
    index_[name] = names_.size();
    names_.push_back(name);
    columns_.push_back(std::move(values));
  }

  void replace_column(const std::string& name, std::vector<double> values) {
    auto it = index_.find(name);
    if (it == index_.end()) {
      throw Error(ErrorCode::missing_column, "column not found: " + name);
    }
    if (values.size() != n_rows_) {
      throw Error(ErrorCode::dimension_mismatch, "row count mismatch for " + name);
    }
    columns_[it->second] = std::move(values);
  }

  // Copy with one column overwritten by a constant; used to build
  // counterfactual designs.
  Dataset with_constant_column(const std::string& name, double value) const {
    Dataset out(*this);
    out.replace_column(name, std::vector<double>(n_rows_, value));
    return out;
  }

  Dataset subset(const std::vector<std::size_t>& rows) const {
    Dataset out;
    for (std::size_t j = 0; j < names_.size(); ++j) {
      std::vector<double> v;
      v.reserve(rows.size());
      for (std::size_t r : rows) v.push_back(columns_[j][r]);
      out.add_column(names_[j], std::move(v));
    }
    if (names_.empty()) out.n_rows_ = 0;
    return out;
  }

 private:
  std::vector<std::string> names_;
  std::vector<std::vector<double>> columns_;
  std::unordered_map<std::string, std::size_t> index_;
  std::size_t n_rows_ = 0;
};

}  // namespace margeff
