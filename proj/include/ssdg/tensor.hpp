/*
 * Copyright 2026 The ssdg Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#ifndef SSDG_TENSOR_HPP_
#define SSDG_TENSOR_HPP_

#include <cmath>
#include <cstddef>
#include <functional>
#include <map>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "ssdg/error.hpp"

namespace ssdg {

inline std::string shape_string(const std::vector<std::size_t>& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ", ";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

// Dense row-major tensor of doubles.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> shape)
      : shape_(std::move(shape)), data_(element_count(shape_), 0.0) {}
  Tensor(std::vector<std::size_t> shape, std::vector<double> data)
      : shape_(std::move(shape)), data_(std::move(data)) {
    if (element_count(shape_) != data_.size()) {
      throw ShapeError("tensor", "shape " + shape_string(shape_) + " holds " +
                                     std::to_string(element_count(shape_)) +
                                     " values, got " +
                                     std::to_string(data_.size()));
    }
  }

  static Tensor matrix(std::size_t rows, std::size_t cols) {
    return Tensor({rows, cols});
  }

  const std::vector<std::size_t>& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return data_.size(); }
  std::size_t dim(std::size_t i) const { return shape_.at(i); }

  // Matrix view helpers; only meaningful for rank 2.
  std::size_t rows() const { return shape_.at(0); }
  std::size_t cols() const { return shape_.at(1); }
  double& operator()(std::size_t r, std::size_t c) {
    return data_[r * shape_[1] + c];
  }
  double operator()(std::size_t r, std::size_t c) const {
    return data_[r * shape_[1] + c];
  }
  std::span<double> row(std::size_t r) {
    return {data_.data() + r * shape_[1], shape_[1]};
  }
  std::span<const double> row(std::size_t r) const {
    return {data_.data() + r * shape_[1], shape_[1]};
  }

  std::vector<double>& data() { return data_; }
  const std::vector<double>& data() const { return data_; }
  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  bool all_finite() const {
    for (double v : data_) {
      if (!std::isfinite(v)) return false;
    }
    return true;
  }

  bool operator==(const Tensor&) const = default;

 private:
  static std::size_t element_count(const std::vector<std::size_t>& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                           std::multiplies<>());
  }

  std::vector<std::size_t> shape_;
  std::vector<double> data_;
};

// Named parameter tensors of one model checkpoint. Iteration is in name order.
class ParamSet {
 public:
  using Map = std::map<std::string, Tensor>;

  void insert(const std::string& name, Tensor t) {
    if (!entries_.emplace(name, std::move(t)).second) {
      throw Error("duplicate parameter name '" + name + "'");
    }
  }
  Tensor& at(const std::string& name) {
    auto it = entries_.find(name);
    if (it == entries_.end()) throw Error("unknown parameter '" + name + "'");
    return it->second;
  }
  const Tensor& at(const std::string& name) const {
    auto it = entries_.find(name);
    if (it == entries_.end()) throw Error("unknown parameter '" + name + "'");
    return it->second;
  }
  bool contains(const std::string& name) const {
    return entries_.count(name) != 0;
  }
  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& [name, t] : entries_) n += t.size();
    return n;
  }

  Map::iterator begin() { return entries_.begin(); }
  Map::iterator end() { return entries_.end(); }
  Map::const_iterator begin() const { return entries_.begin(); }
  Map::const_iterator end() const { return entries_.end(); }

  // Names whose presence or shape differs between the two sets.
  std::vector<std::string> mismatches(const ParamSet& other) const {
    std::vector<std::string> out;
    for (const auto& [name, t] : entries_) {
      auto it = other.entries_.find(name);
      if (it == other.entries_.end() || it->second.shape() != t.shape()) {
        out.push_back(name);
      }
    }
    for (const auto& [name, t] : other.entries_) {
      if (!entries_.count(name)) out.push_back(name);
    }
    return out;
  }
  bool same_layout(const ParamSet& other) const {
    return mismatches(other).empty();
  }
  void require_layout(const ParamSet& other, const std::string& what) const {
    auto bad = mismatches(other);
    if (bad.empty()) return;
    std::string names;
    for (const auto& n : bad) names += (names.empty() ? "" : ", ") + n;
    throw ShapeError(bad.front(), what + ": incompatible parameters {" + names + "}");
  }

  ParamSet zeros_like() const {
    ParamSet z;
    for (const auto& [name, t] : entries_) z.insert(name, Tensor(t.shape()));
    return z;
  }

  bool operator==(const ParamSet&) const = default;

 private:
  Map entries_;
};

}  // namespace ssdg

#endif  // SSDG_TENSOR_HPP_
