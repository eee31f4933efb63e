#pragma once

#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <map>
#include <numeric>
#include <string>
#include <vector>

#include "cgrl/core/error.hpp"

namespace cgrl {

/// Dense row-major tensor of 64-bit reals. Rank 1 or 2 is all this project
/// needs; a scalar is represented as shape {1}.
class Tensor {
 public:
  Tensor() = default;

  /// Zero-filled tensor of the given shape.
  explicit Tensor(std::vector<std::size_t> shape)
      : shape_(std::move(shape)), data_(check_shape(shape_), 0.0) {}

  /// Tensor from external data; rejects NaN/Inf and size mismatches.
  Tensor(std::vector<std::size_t> shape, std::vector<double> data)
      : shape_(std::move(shape)), data_(std::move(data)) {
    if (data_.size() != check_shape(shape_))
      throw ShapeError("tensor: data length does not match shape");
    for (double v : data_)
      if (!std::isfinite(v)) throw NumericError("tensor: non-finite value at construction");
  }

  static Tensor scalar(double v) {
    if (!std::isfinite(v)) throw NumericError("tensor: non-finite scalar");
    Tensor t;
    t.shape_ = {1};
    t.data_ = {v};
    return t;
  }

  static Tensor zeros(std::size_t r, std::size_t c) { return Tensor({r, c}); }

  /// Matrix from nested initializer lists, rows of equal length.
  static Tensor matrix(std::initializer_list<std::initializer_list<double>> rows) {
    std::size_t r = rows.size();
    std::size_t c = r ? rows.begin()->size() : 0;
    std::vector<double> d;
    d.reserve(r * c);
    for (const auto& row : rows) {
      if (row.size() != c) throw ShapeError("tensor: ragged initializer");
      d.insert(d.end(), row.begin(), row.end());
    }
    return Tensor({r, c}, std::move(d));
  }

  static Tensor vector(std::initializer_list<double> v) {
    return Tensor({v.size()}, std::vector<double>(v));
  }

  static Tensor identity(std::size_t n) {
    Tensor t({n, n});
    for (std::size_t i = 0; i < n; ++i) t.data_[i * n + i] = 1.0;
    return t;
  }

  /// Uninitialized-by-zero tensor for op outputs; skips the finiteness scan.
  static Tensor uninit(std::vector<std::size_t> shape) {
    Tensor t;
    t.shape_ = std::move(shape);
    t.data_.assign(check_shape(t.shape_), 0.0);
    return t;
  }

  const std::vector<std::size_t>& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return data_.size(); }
  bool is_scalar() const { return data_.size() == 1; }

  std::size_t rows() const { return shape_.empty() ? 0 : shape_[0]; }
  std::size_t cols() const {
    if (shape_.size() >= 2) return shape_[1];
    return shape_.empty() ? 0 : 1;  // rank-1 treated as a column
  }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  double& operator()(std::size_t i, std::size_t j) { return data_[i * shape_[1] + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data_[i * shape_[1] + j]; }

  double value() const {
    if (!is_scalar()) throw ShapeError("tensor: value() on non-scalar");
    return data_[0];
  }

  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

  bool all_finite() const {
    for (double v : data_)
      if (!std::isfinite(v)) return false;
    return true;
  }

  std::string shape_str() const {
    std::string s = "(";
    for (std::size_t i = 0; i < shape_.size(); ++i)
      s += (i ? "," : "") + std::to_string(shape_[i]);
    return s + ")";
  }

 private:
  static std::size_t check_shape(const std::vector<std::size_t>& shape) {
    std::size_t n = 1;
    for (std::size_t d : shape) n *= d;
    return shape.empty() ? 0 : n;
  }

  std::vector<std::size_t> shape_;
  std::vector<double> data_;
};

/// Ordered, deterministically iterable map of named trainable tensors.
using ParameterSet = std::map<std::string, Tensor>;

}  // namespace cgrl
