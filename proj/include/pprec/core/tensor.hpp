#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace pprec::core {

/// Dense row-major tensor of 64-bit floats.
class Tensor {
public:
  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> shape);
  Tensor(std::size_t rows, std::size_t cols) : Tensor(std::vector<std::size_t>{rows, cols}) {}
  Tensor(std::vector<std::size_t> shape, std::vector<double> values);

  static Tensor zeros(std::vector<std::size_t> shape) { return Tensor(std::move(shape)); }
  static Tensor zeros(std::size_t rows, std::size_t cols) { return Tensor(rows, cols); }
  static Tensor full(std::vector<std::size_t> shape, double value);
  static Tensor full(std::size_t rows, std::size_t cols, double value) {
    return full({rows, cols}, value);
  }
  static Tensor scalar(double value) { return Tensor({1, 1}, {value}); }
  static Tensor row(std::vector<double> values);     // 1 x n
  static Tensor column(std::vector<double> values);  // n x 1
  static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<double> values);

  const std::vector<std::size_t>& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return values_.size(); }
  bool empty() const { return values_.empty(); }

  // 2-D accessors.
  std::size_t rows() const;
  std::size_t cols() const;
  double& at(std::size_t r, std::size_t c);
  double at(std::size_t r, std::size_t c) const;
  double* row_ptr(std::size_t r) { return values_.data() + r * cols(); }
  const double* row_ptr(std::size_t r) const { return values_.data() + r * cols(); }

  double* data() { return values_.data(); }
  const double* data() const { return values_.data(); }
  std::vector<double>& values() { return values_; }
  const std::vector<double>& values() const { return values_; }
  double& operator[](std::size_t i) { return values_[i]; }
  double operator[](std::size_t i) const { return values_[i]; }

  // The value of a 1x1 tensor.
  double item() const;

  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }
  bool all_finite() const;
  void fill(double value);
  std::string shape_str() const;

private:
  std::vector<std::size_t> shape_;
  std::vector<double> values_;
};

}  // namespace pprec::core
