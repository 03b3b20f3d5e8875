#pragma once

#include <cstddef>
#include <initializer_list>
#include <stdexcept>
#include <string>
#include <vector>

namespace crow {

/// Dense row-major tensor of 64-bit reals. The single numeric carrier used
/// throughout; invertibility and determinant checks need double precision.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> shape);
  Tensor(std::vector<std::size_t> shape, std::vector<double> data);

  static Tensor zeros(std::vector<std::size_t> shape) { return Tensor(std::move(shape)); }
  static Tensor full(std::vector<std::size_t> shape, double value);
  // 1-D tensor from literal values.
  static Tensor of(std::initializer_list<double> values);

  const std::vector<std::size_t>& shape() const { return shape_; }
  std::size_t ndim() const { return shape_.size(); }
  std::size_t size() const { return data_.size(); }

  // Width of a 1-D tensor; throws on other ranks so shape bugs surface early.
  std::size_t width() const;
  std::size_t rows() const;
  std::size_t cols() const;

  double operator[](std::size_t i) const { return data_[i]; }
  double& operator[](std::size_t i) { return data_[i]; }
  double at2(std::size_t i, std::size_t j) const;
  double& at2(std::size_t i, std::size_t j);

  const double* data() const { return data_.data(); }
  double* data() { return data_.data(); }
  const std::vector<double>& values() const { return data_; }

  bool all_finite() const;
  // Throws std::runtime_error naming `what` when a non-finite entry exists.
  void require_finite(const std::string& what) const;

  void fill(double value);
  std::string shape_str() const;

  bool operator==(const Tensor& other) const {
    return shape_ == other.shape_ && data_ == other.data_;
  }

 private:
  std::vector<std::size_t> shape_;
  std::vector<double> data_;
};

std::string shape_str(const std::vector<std::size_t>& shape);

// Element-wise helpers. All of them check shapes and throw std::invalid_argument
// naming both operands on mismatch.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scaled(const Tensor& a, double factor);
void add_inplace(Tensor& a, const Tensor& b);
void axpy(double alpha, const Tensor& x, Tensor& y);  // y += alpha * x
double dot(const Tensor& a, const Tensor& b);
double sum(const Tensor& a);
double squared_norm(const Tensor& a);
double max_abs(const Tensor& a);
double max_abs_diff(const Tensor& a, const Tensor& b);

// 1-D concatenation / slicing.
Tensor concat(const Tensor& a, const Tensor& b);
Tensor segment(const Tensor& a, std::size_t offset, std::size_t len);

}  // namespace crow
