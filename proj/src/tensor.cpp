#include "crow/tensor.hpp"

#include <cmath>
#include <numeric>
#include <sstream>

namespace crow {

namespace {

std::size_t shape_product(const std::vector<std::size_t>& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw std::invalid_argument(std::string(op) + ": shape mismatch: " + a.shape_str() +
                                " vs " + b.shape_str());
  }
}

}  // namespace

Tensor::Tensor(std::vector<std::size_t> shape)
    : shape_(std::move(shape)), data_(shape_product(shape_), 0.0) {}

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  if (shape_product(shape_) != data_.size()) {
    throw std::invalid_argument("Tensor: shape " + shape_str() + " does not match data length " +
                                std::to_string(data_.size()));
  }
}

Tensor Tensor::of(std::initializer_list<double> values) {
  return Tensor({values.size()}, std::vector<double>(values));
}

Tensor Tensor::full(std::vector<std::size_t> shape, double value) {
  Tensor t(std::move(shape));
  t.fill(value);
  return t;
}

std::size_t Tensor::width() const {
  if (ndim() != 1) {
    throw std::invalid_argument("Tensor: expected 1-D tensor, got shape " + shape_str());
  }
  return shape_[0];
}

std::size_t Tensor::rows() const {
  if (ndim() != 2) {
    throw std::invalid_argument("Tensor: expected 2-D tensor, got shape " + shape_str());
  }
  return shape_[0];
}

std::size_t Tensor::cols() const {
  if (ndim() != 2) {
    throw std::invalid_argument("Tensor: expected 2-D tensor, got shape " + shape_str());
  }
  return shape_[1];
}

double Tensor::at2(std::size_t i, std::size_t j) const { return data_[i * cols() + j]; }
double& Tensor::at2(std::size_t i, std::size_t j) {
  std::size_t c = cols();
  return data_[i * c + j];
}

bool Tensor::all_finite() const {
  for (double v : data_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

void Tensor::require_finite(const std::string& what) const {
  if (!all_finite()) {
    throw std::runtime_error(what + ": non-finite value in tensor of shape " + shape_str());
  }
}

void Tensor::fill(double value) { std::fill(data_.begin(), data_.end(), value); }

std::string Tensor::shape_str() const { return crow::shape_str(shape_); }

std::string shape_str(const std::vector<std::size_t>& shape) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << " x ";
    os << shape[i];
  }
  os << "]";
  return os.str();
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  Tensor out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += b[i];
  return out;
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  Tensor out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b[i];
  return out;
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  Tensor out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b[i];
  return out;
}

Tensor scaled(const Tensor& a, double factor) {
  Tensor out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= factor;
  return out;
}

void add_inplace(Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add_inplace");
  for (std::size_t i = 0; i < a.size(); ++i) a[i] += b[i];
}

void axpy(double alpha, const Tensor& x, Tensor& y) {
  require_same_shape(x, y, "axpy");
  for (std::size_t i = 0; i < x.size(); ++i) y[i] += alpha * x[i];
}

double dot(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "dot");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

double sum(const Tensor& a) {
  return std::accumulate(a.values().begin(), a.values().end(), 0.0);
}

double squared_norm(const Tensor& a) { return dot(a, a); }

double max_abs(const Tensor& a) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::fabs(a[i]));
  return m;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "max_abs_diff");
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::fabs(a[i] - b[i]));
  return m;
}

Tensor concat(const Tensor& a, const Tensor& b) {
  std::vector<double> data;
  data.reserve(a.width() + b.width());
  data.insert(data.end(), a.values().begin(), a.values().end());
  data.insert(data.end(), b.values().begin(), b.values().end());
  return Tensor({a.width() + b.width()}, std::move(data));
}

Tensor segment(const Tensor& a, std::size_t offset, std::size_t len) {
  if (offset + len > a.width()) {
    throw std::invalid_argument("segment: range [" + std::to_string(offset) + ", " +
                                std::to_string(offset + len) + ") out of bounds for " +
                                a.shape_str());
  }
  std::vector<double> data(a.values().begin() + static_cast<std::ptrdiff_t>(offset),
                           a.values().begin() + static_cast<std::ptrdiff_t>(offset + len));
  return Tensor({len}, std::move(data));
}

}  // namespace crow
