#include "crow/numerics.hpp"

#include <cmath>
#include <limits>
#include <sstream>

namespace crow {

Tensor mat_vec(const Tensor& m, const Tensor& v) {
  if (m.ndim() != 2 || v.ndim() != 1 || m.cols() != v.width()) {
    throw std::invalid_argument("mat_vec: dimension mismatch: m " + m.shape_str() + " vs v " +
                                v.shape_str());
  }
  const std::size_t rows = m.rows(), cols = m.cols();
  Tensor out({rows});
  const double* md = m.data();
  const double* vd = v.data();
  for (std::size_t i = 0; i < rows; ++i) {
    const double* row = md + i * cols;
    double acc = 0.0;
    for (std::size_t j = 0; j < cols; ++j) acc += row[j] * vd[j];
    out[i] = acc;
  }
  return out;
}

Tensor mat_tvec(const Tensor& m, const Tensor& v) {
  if (m.ndim() != 2 || v.ndim() != 1 || m.rows() != v.width()) {
    throw std::invalid_argument("mat_tvec: dimension mismatch: m " + m.shape_str() + " vs v " +
                                v.shape_str());
  }
  const std::size_t rows = m.rows(), cols = m.cols();
  Tensor out({cols});
  const double* md = m.data();
  const double* vd = v.data();
  double* od = out.data();
  for (std::size_t i = 0; i < rows; ++i) {
    const double* row = md + i * cols;
    const double vi = vd[i];
    for (std::size_t j = 0; j < cols; ++j) od[j] += row[j] * vi;
  }
  return out;
}

void add_outer(Tensor& m, const Tensor& a, const Tensor& b) {
  if (m.ndim() != 2 || m.rows() != a.width() || m.cols() != b.width()) {
    throw std::invalid_argument("add_outer: dimension mismatch: m " + m.shape_str() + ", a " +
                                a.shape_str() + ", b " + b.shape_str());
  }
  const std::size_t rows = m.rows(), cols = m.cols();
  double* md = m.data();
  const double* ad = a.data();
  const double* bd = b.data();
  for (std::size_t i = 0; i < rows; ++i) {
    double* row = md + i * cols;
    const double ai = ad[i];
    for (std::size_t j = 0; j < cols; ++j) row[j] += ai * bd[j];
  }
}

Tensor sample_standard_normal(RngState& rng, std::size_t n) {
  if (n == 0) throw std::invalid_argument("sample_standard_normal: n must be >= 1");
  Tensor out({n});
  const double two_pi = 2.0 * M_PI;
  for (std::size_t i = 0; i < n; i += 2) {
    double u1 = rng.next_uniform();
    double u2 = rng.next_uniform();
    double radius = std::sqrt(-2.0 * std::log(u1));
    out[i] = radius * std::cos(two_pi * u2);
    if (i + 1 < n) out[i + 1] = radius * std::sin(two_pi * u2);
  }
  return out;
}

namespace {

std::string point_str(const Tensor& x) {
  std::ostringstream os;
  os << "(";
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (i) os << ", ";
    os << x[i];
  }
  os << ")";
  return os.str();
}

Tensor probe(const VectorMap& f, const Tensor& x) {
  Tensor y = f(x);
  if (!y.all_finite()) {
    throw std::runtime_error("finite_difference_jacobian: f returned non-finite value at probe " +
                             point_str(x));
  }
  return y;
}

}  // namespace

Tensor finite_difference_jacobian(const VectorMap& f, const Tensor& x0, double eps) {
  if (eps <= 0.0) throw std::invalid_argument("finite_difference_jacobian: eps must be > 0");
  const std::size_t d = x0.width();
  Tensor y0 = probe(f, x0);
  const std::size_t out_dim = y0.width();
  Tensor jac({out_dim, d});
  Tensor x = x0;
  for (std::size_t j = 0; j < d; ++j) {
    const double orig = x[j];
    x[j] = orig + eps;
    Tensor yp = probe(f, x);
    x[j] = orig - eps;
    Tensor ym = probe(f, x);
    x[j] = orig;
    for (std::size_t i = 0; i < out_dim; ++i) {
      jac.at2(i, j) = (yp[i] - ym[i]) / (2.0 * eps);
    }
  }
  return jac;
}

Tensor finite_difference_gradient(const ScalarMap& loss, const Tensor& p0, double eps) {
  if (eps <= 0.0) throw std::invalid_argument("finite_difference_gradient: eps must be > 0");
  const std::size_t d = p0.width();
  Tensor grad({d});
  Tensor p = p0;
  for (std::size_t j = 0; j < d; ++j) {
    const double orig = p[j];
    p[j] = orig + eps;
    double lp = loss(p);
    p[j] = orig - eps;
    double lm = loss(p);
    p[j] = orig;
    if (!std::isfinite(lp) || !std::isfinite(lm)) {
      throw std::runtime_error("finite_difference_gradient: loss returned non-finite value near " +
                               point_str(p));
    }
    grad[j] = (lp - lm) / (2.0 * eps);
  }
  return grad;
}

LogDet lu_log_abs_det(const Tensor& m) {
  if (m.ndim() != 2 || m.rows() != m.cols()) {
    throw std::invalid_argument("lu_log_abs_det: matrix must be square, got " + m.shape_str());
  }
  const std::size_t d = m.rows();
  Tensor a = m;
  int sign = 1;
  double logabs = 0.0;
  for (std::size_t k = 0; k < d; ++k) {
    // partial pivoting
    std::size_t pivot = k;
    double best = std::fabs(a.at2(k, k));
    for (std::size_t i = k + 1; i < d; ++i) {
      double cand = std::fabs(a.at2(i, k));
      if (cand > best) {
        best = cand;
        pivot = i;
      }
    }
    if (best == 0.0) {
      return {0, -std::numeric_limits<double>::infinity()};
    }
    if (pivot != k) {
      for (std::size_t j = 0; j < d; ++j) std::swap(a.at2(k, j), a.at2(pivot, j));
      sign = -sign;
    }
    const double diag = a.at2(k, k);
    if (diag < 0.0) sign = -sign;
    logabs += std::log(std::fabs(diag));
    for (std::size_t i = k + 1; i < d; ++i) {
      const double factor = a.at2(i, k) / diag;
      a.at2(i, k) = 0.0;
      for (std::size_t j = k + 1; j < d; ++j) a.at2(i, j) -= factor * a.at2(k, j);
    }
  }
  return {sign, logabs};
}

}  // namespace crow
