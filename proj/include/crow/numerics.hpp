#pragma once

#include <functional>

#include "crow/rng.hpp"
#include "crow/tensor.hpp"

namespace crow {

// m[rows x cols] * v[cols] -> [rows]
Tensor mat_vec(const Tensor& m, const Tensor& v);

// m^T * v, i.e. [cols] result from m[rows x cols] and v[rows].
Tensor mat_tvec(const Tensor& m, const Tensor& v);

// m += a * b^T for 1-D a, b; the rank-1 accumulation used by the pullbacks.
void add_outer(Tensor& m, const Tensor& a, const Tensor& b);

/// n i.i.d. draws from N(0, 1) via Box-Muller on the PRNG's uniforms.
/// Draws are generated in pairs per call; no spare is carried across calls,
/// so the stream is a pure function of (rng state, n).
Tensor sample_standard_normal(RngState& rng, std::size_t n);

using VectorMap = std::function<Tensor(const Tensor&)>;
using ScalarMap = std::function<double(const Tensor&)>;

/// Central-difference Jacobian J[i][j] ~ df_i/dx_j. Default eps balances
/// truncation against round-off at f64.
Tensor finite_difference_jacobian(const VectorMap& f, const Tensor& x0, double eps = 1e-5);

Tensor finite_difference_gradient(const ScalarMap& loss, const Tensor& p0, double eps = 1e-5);

struct LogDet {
  int sign = 0;        // +1, -1, or 0 for singular
  double logabs = 0.0;  // log|det|; -inf when sign == 0
};

/// Partial-pivoting LU determinant in log space. The brute-force oracle the
/// analytic coupling-layer determinants are verified against.
LogDet lu_log_abs_det(const Tensor& m);

}  // namespace crow
