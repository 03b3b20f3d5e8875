#include <cmath>

#include "crow/numerics.hpp"
#include "doctest.h"
#include "test_helpers.hpp"

using namespace crow;
using crow::testing::uniform_tensor;

namespace {

// O(d!) cofactor-expansion determinant, the independent small-d oracle.
double cofactor_det(const Tensor& m) {
  const std::size_t d = m.rows();
  if (d == 1) return m.at2(0, 0);
  double det = 0.0;
  for (std::size_t j = 0; j < d; ++j) {
    Tensor minor({d - 1, d - 1});
    for (std::size_t r = 1; r < d; ++r) {
      std::size_t cc = 0;
      for (std::size_t c = 0; c < d; ++c) {
        if (c == j) continue;
        minor.at2(r - 1, cc++) = m.at2(r, c);
      }
    }
    det += (j % 2 == 0 ? 1.0 : -1.0) * m.at2(0, j) * cofactor_det(minor);
  }
  return det;
}

}  // namespace

TEST_CASE("mat_vec identity and zero matrices") {
  Tensor eye({3, 3});
  for (std::size_t i = 0; i < 3; ++i) eye.at2(i, i) = 1.0;
  Tensor v = Tensor::of({1.0, 2.0, 3.0});
  CHECK(mat_vec(eye, v) == v);

  Tensor zeros({2, 4});
  Tensor v4 = Tensor::of({0.5, -1.0, 2.0, 7.0});
  Tensor out = mat_vec(zeros, v4);
  CHECK(out.width() == 2);
  CHECK(out[0] == 0.0);
  CHECK(out[1] == 0.0);
}

TEST_CASE("mat_vec matches the naive triple loop") {
  RngState rng(5);
  Tensor m({5, 5}, sample_standard_normal(rng, 25).values());
  Tensor v = sample_standard_normal(rng, 5);
  Tensor got = mat_vec(m, v);
  for (std::size_t i = 0; i < 5; ++i) {
    double acc = 0.0;
    for (std::size_t j = 0; j < 5; ++j) acc += m.at2(i, j) * v[j];
    CHECK(std::fabs(got[i] - acc) < 1e-14);
  }
}

TEST_CASE("mat_vec names both shapes on mismatch") {
  Tensor m({2, 4});
  Tensor v({3});
  CHECK_THROWS_WITH_AS(mat_vec(m, v), doctest::Contains("[2 x 4]"), std::invalid_argument);
}

TEST_CASE("standard normal sampling is deterministic per seed") {
  RngState a(42), b(42);
  CHECK(sample_standard_normal(a, 1000) == sample_standard_normal(b, 1000));

  RngState c(43);
  CHECK(sample_standard_normal(c, 8) != sample_standard_normal(a, 8));
}

TEST_CASE("standard normal moments at n = 100000") {
  RngState rng(7);
  Tensor draws = sample_standard_normal(rng, 100000);
  double mean = sum(draws) / 100000.0;
  double var = 0.0;
  for (std::size_t i = 0; i < draws.size(); ++i) var += (draws[i] - mean) * (draws[i] - mean);
  var /= 99999.0;
  CHECK(mean > -0.02);
  CHECK(mean < 0.02);
  CHECK(var > 0.97);
  CHECK(var < 1.03);
}

TEST_CASE("standard normal shape and empty contracts") {
  RngState rng(1);
  CHECK(sample_standard_normal(rng, 1).shape() == std::vector<std::size_t>{1});
  CHECK_THROWS_AS(sample_standard_normal(rng, 0), std::invalid_argument);
}

TEST_CASE("finite differences recover linear maps") {
  auto dbl = [](const Tensor& x) { return scaled(x, 2.0); };
  Tensor x0 = Tensor::of({0.3, -1.2, 0.9});
  Tensor jac = finite_difference_jacobian(dbl, x0);
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 3; ++j)
      CHECK(std::fabs(jac.at2(i, j) - (i == j ? 2.0 : 0.0)) < 1e-9);
}

TEST_CASE("finite differences on a hand-differentiable map") {
  auto f = [](const Tensor& x) { return Tensor::of({x[0] * x[1], x[1] * x[1]}); };
  Tensor jac = finite_difference_jacobian(f, Tensor::of({1.0, 2.0}));
  CHECK(std::fabs(jac.at2(0, 0) - 2.0) < 1e-6);
  CHECK(std::fabs(jac.at2(0, 1) - 1.0) < 1e-6);
  CHECK(std::fabs(jac.at2(1, 0) - 0.0) < 1e-6);
  CHECK(std::fabs(jac.at2(1, 1) - 4.0) < 1e-6);
}

TEST_CASE("finite differences report the probe point on NaN") {
  auto f = [](const Tensor& x) {
    return Tensor::of({x[0] > 0.5 ? std::nan("") : x[0]});
  };
  CHECK_THROWS_WITH_AS(finite_difference_jacobian(f, Tensor::of({0.4999999})),
                       doctest::Contains("probe"), std::runtime_error);
}

TEST_CASE("finite difference gradient basics") {
  auto sq = [](const Tensor& p) { return squared_norm(p); };
  Tensor g = finite_difference_gradient(sq, Tensor::of({1.0, -2.0}));
  CHECK(std::fabs(g[0] - 2.0) < 1e-8);
  CHECK(std::fabs(g[1] + 4.0) < 1e-8);

  auto constant = [](const Tensor&) { return 3.25; };
  Tensor gz = finite_difference_gradient(constant, Tensor::of({0.1, 0.2, 0.3}));
  CHECK(max_abs(gz) == 0.0);
}

TEST_CASE("lu_log_abs_det on identity and diagonal matrices") {
  Tensor eye({4, 4});
  for (std::size_t i = 0; i < 4; ++i) eye.at2(i, i) = 1.0;
  LogDet r = lu_log_abs_det(eye);
  CHECK(r.sign == 1);
  CHECK(r.logabs == 0.0);

  Tensor diag({2, 2});
  diag.at2(0, 0) = 2.0;
  diag.at2(1, 1) = 0.5;
  LogDet rd = lu_log_abs_det(diag);
  CHECK(rd.sign == 1);
  CHECK(std::fabs(rd.logabs) < 1e-15);
}

TEST_CASE("lu_log_abs_det matches cofactor expansion") {
  RngState rng(11);
  for (std::size_t d : {4u, 8u}) {
    Tensor m({d, d}, sample_standard_normal(rng, d * d).values());
    LogDet r = lu_log_abs_det(m);
    double det = cofactor_det(m);
    CHECK(r.sign == (det > 0 ? 1 : -1));
    CHECK(std::fabs(r.logabs - std::log(std::fabs(det))) < 1e-10);
  }
}

TEST_CASE("lu_log_abs_det error and singular contracts") {
  CHECK_THROWS_AS(lu_log_abs_det(Tensor({2, 3})), std::invalid_argument);
  Tensor singular({3, 3});
  singular.at2(0, 0) = 1.0;
  singular.at2(1, 1) = 1.0;  // last row all zero
  LogDet r = lu_log_abs_det(singular);
  CHECK(r.sign == 0);
  CHECK(std::isinf(r.logabs));
  CHECK(r.logabs < 0);
}

TEST_CASE("log determinants add and signs multiply under composition") {
  RngState rng(13);
  for (int trial = 0; trial < 20; ++trial) {
    Tensor a({6, 6}, sample_standard_normal(rng, 36).values());
    Tensor b({6, 6}, sample_standard_normal(rng, 36).values());
    Tensor ab({6, 6});
    for (std::size_t i = 0; i < 6; ++i)
      for (std::size_t j = 0; j < 6; ++j) {
        double acc = 0.0;
        for (std::size_t k = 0; k < 6; ++k) acc += a.at2(i, k) * b.at2(k, j);
        ab.at2(i, j) = acc;
      }
    LogDet la = lu_log_abs_det(a), lb = lu_log_abs_det(b), lab = lu_log_abs_det(ab);
    CHECK(la.sign * lb.sign == lab.sign);
    CHECK(std::fabs(la.logabs + lb.logabs - lab.logabs) < 1e-10);
  }
}

TEST_CASE("xoshiro stream is stable across builds") {
  // Frozen reference draws for seed 1; documents the PRNG contract.
  RngState rng(1);
  const std::uint64_t expected[4] = {12966619160104079557ULL, 9600361134598540522ULL,
                                     10590380919521690900ULL, 7218738570589545383ULL};
  for (std::uint64_t e : expected) CHECK(rng.next_u64() == e);
}
