#include <cmath>

#include "crow/coupling.hpp"
#include "doctest.h"
#include "test_helpers.hpp"

using namespace crow;
using crow::testing::max_rel_err;
using crow::testing::uniform_tensor;

namespace {

void randomize(CouplingBlockParams& block, RngState& rng, double scale = 0.5) {
  visit_params(block, "b", [&](const std::string&, Tensor& t) {
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = (2.0 * rng.next_uniform() - 1.0) * scale;
  });
}

// The block as a plain map of [u1 | u2] at fixed hidden states.
VectorMap block_map(const CouplingBlockParams& block, std::size_t d1, std::size_t d2,
                    const Tensor& ha, const Tensor& hb) {
  return [&block, d1, d2, ha, hb](const Tensor& in) {
    BlockForwardResult r =
        block_forward(block, segment(in, 0, d1), segment(in, d1, d2), ha, hb, 2.0);
    return concat(r.v1, r.v2);
  };
}

}  // namespace

TEST_CASE("layer_logdet_terms arithmetic") {
  CHECK(layer_logdet_terms(Tensor({2}), Tensor::of({1.0, 1.0})) == 0.0);
  CHECK(layer_logdet_terms(Tensor::of({0.5, -0.5}), Tensor::of({1.0, 1.0})) == 0.0);
  double got = layer_logdet_terms(Tensor::of({1.0, 2.0}), Tensor::of({0.5, 0.25}));
  CHECK(got == doctest::Approx(3.0 + std::log(0.125)).epsilon(1e-12));
  CHECK(got == doctest::Approx(0.9206).epsilon(1e-4));
  CHECK_THROWS_AS(layer_logdet_terms(Tensor({1}), Tensor::of({0.0})), std::domain_error);
}

TEST_CASE("identity-initialized block is the identity with zero logdet") {
  RngState rng(1);
  CouplingBlockParams block = make_coupling_block(3, 3, 5, rng);
  // push the gates into saturation so g == 1 at f64 resolution
  block.layer_a.gate.lin.bias.fill(50.0);
  block.layer_b.gate.lin.bias.fill(50.0);
  Tensor u1 = uniform_tensor({3}, rng, 1.0), u2 = uniform_tensor({3}, rng, 1.0);
  Tensor h({5});
  BlockForwardResult r = block_forward(block, u1, u2, h, h, 2.0);
  CHECK(max_abs_diff(r.v1, u1) == 0.0);
  CHECK(max_abs_diff(r.v2, u2) == 0.0);
  CHECK(std::fabs(r.logdet) < 1e-12);

  BlockInverseResult inv = block_inverse(block, r.v1, r.v2, h, h, 2.0);
  CHECK(max_abs_diff(inv.u1, u1) == 0.0);
  CHECK(max_abs_diff(inv.u2, u2) == 0.0);
}

TEST_CASE("half-open gates give the analytic gate determinant") {
  RngState rng(2);
  CouplingBlockParams block = make_coupling_block(2, 2, 4, rng);
  // zero subnets, gate weight 0 bias 0 -> g = 0.5 everywhere
  block.layer_a.gate.lin.bias.fill(0.0);
  block.layer_b.gate.lin.bias.fill(0.0);
  Tensor u1 = uniform_tensor({2}, rng, 1.0), u2 = uniform_tensor({2}, rng, 1.0);
  Tensor h({4});
  BlockForwardResult r = block_forward(block, u1, u2, h, h, 2.0);
  CHECK(max_abs_diff(r.v1, scaled(u1, 0.5)) < 1e-15);
  CHECK(max_abs_diff(r.v2, scaled(u2, 0.5)) < 1e-15);
  CHECK(r.logdet == doctest::Approx(4.0 * std::log(0.5)).epsilon(1e-12));
  CHECK(r.logdet == doctest::Approx(-2.7726).epsilon(1e-4));
}

TEST_CASE("block logdet matches the LU-of-finite-difference oracle at d = 6") {
  RngState rng(3);
  for (int trial = 0; trial < 10; ++trial) {
    CouplingBlockParams block = make_coupling_block(3, 3, 5, rng);
    randomize(block, rng, 0.4);
    Tensor ha = uniform_tensor({5}, rng, 0.4), hb = uniform_tensor({5}, rng, 0.4);
    Tensor u1 = uniform_tensor({3}, rng, 1.0), u2 = uniform_tensor({3}, rng, 1.0);
    BlockForwardResult r = block_forward(block, u1, u2, ha, hb, 2.0);
    Tensor jac = finite_difference_jacobian(block_map(block, 3, 3, ha, hb), concat(u1, u2));
    LogDet lu = lu_log_abs_det(jac);
    CHECK(lu.sign == 1);
    CHECK(std::fabs(r.logdet - lu.logabs) < 1e-4);
  }
}

TEST_CASE("round trip holds across widths and 1000 random trials") {
  RngState rng(4);
  double worst = 0.0;
  for (std::size_t d : {2u, 4u, 8u, 16u}) {
    const std::size_t d1 = d / 2, d2 = d - d1;
    for (int trial = 0; trial < 250; ++trial) {
      CouplingBlockParams block = make_coupling_block(d1, d2, 6, rng);
      randomize(block, rng, 0.5);
      Tensor u1 = sample_standard_normal(rng, d1), u2 = sample_standard_normal(rng, d2);
      Tensor ha = uniform_tensor({6}, rng, 0.5), hb = uniform_tensor({6}, rng, 0.5);
      BlockForwardResult fwd = block_forward(block, u1, u2, ha, hb, 2.0);
      BlockInverseResult inv = block_inverse(block, fwd.v1, fwd.v2, ha, hb, 2.0);
      worst = std::max({worst, max_abs_diff(inv.u1, u1), max_abs_diff(inv.u2, u2)});
      // the inverse must also reproduce the forward pass's updated hiddens
      worst = std::max({worst, max_abs_diff(inv.h_a, fwd.h_a), max_abs_diff(inv.h_b, fwd.h_b)});
    }
  }
  CHECK(worst < 1e-9);
}

TEST_CASE("mismatched hidden states break reconstruction (negative control)") {
  RngState rng(5);
  int broken = 0;
  for (int trial = 0; trial < 20; ++trial) {
    CouplingBlockParams block = make_coupling_block(4, 4, 6, rng);
    randomize(block, rng, 0.8);
    Tensor u1 = sample_standard_normal(rng, 4), u2 = sample_standard_normal(rng, 4);
    Tensor ha = uniform_tensor({6}, rng, 0.8), hb = uniform_tensor({6}, rng, 0.8);
    BlockForwardResult fwd = block_forward(block, u1, u2, ha, hb, 2.0);
    Tensor ha_bad = add(ha, uniform_tensor({6}, rng, 0.5));
    Tensor hb_bad = add(hb, uniform_tensor({6}, rng, 0.5));
    BlockInverseResult inv = block_inverse(block, fwd.v1, fwd.v2, ha_bad, hb_bad, 2.0);
    double err = std::max(max_abs_diff(inv.u1, u1), max_abs_diff(inv.u2, u2));
    if (err > 1e-3) ++broken;
  }
  CHECK(broken >= 19);  // hidden-state dependence is load-bearing
}

TEST_CASE("layer Jacobian is triangular with a diagonal gate block") {
  RngState rng(6);
  const std::size_t dt = 3, dc = 3, hidden = 5;
  CouplingLayerParams layer = make_coupling_layer(dt, dc, hidden, rng);
  visit_params(layer, "l", [&](const std::string&, Tensor& t) {
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = (2.0 * rng.next_uniform() - 1.0) * 0.5;
  });
  Tensor h = uniform_tensor({hidden}, rng, 0.5);
  auto map = [&](const Tensor& in) {
    LayerResult r = layer_forward(layer, segment(in, 0, dt), segment(in, dt, dc), h, 2.0);
    return concat(r.yt, r.yc);
  };
  Tensor jac = finite_difference_jacobian(map, uniform_tensor({dt + dc}, rng, 1.0));
  // gated (bypassed) half: no dependence on the transformed half...
  for (std::size_t i = 0; i < dc; ++i)
    for (std::size_t j = 0; j < dt; ++j) CHECK(std::fabs(jac.at2(dt + i, j)) < 1e-8);
  // ...and a strictly diagonal block w.r.t. itself
  for (std::size_t i = 0; i < dc; ++i)
    for (std::size_t j = 0; j < dc; ++j) {
      if (i != j) CHECK(std::fabs(jac.at2(dt + i, dt + j)) < 1e-8);
    }
}

TEST_CASE("determinant chaining across two stacked blocks") {
  RngState rng(7);
  const std::size_t d1 = 3, d2 = 3;
  CouplingBlockParams b0 = make_coupling_block(d1, d2, 5, rng);
  CouplingBlockParams b1 = make_coupling_block(d1, d2, 5, rng);
  randomize(b0, rng, 0.4);
  randomize(b1, rng, 0.4);
  Tensor h0a = uniform_tensor({5}, rng, 0.4), h0b = uniform_tensor({5}, rng, 0.4);
  Tensor h1a = uniform_tensor({5}, rng, 0.4), h1b = uniform_tensor({5}, rng, 0.4);
  Tensor u1 = uniform_tensor({d1}, rng, 1.0), u2 = uniform_tensor({d2}, rng, 1.0);

  BlockForwardResult r0 = block_forward(b0, u1, u2, h0a, h0b, 2.0);
  BlockForwardResult r1 = block_forward(b1, r0.v1, r0.v2, h1a, h1b, 2.0);
  const double per_block_sum = r0.logdet + r1.logdet;

  auto composed = [&](const Tensor& in) {
    BlockForwardResult s0 =
        block_forward(b0, segment(in, 0, d1), segment(in, d1, d2), h0a, h0b, 2.0);
    BlockForwardResult s1 = block_forward(b1, s0.v1, s0.v2, h1a, h1b, 2.0);
    return concat(s1.v1, s1.v2);
  };
  LogDet lu = lu_log_abs_det(finite_difference_jacobian(composed, concat(u1, u2)));
  CHECK(std::fabs(per_block_sum - lu.logabs) < 1e-4);
}

TEST_CASE("inversion refuses numerically singular gates") {
  RngState rng(8);
  CouplingBlockParams block = make_coupling_block(2, 2, 4, rng);
  block.layer_b.gate.lin.bias.fill(-800.0);  // sigmoid underflows to 0
  Tensor v1 = uniform_tensor({2}, rng, 1.0), v2 = uniform_tensor({2}, rng, 1.0);
  Tensor h({4});
  CHECK_THROWS_WITH_AS(block_inverse(block, v1, v2, h, h, 2.0), doctest::Contains("singular"),
                       std::runtime_error);
}

TEST_CASE("block pullback matches finite differences on inputs and hiddens") {
  RngState rng(9);
  const std::size_t d1 = 3, d2 = 2, hidden = 4;
  CouplingBlockParams block = make_coupling_block(d1, d2, hidden, rng);
  randomize(block, rng, 0.5);
  Tensor u1 = uniform_tensor({d1}, rng, 1.0), u2 = uniform_tensor({d2}, rng, 1.0);
  Tensor ha = uniform_tensor({hidden}, rng, 0.5), hb = uniform_tensor({hidden}, rng, 0.5);
  Tensor w1 = uniform_tensor({d1}, rng, 1.0), w2 = uniform_tensor({d2}, rng, 1.0);
  Tensor wha = uniform_tensor({hidden}, rng, 1.0), whb = uniform_tensor({hidden}, rng, 1.0);

  BlockCache cache;
  block_forward(block, u1, u2, ha, hb, 2.0, &cache);
  CouplingBlockParams grads = block;
  visit_params(grads, "g", [](const std::string&, Tensor& t) { t.fill(0.0); });
  Tensor du1({d1}), du2({d2}), dha({hidden}), dhb({hidden});
  block_backward(block, cache, 2.0, w1, w2, wha, whb, du1, du2, dha, dhb, grads);

  auto project = [&](const BlockForwardResult& r) {
    return dot(w1, r.v1) + dot(w2, r.v2) + dot(wha, r.h_a) + dot(whb, r.h_b);
  };
  auto loss_u1 = [&](const Tensor& v) { return project(block_forward(block, v, u2, ha, hb, 2.0)); };
  CHECK(max_rel_err(du1, finite_difference_gradient(loss_u1, u1)) < 1e-5);
  auto loss_u2 = [&](const Tensor& v) { return project(block_forward(block, u1, v, ha, hb, 2.0)); };
  CHECK(max_rel_err(du2, finite_difference_gradient(loss_u2, u2)) < 1e-5);
  auto loss_ha = [&](const Tensor& v) { return project(block_forward(block, u1, u2, v, hb, 2.0)); };
  CHECK(max_rel_err(dha, finite_difference_gradient(loss_ha, ha)) < 1e-5);
  auto loss_hb = [&](const Tensor& v) { return project(block_forward(block, u1, u2, ha, v, 2.0)); };
  CHECK(max_rel_err(dhb, finite_difference_gradient(loss_hb, hb)) < 1e-5);
}

TEST_CASE("inverse-pass pullback matches finite differences") {
  RngState rng(10);
  const std::size_t d1 = 3, d2 = 2, hidden = 4;
  CouplingBlockParams block = make_coupling_block(d1, d2, hidden, rng);
  randomize(block, rng, 0.5);
  Tensor v1 = uniform_tensor({d1}, rng, 1.0), v2 = uniform_tensor({d2}, rng, 1.0);
  Tensor ha = uniform_tensor({hidden}, rng, 0.5), hb = uniform_tensor({hidden}, rng, 0.5);
  Tensor w1 = uniform_tensor({d1}, rng, 1.0), w2 = uniform_tensor({d2}, rng, 1.0);

  BlockCache cache;
  block_inverse(block, v1, v2, ha, hb, 2.0, &cache);
  CouplingBlockParams grads = block;
  visit_params(grads, "g", [](const std::string&, Tensor& t) { t.fill(0.0); });
  Tensor dv1({d1}), dv2({d2}), dha({hidden}), dhb({hidden});
  Tensor zero_ha({hidden}), zero_hb({hidden});
  block_inverse_backward(block, cache, 2.0, w1, w2, zero_ha, zero_hb, dv1, dv2, dha, dhb, grads);

  auto project = [&](const BlockInverseResult& r) { return dot(w1, r.u1) + dot(w2, r.u2); };
  auto loss_v1 = [&](const Tensor& v) { return project(block_inverse(block, v, v2, ha, hb, 2.0)); };
  CHECK(max_rel_err(dv1, finite_difference_gradient(loss_v1, v1)) < 1e-5);
  auto loss_v2 = [&](const Tensor& v) { return project(block_inverse(block, v1, v, ha, hb, 2.0)); };
  CHECK(max_rel_err(dv2, finite_difference_gradient(loss_v2, v2)) < 1e-5);
  auto loss_ha = [&](const Tensor& v) { return project(block_inverse(block, v1, v2, v, hb, 2.0)); };
  CHECK(max_rel_err(dha, finite_difference_gradient(loss_ha, ha)) < 1e-5);
  auto loss_hb = [&](const Tensor& v) { return project(block_inverse(block, v1, v2, ha, v, 2.0)); };
  CHECK(max_rel_err(dhb, finite_difference_gradient(loss_hb, hb)) < 1e-5);

  // parameter gradients through the inverse path, spot-checked on one tensor
  Tensor& param = block.layer_a.subnet.head.weight;
  Tensor& grad = grads.layer_a.subnet.head.weight;
  auto loss_p = [&](const Tensor& v) {
    Tensor saved = param;
    for (std::size_t i = 0; i < v.size(); ++i) param[i] = v[i];
    double out = project(block_inverse(block, v1, v2, ha, hb, 2.0));
    param = saved;
    return out;
  };
  Tensor flat({param.size()}, param.values());
  CHECK(max_rel_err(Tensor({grad.size()}, grad.values()), finite_difference_gradient(loss_p, flat)) <
        1e-5);
}

TEST_CASE("scale clamp bounds every diagonal factor") {
  RngState rng(11);
  for (int trial = 0; trial < 100; ++trial) {
    CouplingBlockParams block = make_coupling_block(3, 3, 4, rng);
    randomize(block, rng, 3.0);  // deliberately wild parameters
    Tensor u1 = sample_standard_normal(rng, 3), u2 = sample_standard_normal(rng, 3);
    Tensor ha = uniform_tensor({4}, rng, 1.0), hb = uniform_tensor({4}, rng, 1.0);
    BlockCache cache;
    block_forward(block, u1, u2, ha, hb, 2.0, &cache);
    for (const LayerCache* lc : {&cache.a, &cache.b}) {
      CHECK(max_abs(lc->s) <= 2.0);  // == 2.0 only at f64 tanh saturation
      for (std::size_t i = 0; i < lc->s.size(); ++i) {
        CHECK(std::exp(lc->s[i]) >= std::exp(-2.0));
        CHECK(std::exp(lc->s[i]) <= std::exp(2.0));
      }
    }
  }
}
