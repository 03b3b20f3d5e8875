#include "crow/coupling.hpp"

#include <cmath>

namespace crow {

namespace {

constexpr double kSingularFloor = 1e-300;

double gate_log_term(const GateCache& gate) {
  double acc = 0.0;
  for (std::size_t i = 0; i < gate.pre.size(); ++i) acc += log_sigmoid(gate.pre[i]);
  return acc;
}

void check_layer_widths(const CouplingLayerParams& p, std::size_t dt, std::size_t dc,
                        const char* where) {
  if (p.subnet.d_out() != dt) {
    throw std::invalid_argument(std::string(where) + ": subnet d_out " +
                                std::to_string(p.subnet.d_out()) +
                                " does not match transformed width " + std::to_string(dt));
  }
  if (p.gate.lin.weight.rows() != dc) {
    throw std::invalid_argument(std::string(where) + ": gate width " +
                                std::to_string(p.gate.lin.weight.rows()) +
                                " does not match gated width " + std::to_string(dc));
  }
}

}  // namespace

double layer_logdet_terms(const Tensor& s, const Tensor& gates) {
  double acc = sum(s);
  for (std::size_t i = 0; i < gates.size(); ++i) {
    if (gates[i] <= 0.0) {
      throw std::domain_error("layer_logdet_terms: gate value " + std::to_string(gates[i]) +
                              " at index " + std::to_string(i) + " is not in (0, 1]");
    }
    acc += std::log(gates[i]);
  }
  return acc;
}

LayerResult layer_forward(const CouplingLayerParams& p, const Tensor& xt, const Tensor& xc,
                          const LayerHidden& h_prev, double s_max, LayerCache* cache) {
  check_layer_widths(p, xt.width(), xc.width(), "layer_forward");
  LayerCache local;
  LayerCache* c = cache ? cache : &local;
  SubnetOut sub = subnet_apply(p.subnet, xc, h_prev, s_max, &c->subnet);
  Tensor g = gate_apply(p.gate, h_prev, &c->gate);

  LayerResult out;
  out.yt = Tensor({xt.width()});
  for (std::size_t i = 0; i < xt.width(); ++i) {
    out.yt[i] = xt[i] * std::exp(sub.s[i]) + sub.r[i];
  }
  out.yc = mul(xc, g);
  out.h_new = sub.h_new;
  out.logdet = sum(sub.s) + gate_log_term(c->gate);
  out.yt.require_finite("layer_forward: transformed half");
  out.yc.require_finite("layer_forward: gated half");

  c->xt = xt;
  c->xc = xc;
  c->s = sub.s;
  c->r = sub.r;
  c->g = g;
  return out;
}

LayerInverseResult layer_inverse(const CouplingLayerParams& p, const Tensor& yt, const Tensor& yc,
                                 const LayerHidden& h_prev, double s_max, LayerCache* cache) {
  check_layer_widths(p, yt.width(), yc.width(), "layer_inverse");
  LayerCache local;
  LayerCache* c = cache ? cache : &local;

  // The gate depends only on the carried-in hidden state, so it is available
  // before anything has been recovered.
  Tensor g = gate_apply(p.gate, h_prev, &c->gate);
  Tensor xc({yc.width()});
  for (std::size_t i = 0; i < yc.width(); ++i) {
    if (g[i] < kSingularFloor) {
      throw std::runtime_error("layer_inverse: gate factor " + std::to_string(g[i]) +
                               " at index " + std::to_string(i) + " is numerically singular");
    }
    xc[i] = yc[i] / g[i];
  }

  SubnetOut sub = subnet_apply(p.subnet, xc, h_prev, s_max, &c->subnet);
  Tensor xt({yt.width()});
  for (std::size_t i = 0; i < yt.width(); ++i) {
    double scale = std::exp(sub.s[i]);
    if (scale < kSingularFloor) {
      throw std::runtime_error("layer_inverse: scale factor exp(s) underflow at index " +
                               std::to_string(i));
    }
    xt[i] = (yt[i] - sub.r[i]) / scale;
  }

  c->xt = xt;
  c->xc = xc;
  c->s = sub.s;
  c->r = sub.r;
  c->g = g;
  return {xt, xc, sub.h_new};
}

void layer_backward(const CouplingLayerParams& p, const LayerCache& cache, double s_max,
                    const Tensor& dyt, const Tensor& dyc, const Tensor& dh_new, Tensor& dxt,
                    Tensor& dxc, Tensor& dh_prev, CouplingLayerParams& grad) {
  const std::size_t dt = cache.xt.width();
  // yt = xt * exp(s) + r
  Tensor ds({dt}), dr({dt});
  for (std::size_t i = 0; i < dt; ++i) {
    double es = std::exp(cache.s[i]);
    dxt[i] += dyt[i] * es;
    ds[i] = dyt[i] * cache.xt[i] * es;
    dr[i] = dyt[i];
  }
  // yc = xc * g
  Tensor dg({cache.xc.width()});
  for (std::size_t i = 0; i < cache.xc.width(); ++i) {
    dxc[i] += dyc[i] * cache.g[i];
    dg[i] = dyc[i] * cache.xc[i];
  }
  gate_backward(p.gate, cache.gate, dg, dh_prev, grad.gate);
  subnet_backward(p.subnet, cache.subnet, s_max, ds, dr, dh_new, dxc, dh_prev, grad.subnet);
}

void layer_inverse_backward(const CouplingLayerParams& p, const LayerCache& cache, double s_max,
                            const Tensor& dxt, const Tensor& dxc, const Tensor& dh_new,
                            Tensor& dyt, Tensor& dyc, Tensor& dh_prev,
                            CouplingLayerParams& grad) {
  const std::size_t dt = cache.xt.width();
  // xt = (yt - r) * exp(-s): d/dyt = exp(-s), d/dr = -exp(-s), d/ds = -xt
  Tensor ds({dt}), dr({dt});
  for (std::size_t i = 0; i < dt; ++i) {
    double ies = std::exp(-cache.s[i]);
    dyt[i] += dxt[i] * ies;
    dr[i] = -dxt[i] * ies;
    ds[i] = -dxt[i] * cache.xt[i];
  }
  // The subnet consumed the recovered xc, so its input gradient joins dxc
  // before the gate division is unwound.
  Tensor dxc_total = dxc;
  subnet_backward(p.subnet, cache.subnet, s_max, ds, dr, dh_new, dxc_total, dh_prev, grad.subnet);
  // xc = yc / g: d/dyc = 1/g, d/dg = -xc/g
  Tensor dg({cache.xc.width()});
  for (std::size_t i = 0; i < cache.xc.width(); ++i) {
    dyc[i] += dxc_total[i] / cache.g[i];
    dg[i] = -dxc_total[i] * cache.xc[i] / cache.g[i];
  }
  gate_backward(p.gate, cache.gate, dg, dh_prev, grad.gate);
}

BlockForwardResult block_forward(const CouplingBlockParams& p, const Tensor& u1, const Tensor& u2,
                                 const LayerHidden& h_a, const LayerHidden& h_b, double s_max,
                                 BlockCache* cache) {
  BlockCache local;
  BlockCache* c = cache ? cache : &local;
  LayerResult a = layer_forward(p.layer_a, u1, u2, h_a, s_max, &c->a);
  // a.yt = v1 (pre gate-B), a.yc = gated u2
  LayerResult b = layer_forward(p.layer_b, a.yc, a.yt, h_b, s_max, &c->b);
  BlockForwardResult out;
  out.v1 = b.yc;  // v1 after layer B's gate
  out.v2 = b.yt;
  out.h_a = a.h_new;
  out.h_b = b.h_new;
  out.logdet = a.logdet + b.logdet;
  return out;
}

BlockInverseResult block_inverse(const CouplingBlockParams& p, const Tensor& v1, const Tensor& v2,
                                 const LayerHidden& h_a, const LayerHidden& h_b, double s_max,
                                 BlockCache* cache) {
  BlockCache local;
  BlockCache* c = cache ? cache : &local;
  // Undo layer B: recover pre-gate v1 and the gated u2.
  LayerInverseResult b = layer_inverse(p.layer_b, v2, v1, h_b, s_max, &c->b);
  // Undo layer A: b.xc is pre-gate v1, b.xt is gated u2.
  LayerInverseResult a = layer_inverse(p.layer_a, b.xc, b.xt, h_a, s_max, &c->a);
  return {a.xt, a.xc, a.h_new, b.h_new};
}

void block_backward(const CouplingBlockParams& p, const BlockCache& cache, double s_max,
                    const Tensor& dv1, const Tensor& dv2, const Tensor& dh_a_new,
                    const Tensor& dh_b_new, Tensor& du1, Tensor& du2, Tensor& dh_a, Tensor& dh_b,
                    CouplingBlockParams& grad) {
  // Reverse of: A then B. Layer B consumed (xt = gated u2, xc = pre-gate v1).
  Tensor d_gated_u2(cache.b.xt.shape());
  Tensor d_v1_pre(cache.b.xc.shape());
  layer_backward(p.layer_b, cache.b, s_max, dv2, dv1, dh_b_new, d_gated_u2, d_v1_pre, dh_b,
                 grad.layer_b);
  layer_backward(p.layer_a, cache.a, s_max, d_v1_pre, d_gated_u2, dh_a_new, du1, du2, dh_a,
                 grad.layer_a);
}

void block_inverse_backward(const CouplingBlockParams& p, const BlockCache& cache, double s_max,
                            const Tensor& du1, const Tensor& du2, const Tensor& dh_a_new,
                            const Tensor& dh_b_new, Tensor& dv1, Tensor& dv2, Tensor& dh_a,
                            Tensor& dh_b, CouplingBlockParams& grad) {
  // Inverse ran: layer B undo, then layer A undo; unwind layer A first.
  Tensor d_v1_pre(cache.a.xt.shape());      // grad on layer A's yt (= pre-gate v1)
  Tensor d_gated_u2(cache.a.xc.shape());    // grad on layer A's yc (= gated u2)
  layer_inverse_backward(p.layer_a, cache.a, s_max, du1, du2, dh_a_new, d_v1_pre, d_gated_u2,
                         dh_a, grad.layer_a);
  layer_inverse_backward(p.layer_b, cache.b, s_max, d_gated_u2, d_v1_pre, dh_b_new, dv2, dv1,
                         dh_b, grad.layer_b);
}

CouplingLayerParams make_coupling_layer(std::size_t d_transform, std::size_t d_condition,
                                        std::size_t hidden, RngState& rng) {
  CouplingLayerParams p;
  p.subnet = make_subnet(d_condition, hidden, d_transform, rng);
  p.gate = make_gate(hidden, d_condition, rng);
  return p;
}

CouplingBlockParams make_coupling_block(std::size_t d1, std::size_t d2, std::size_t hidden,
                                        RngState& rng) {
  CouplingBlockParams p;
  p.layer_a = make_coupling_layer(d1, d2, hidden, rng);
  p.layer_b = make_coupling_layer(d2, d1, hidden, rng);
  return p;
}

void visit_params(CouplingLayerParams& p, const std::string& prefix, const ParamVisitor& fn) {
  visit_params(p.subnet, prefix + ".subnet", fn);
  visit_params(p.gate, prefix, fn);
}

void visit_params(CouplingBlockParams& p, const std::string& prefix, const ParamVisitor& fn) {
  visit_params(p.layer_a, prefix + ".layer_a", fn);
  visit_params(p.layer_b, prefix + ".layer_b", fn);
}

}  // namespace crow
