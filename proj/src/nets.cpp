#include "crow/nets.hpp"

#include <cmath>

namespace crow {

double sigmoid(double x) {
  if (x >= 0.0) {
    return 1.0 / (1.0 + std::exp(-x));
  }
  double e = std::exp(x);
  return e / (1.0 + e);
}

double log_sigmoid(double x) {
  // -log(1 + e^-x), split by sign to avoid overflow.
  if (x >= 0.0) return -std::log1p(std::exp(-x));
  return x - std::log1p(std::exp(x));
}

Tensor s_clamp(const Tensor& s_raw, double s_max) {
  Tensor out = s_raw;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = s_max * std::tanh(s_raw[i] / s_max);
  return out;
}

Tensor dense_apply(const DenseParams& p, const Tensor& x) {
  if (x.width() != p.weight.cols()) {
    throw std::invalid_argument("dense_apply: input width " + x.shape_str() +
                                " does not match weight " + p.weight.shape_str());
  }
  Tensor out = mat_vec(p.weight, x);
  add_inplace(out, p.bias);
  return out;
}

Tensor dense_backward(const DenseParams& p, const Tensor& x, const Tensor& dy,
                      DenseParams& grad) {
  add_outer(grad.weight, dy, x);
  add_inplace(grad.bias, dy);
  return mat_tvec(p.weight, dy);
}

Tensor residual_stack_apply(const std::array<DenseParams, 3>& layers, const Tensor& x,
                            StackCache* cache) {
  Tensor cur = x;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const auto& layer = layers[i];
    if (layer.weight.rows() != layer.weight.cols() || layer.weight.rows() != cur.width()) {
      throw std::invalid_argument("residual_stack_apply: layer " + std::to_string(i) +
                                  " must be square of width " + std::to_string(cur.width()) +
                                  ", got " + layer.weight.shape_str());
    }
    Tensor pre = dense_apply(layer, cur);
    if (cache) {
      cache->input[i] = cur;
      cache->pre[i] = pre;
    }
    for (std::size_t k = 0; k < pre.size(); ++k) {
      if (pre[k] > 0.0) cur[k] += pre[k];
    }
  }
  return cur;
}

Tensor residual_stack_backward(const std::array<DenseParams, 3>& layers, const StackCache& cache,
                               const Tensor& dy, std::array<DenseParams, 3>& grad) {
  Tensor dcur = dy;
  for (std::size_t ri = layers.size(); ri-- > 0;) {
    Tensor dpre = dcur;
    for (std::size_t k = 0; k < dpre.size(); ++k) {
      if (cache.pre[ri][k] <= 0.0) dpre[k] = 0.0;
    }
    Tensor dx = dense_backward(layers[ri], cache.input[ri], dpre, grad[ri]);
    add_inplace(dcur, dx);
  }
  return dcur;
}

Tensor gru_step(const GruParams& p, const Tensor& x, const Tensor& h_prev, GruCache* cache) {
  if (x.width() != p.input_width() || h_prev.width() != p.hidden_width()) {
    throw std::invalid_argument("gru_step: x " + x.shape_str() + " / h " + h_prev.shape_str() +
                                " do not match params (in=" + std::to_string(p.input_width()) +
                                ", hidden=" + std::to_string(p.hidden_width()) + ")");
  }
  const std::size_t hw = p.hidden_width();
  Tensor zg = add(add(mat_vec(p.wz, x), mat_vec(p.uz, h_prev)), p.bz);
  Tensor rg = add(add(mat_vec(p.wr, x), mat_vec(p.ur, h_prev)), p.br);
  for (std::size_t i = 0; i < hw; ++i) {
    zg[i] = sigmoid(zg[i]);
    rg[i] = sigmoid(rg[i]);
  }
  Tensor hc = add(add(mat_vec(p.wh, x), mat_vec(p.uh, mul(rg, h_prev))), p.bh);
  for (std::size_t i = 0; i < hw; ++i) hc[i] = std::tanh(hc[i]);
  Tensor h_new({hw});
  for (std::size_t i = 0; i < hw; ++i) {
    h_new[i] = (1.0 - zg[i]) * hc[i] + zg[i] * h_prev[i];
  }
  if (cache) {
    cache->x = x;
    cache->h_prev = h_prev;
    cache->zg = zg;
    cache->rg = rg;
    cache->hc = hc;
  }
  return h_new;
}

void gru_backward(const GruParams& p, const GruCache& cache, const Tensor& dh_new, Tensor& dx,
                  Tensor& dh_prev, GruParams& grad) {
  const std::size_t hw = p.hidden_width();
  const Tensor& zg = cache.zg;
  const Tensor& rg = cache.rg;
  const Tensor& hc = cache.hc;

  Tensor dhc({hw}), dzg({hw});
  for (std::size_t i = 0; i < hw; ++i) {
    dhc[i] = dh_new[i] * (1.0 - zg[i]);
    dzg[i] = dh_new[i] * (cache.h_prev[i] - hc[i]);
    dh_prev[i] += dh_new[i] * zg[i];
  }

  // candidate: hc = tanh(ah), ah = Wh x + Uh (r*h) + bh
  Tensor dah({hw});
  for (std::size_t i = 0; i < hw; ++i) dah[i] = dhc[i] * (1.0 - hc[i] * hc[i]);
  add_outer(grad.wh, dah, cache.x);
  Tensor rh = mul(rg, cache.h_prev);
  add_outer(grad.uh, dah, rh);
  add_inplace(grad.bh, dah);
  add_inplace(dx, mat_tvec(p.wh, dah));
  Tensor drh = mat_tvec(p.uh, dah);
  Tensor drg({hw});
  for (std::size_t i = 0; i < hw; ++i) {
    drg[i] = drh[i] * cache.h_prev[i];
    dh_prev[i] += drh[i] * rg[i];
  }

  // gates: sigmoid' = g * (1 - g)
  Tensor daz({hw}), dar({hw});
  for (std::size_t i = 0; i < hw; ++i) {
    daz[i] = dzg[i] * zg[i] * (1.0 - zg[i]);
    dar[i] = drg[i] * rg[i] * (1.0 - rg[i]);
  }
  add_outer(grad.wz, daz, cache.x);
  add_outer(grad.uz, daz, cache.h_prev);
  add_inplace(grad.bz, daz);
  add_outer(grad.wr, dar, cache.x);
  add_outer(grad.ur, dar, cache.h_prev);
  add_inplace(grad.br, dar);
  add_inplace(dx, mat_tvec(p.wz, daz));
  add_inplace(dx, mat_tvec(p.wr, dar));
  add_inplace(dh_prev, mat_tvec(p.uz, daz));
  add_inplace(dh_prev, mat_tvec(p.ur, dar));
}

SubnetOut subnet_apply(const SubnetParams& p, const Tensor& u, const Tensor& h_prev, double s_max,
                       SubnetCache* cache) {
  SubnetCache local;
  SubnetCache* c = cache ? cache : &local;
  Tensor h_new = gru_step(p.gru, u, h_prev, &c->gru);
  Tensor trunk_out = residual_stack_apply(p.trunk, h_new, &c->trunk);
  Tensor q = dense_apply(p.head, trunk_out);
  if (q.width() % 2 != 0) {
    throw std::invalid_argument("subnet_apply: head output width must be even, got " +
                                q.shape_str());
  }
  const std::size_t d_out = q.width() / 2;
  Tensor s_raw = segment(q, 0, d_out);
  Tensor r = segment(q, d_out, d_out);
  c->h_new = h_new;
  c->trunk_out = trunk_out;
  c->s_raw = s_raw;
  return {s_clamp(s_raw, s_max), r, h_new};
}

void subnet_backward(const SubnetParams& p, const SubnetCache& cache, double s_max,
                     const Tensor& ds, const Tensor& dr, const Tensor& dh_new, Tensor& du,
                     Tensor& dh_prev, SubnetParams& grad) {
  const std::size_t d_out = cache.s_raw.width();
  // s = s_max * tanh(s_raw / s_max) => ds_raw = ds * (1 - tanh^2)
  Tensor dq({2 * d_out});
  for (std::size_t i = 0; i < d_out; ++i) {
    double th = std::tanh(cache.s_raw[i] / s_max);
    dq[i] = ds[i] * (1.0 - th * th);
    dq[d_out + i] = dr[i];
  }
  Tensor dtrunk_out = dense_backward(p.head, cache.trunk_out, dq, grad.head);
  Tensor dh_total = residual_stack_backward(p.trunk, cache.trunk, dtrunk_out, grad.trunk);
  add_inplace(dh_total, dh_new);
  gru_backward(p.gru, cache.gru, dh_total, du, dh_prev, grad.gru);
}

Tensor gate_apply(const GateParams& p, const Tensor& h, GateCache* cache) {
  Tensor pre = dense_apply(p.lin, h);
  Tensor g = pre;
  for (std::size_t i = 0; i < g.size(); ++i) g[i] = sigmoid(pre[i]);
  if (cache) {
    cache->h_in = h;
    cache->pre = pre;
    cache->g = g;
  }
  return g;
}

void gate_backward(const GateParams& p, const GateCache& cache, const Tensor& dg, Tensor& dh,
                   GateParams& grad) {
  Tensor dpre = dg;
  for (std::size_t i = 0; i < dpre.size(); ++i) {
    dpre[i] *= cache.g[i] * (1.0 - cache.g[i]);
  }
  add_inplace(dh, dense_backward(p.lin, cache.h_in, dpre, grad.lin));
}

namespace {

Tensor glorot(std::size_t rows, std::size_t cols, RngState& rng) {
  Tensor t({rows, cols});
  const double bound = std::sqrt(6.0 / static_cast<double>(rows + cols));
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = (2.0 * rng.next_uniform() - 1.0) * bound;
  return t;
}

}  // namespace

DenseParams make_dense(std::size_t out, std::size_t in, RngState& rng, bool zero) {
  DenseParams p;
  p.weight = zero ? Tensor({out, in}) : glorot(out, in, rng);
  p.bias = Tensor({out});
  return p;
}

GruParams make_gru(std::size_t in, std::size_t hidden, RngState& rng) {
  GruParams p;
  p.wz = glorot(hidden, in, rng);
  p.wr = glorot(hidden, in, rng);
  p.wh = glorot(hidden, in, rng);
  p.uz = glorot(hidden, hidden, rng);
  p.ur = glorot(hidden, hidden, rng);
  p.uh = glorot(hidden, hidden, rng);
  p.bz = Tensor({hidden});
  p.br = Tensor({hidden});
  p.bh = Tensor({hidden});
  return p;
}

SubnetParams make_subnet(std::size_t in, std::size_t hidden, std::size_t d_out, RngState& rng) {
  SubnetParams p;
  p.gru = make_gru(in, hidden, rng);
  for (auto& layer : p.trunk) layer = make_dense(hidden, hidden, rng);
  p.head = make_dense(2 * d_out, hidden, rng, /*zero=*/true);
  return p;
}

GateParams make_gate(std::size_t in, std::size_t out, RngState& rng) {
  GateParams p;
  p.lin = make_dense(out, in, rng, /*zero=*/true);
  p.lin.bias.fill(5.0);
  return p;
}

void adam_step(Tensor& params, const Tensor& grads, AdamState& state, const AdamHyper& hyper) {
  if (params.shape() != grads.shape()) {
    throw std::invalid_argument("adam_step: params " + params.shape_str() + " vs grads " +
                                grads.shape_str());
  }
  if (!grads.all_finite()) {
    throw std::runtime_error("adam_step: non-finite gradient");
  }
  if (state.t == 0 && state.m.size() == 0) {
    state.m = Tensor::zeros(params.shape());
    state.v = Tensor::zeros(params.shape());
  }
  state.t += 1;
  const double b1 = hyper.beta1, b2 = hyper.beta2;
  const double corr1 = 1.0 - std::pow(b1, static_cast<double>(state.t));
  const double corr2 = 1.0 - std::pow(b2, static_cast<double>(state.t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grads[i];
    state.m[i] = b1 * state.m[i] + (1.0 - b1) * g;
    state.v[i] = b2 * state.v[i] + (1.0 - b2) * g * g;
    const double mhat = state.m[i] / corr1;
    const double vhat = state.v[i] / corr2;
    params[i] -= hyper.lr * mhat / (std::sqrt(vhat) + hyper.eps);
  }
}

void visit_params(DenseParams& p, const std::string& prefix, const ParamVisitor& fn) {
  fn(prefix + ".weight", p.weight);
  fn(prefix + ".bias", p.bias);
}

void visit_params(GruParams& p, const std::string& prefix, const ParamVisitor& fn) {
  fn(prefix + ".wz", p.wz);
  fn(prefix + ".wr", p.wr);
  fn(prefix + ".wh", p.wh);
  fn(prefix + ".uz", p.uz);
  fn(prefix + ".ur", p.ur);
  fn(prefix + ".uh", p.uh);
  fn(prefix + ".bz", p.bz);
  fn(prefix + ".br", p.br);
  fn(prefix + ".bh", p.bh);
}

void visit_params(SubnetParams& p, const std::string& prefix, const ParamVisitor& fn) {
  visit_params(p.gru, prefix + ".gru", fn);
  for (std::size_t i = 0; i < p.trunk.size(); ++i) {
    visit_params(p.trunk[i], prefix + ".trunk" + std::to_string(i), fn);
  }
  visit_params(p.head, prefix + ".head", fn);
}

void visit_params(GateParams& p, const std::string& prefix, const ParamVisitor& fn) {
  visit_params(p.lin, prefix + ".gate", fn);
}

}  // namespace crow
