#pragma once

#include <array>
#include <functional>
#include <string>

#include "crow/numerics.hpp"
#include "crow/tensor.hpp"

namespace crow {

// Each component below exposes a forward map plus an exact pullback
// (vector-Jacobian product). Caches hold exactly what the pullback needs;
// the same parameter structs double as gradient accumulators.

struct DenseParams {
  Tensor weight;  // out x in
  Tensor bias;    // out
};

struct GruParams {
  Tensor wz, wr, wh;  // hidden x in
  Tensor uz, ur, uh;  // hidden x hidden
  Tensor bz, br, bh;  // hidden
  std::size_t input_width() const { return wz.cols(); }
  std::size_t hidden_width() const { return wz.rows(); }
};

struct SubnetParams {
  GruParams gru;
  std::array<DenseParams, 3> trunk;  // residual, square, width == hidden
  DenseParams head;                  // hidden -> 2 * d_out, concatenated [s, r]
  std::size_t d_out() const { return head.weight.rows() / 2; }
};

struct GateParams {
  DenseParams lin;  // hidden -> gated width; sigmoid applied downstream
};

double sigmoid(double x);
// log(sigmoid(x)) without overflow for |x| up to ~700.
double log_sigmoid(double x);

/// Smooth scale clamp s_max * tanh(s / s_max); keeps |s| < s_max so exp(s)
/// stays within [e^-s_max, e^s_max] and inversion never divides by ~0.
Tensor s_clamp(const Tensor& s_raw, double s_max = 2.0);

Tensor dense_apply(const DenseParams& p, const Tensor& x);
// Accumulates into grad; returns dL/dx given dL/dy and the forward input.
Tensor dense_backward(const DenseParams& p, const Tensor& x, const Tensor& dy, DenseParams& grad);

struct StackCache {
  std::array<Tensor, 3> input;  // x entering layer i
  std::array<Tensor, 3> pre;    // pre-activation of layer i
};

// x <- x + relu(W_i x + b_i) for i = 1..3
Tensor residual_stack_apply(const std::array<DenseParams, 3>& layers, const Tensor& x,
                            StackCache* cache = nullptr);
Tensor residual_stack_backward(const std::array<DenseParams, 3>& layers, const StackCache& cache,
                               const Tensor& dy, std::array<DenseParams, 3>& grad);

struct GruCache {
  Tensor x, h_prev;
  Tensor zg, rg, hc;  // update gate, reset gate, candidate
};

// z = sig(Wz x + Uz h + bz); r = sig(Wr x + Ur h + br);
// hc = tanh(Wh x + Uh (r*h) + bh); h' = (1-z)*hc + z*h_prev
Tensor gru_step(const GruParams& p, const Tensor& x, const Tensor& h_prev,
                GruCache* cache = nullptr);
void gru_backward(const GruParams& p, const GruCache& cache, const Tensor& dh_new, Tensor& dx,
                  Tensor& dh_prev, GruParams& grad);

struct SubnetCache {
  GruCache gru;
  StackCache trunk;
  Tensor h_new, trunk_out, s_raw;
};

struct SubnetOut {
  Tensor s, r, h_new;
};

/// Glow-style combined subnetwork: the GRU advances the hidden state, the
/// residual trunk reads the fresh state, and the head emits one vector split
/// as [s | r]. s comes back clamped (see s_clamp).
SubnetOut subnet_apply(const SubnetParams& p, const Tensor& u, const Tensor& h_prev, double s_max,
                       SubnetCache* cache = nullptr);
void subnet_backward(const SubnetParams& p, const SubnetCache& cache, double s_max,
                     const Tensor& ds, const Tensor& dr, const Tensor& dh_new, Tensor& du,
                     Tensor& dh_prev, SubnetParams& grad);

struct GateCache {
  Tensor h_in, pre, g;
};

// sig(W h + b); every entry strictly in (0, 1). log-gate is taken from the
// pre-activation so it stays finite even when g rounds to 1.0.
Tensor gate_apply(const GateParams& p, const Tensor& h, GateCache* cache = nullptr);
void gate_backward(const GateParams& p, const GateCache& cache, const Tensor& dg, Tensor& dh,
                   GateParams& grad);

// --- initialization -------------------------------------------------------

// Glorot-style uniform(+-sqrt(6/(in+out))); `zero` gives the identity-flow
// start used for subnet heads.
DenseParams make_dense(std::size_t out, std::size_t in, RngState& rng, bool zero = false);
GruParams make_gru(std::size_t in, std::size_t hidden, RngState& rng);
SubnetParams make_subnet(std::size_t in, std::size_t hidden, std::size_t d_out, RngState& rng);
// Gate bias starts at +5 so initial gates ~ 0.9933 (near-identity flow).
GateParams make_gate(std::size_t in, std::size_t out, RngState& rng);

// --- Adam ------------------------------------------------------------------

struct AdamHyper {
  double lr = 5e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  Tensor m, v;
  long t = 0;
};

// Standard bias-corrected Adam update, in place. Throws on non-finite grads.
void adam_step(Tensor& params, const Tensor& grads, AdamState& state, const AdamHyper& hyper);

// --- parameter traversal ---------------------------------------------------

using ParamVisitor = std::function<void(const std::string&, Tensor&)>;
using ConstParamVisitor = std::function<void(const std::string&, const Tensor&)>;

void visit_params(DenseParams& p, const std::string& prefix, const ParamVisitor& fn);
void visit_params(GruParams& p, const std::string& prefix, const ParamVisitor& fn);
void visit_params(SubnetParams& p, const std::string& prefix, const ParamVisitor& fn);
void visit_params(GateParams& p, const std::string& prefix, const ParamVisitor& fn);

}  // namespace crow
