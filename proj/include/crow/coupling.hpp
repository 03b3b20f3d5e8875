#pragma once

#include "crow/nets.hpp"

namespace crow {

// Recurrent coupling layer: the subnet reads the conditioning half plus its
// hidden state and emits [s, r] to transform the other half; the temporal
// context gate scales the conditioning half element-wise. The gate reads the
// hidden state carried in from the previous timestep, which is what keeps the
// map exactly invertible and the Jacobian triangular with a diagonal gate
// block: at inversion time the gate factor is available before anything else
// has been recovered.
struct CouplingLayerParams {
  SubnetParams subnet;
  GateParams gate;
};

struct CouplingBlockParams {
  CouplingLayerParams layer_a;  // transforms partition 1 from partition 2
  CouplingLayerParams layer_b;  // transforms partition 2 from partition 1
};

using LayerHidden = Tensor;  // one recurrent state per coupling layer

struct LayerCache {
  SubnetCache subnet;
  GateCache gate;
  Tensor xt, xc, s, r, g;
};

struct LayerResult {
  Tensor yt;  // transformed half: xt * exp(s) + r
  Tensor yc;  // gated half:       xc * g
  LayerHidden h_new;
  double logdet = 0.0;  // sum(s) + sum(log g)
};

LayerResult layer_forward(const CouplingLayerParams& p, const Tensor& xt, const Tensor& xc,
                          const LayerHidden& h_prev, double s_max, LayerCache* cache = nullptr);

struct LayerInverseResult {
  Tensor xt, xc;
  LayerHidden h_new;
};

LayerInverseResult layer_inverse(const CouplingLayerParams& p, const Tensor& yt, const Tensor& yc,
                                 const LayerHidden& h_prev, double s_max,
                                 LayerCache* cache = nullptr);

// Pullback of layer_forward: (dyt, dyc, dh_new) -> (dxt, dxc, dh_prev),
// accumulating parameter gradients.
void layer_backward(const CouplingLayerParams& p, const LayerCache& cache, double s_max,
                    const Tensor& dyt, const Tensor& dyc, const Tensor& dh_new, Tensor& dxt,
                    Tensor& dxc, Tensor& dh_prev, CouplingLayerParams& grad);

// Pullback of layer_inverse: (dxt, dxc, dh_new) -> (dyt, dyc, dh_prev).
void layer_inverse_backward(const CouplingLayerParams& p, const LayerCache& cache, double s_max,
                            const Tensor& dxt, const Tensor& dxc, const Tensor& dh_new,
                            Tensor& dyt, Tensor& dyc, Tensor& dh_prev,
                            CouplingLayerParams& grad);

/// sum(s_i) + sum(log gate_j): the per-layer contribution to log|det J|.
double layer_logdet_terms(const Tensor& s, const Tensor& gates);

struct BlockCache {
  LayerCache a, b;
};

struct BlockForwardResult {
  Tensor v1, v2;
  LayerHidden h_a, h_b;
  double logdet = 0.0;
};

// Layer A transforms u1 from u2 and gates u2; layer B transforms the gated u2
// from v1 and gates v1. Widths: |u1| = d1, |u2| = d2.
BlockForwardResult block_forward(const CouplingBlockParams& p, const Tensor& u1, const Tensor& u2,
                                 const LayerHidden& h_a, const LayerHidden& h_b, double s_max,
                                 BlockCache* cache = nullptr);

struct BlockInverseResult {
  Tensor u1, u2;
  LayerHidden h_a, h_b;
};

// Exact algebraic inverse of block_forward given the same incoming hidden
// states; replays the identical subnet evaluations in reverse operation order
// and returns the same updated hidden states as the forward pass.
BlockInverseResult block_inverse(const CouplingBlockParams& p, const Tensor& v1, const Tensor& v2,
                                 const LayerHidden& h_a, const LayerHidden& h_b, double s_max,
                                 BlockCache* cache = nullptr);

void block_backward(const CouplingBlockParams& p, const BlockCache& cache, double s_max,
                    const Tensor& dv1, const Tensor& dv2, const Tensor& dh_a_new,
                    const Tensor& dh_b_new, Tensor& du1, Tensor& du2, Tensor& dh_a, Tensor& dh_b,
                    CouplingBlockParams& grad);

void block_inverse_backward(const CouplingBlockParams& p, const BlockCache& cache, double s_max,
                            const Tensor& du1, const Tensor& du2, const Tensor& dh_a_new,
                            const Tensor& dh_b_new, Tensor& dv1, Tensor& dv2, Tensor& dh_a,
                            Tensor& dh_b, CouplingBlockParams& grad);

CouplingLayerParams make_coupling_layer(std::size_t d_transform, std::size_t d_condition,
                                        std::size_t hidden, RngState& rng);
CouplingBlockParams make_coupling_block(std::size_t d1, std::size_t d2, std::size_t hidden,
                                        RngState& rng);

void visit_params(CouplingLayerParams& p, const std::string& prefix, const ParamVisitor& fn);
void visit_params(CouplingBlockParams& p, const std::string& prefix, const ParamVisitor& fn);

}  // namespace crow
