#pragma once

#include <cstdint>
#include <vector>

#include "crow/coupling.hpp"

namespace crow {

enum class SplitKind { Halves, Checkerboard };

struct SplitScheme {
  SplitKind kind = SplitKind::Halves;
  std::size_t rows = 0, cols = 0;  // checkerboard grid; rows * cols == d_x
};

struct FlowConfig {
  std::size_t d_x = 0;      // input width
  std::size_t d_y = 0;      // covariate width
  std::size_t d_z = 0;      // latent width
  std::size_t d_total = 0;  // padded width
  std::size_t n_blocks = 1;
  std::size_t hidden = 16;  // GRU state width per coupling layer
  SplitScheme split;
  double s_max = 2.0;
  std::uint64_t seed = 0;

  std::size_t d_pad_out() const { return d_total - d_y - d_z; }
  void validate() const;
};

// Partition of the padded vector: index lists for the two coupling halves.
// Checkerboard assigns frame pixel (i, j) to partition 1 when (i + j) is
// even; padding channels alternate by flat index. Halves puts the first
// ceil(d/2) indices in partition 1.
struct SplitIndex {
  std::vector<std::size_t> part1, part2;
};

SplitIndex make_split_index(const SplitScheme& scheme, std::size_t d_x, std::size_t d_total);

std::pair<Tensor, Tensor> split_apply(const SplitIndex& idx, const Tensor& x);
Tensor split_merge(const SplitIndex& idx, const Tensor& x1, const Tensor& x2);

Tensor pad(const Tensor& x, std::size_t d_total);
Tensor unpad(const Tensor& v, std::size_t d_x);

struct FlowModel {
  FlowConfig config;
  std::vector<CouplingBlockParams> blocks;
  SplitIndex split_idx;  // derived from config, rebuilt on load
};

FlowModel init_model(const FlowConfig& config);

void visit_params(FlowModel& m, const ParamVisitor& fn);
void visit_params(const FlowModel& m, const ConstParamVisitor& fn);
// Gradient container shaped like the model, all zeros.
FlowModel zero_like(const FlowModel& m);

// Fills every parameter with uniform(-scale, scale) draws; init_model starts
// as a near-identity flow, so tests that need a generic point in parameter
// space perturb it with this.
void randomize_params(FlowModel& m, RngState& rng, double scale = 0.5);

struct SequenceSample {
  std::vector<Tensor> frames;      // T x d_x
  std::vector<Tensor> covariates;  // T x d_y
};

struct StepResult {
  Tensor y_hat, z, pad_out;
  double logdet = 0.0;
  std::vector<LayerHidden> hiddens;  // updated states, 2 per block
};

std::vector<LayerHidden> initial_hiddens(const FlowModel& m);

struct StepCache {
  Tensor v_in;  // padded input
  std::vector<BlockCache> blocks;
};

StepResult step_forward(const FlowModel& m, const Tensor& x_t,
                        const std::vector<LayerHidden>& hiddens, StepCache* cache = nullptr);

// Pullback of step_forward. dh_out are gradients on the updated hiddens; the
// returned tensor is dL/dx_t and dh_in receives gradients on the incoming
// hiddens. Parameter gradients accumulate into `grad`.
Tensor step_backward(const FlowModel& m, const StepCache& cache, const Tensor& d_yhat,
                     const Tensor& d_z, const Tensor& d_pad,
                     const std::vector<LayerHidden>& dh_out, std::vector<LayerHidden>& dh_in,
                     FlowModel& grad);

struct StepInverseResult {
  Tensor x;
  std::vector<LayerHidden> hiddens;
};

StepInverseResult step_inverse(const FlowModel& m, const Tensor& y, const Tensor& z,
                               const Tensor& pad_in, const std::vector<LayerHidden>& hiddens,
                               StepCache* cache = nullptr);

// Pullback of step_inverse w.r.t. the recovered x. Gradients on the assembled
// [y | z | pad] input are returned through d_v (width d_total); dh_in
// receives gradients on the incoming hiddens.
void step_inverse_backward(const FlowModel& m, const StepCache& cache, const Tensor& dx,
                           const std::vector<LayerHidden>& dh_out, Tensor& d_v,
                           std::vector<LayerHidden>& dh_in, FlowModel& grad);

std::vector<StepResult> sequence_forward(const FlowModel& m, const SequenceSample& sample);

/// Draw z^t ~ N(0, I) per step and invert with pad_in = 0; hidden states
/// advance so sequences may run longer than anything seen in training.
SequenceSample sequence_generate(const FlowModel& m, const std::vector<Tensor>& covariates,
                                 RngState& rng);

/// log N(z; 0, I) + log N(pad_out; 0, sigma_pad^2 I) + logdet, sigma_pad = 0.01.
/// The y channels are conditioned on, not sampled, so they carry no prior term.
double log_density(const StepResult& step);

constexpr double kPadSigma = 0.01;

}  // namespace crow
