#pragma once

#include "crow/dataset.hpp"
#include "crow/flow.hpp"

namespace crow {

struct MmdConfig {
  std::vector<double> alphas = {0.2, 0.5, 0.8, 1.0, 1.2};
};

/// Inverse multiquadratic kernel alpha / (alpha + ||a - b||^2).
double imq_kernel(const Tensor& a, const Tensor& b, double alpha);

/// Biased V-statistic MMD^2 summed over the alpha scales. Nonnegative up to
/// rounding and exactly zero for identical sample multisets.
double mmd2(const std::vector<Tensor>& a, const std::vector<Tensor>& b,
            const MmdConfig& cfg = MmdConfig());

// d(scale * mmd2)/dA and /dB, accumulated into the provided vectors (pass
// nullptr for a side that is treated as constant).
void mmd2_backward(const std::vector<Tensor>& a, const std::vector<Tensor>& b,
                   const MmdConfig& cfg, double scale, std::vector<Tensor>* da,
                   std::vector<Tensor>* db);

double loss_Y(const Tensor& y_hat, const Tensor& y_gt);

/// MMD between the network's joint [y_hat | z] samples and counterparts
/// [y_gt | z ~ N(0, I)]: drives y_hat toward the covariates while pushing z
/// toward an independent standard normal.
double loss_Z(const std::vector<Tensor>& yhat_z, const std::vector<Tensor>& y_gt,
              std::size_t d_z, const MmdConfig& cfg, RngState& rng);

/// Inverse-direction loss: regenerate each frame from (y_gt, z ~ N(0, I),
/// pad = 0) reusing the batch's forward hidden-state trajectories, then the
/// per-timestep MMD against the real frames, averaged over t.
double loss_X(const FlowModel& m, const std::vector<const SequenceSample*>& batch,
              const MmdConfig& cfg, RngState& rng);

/// Mean squared pad output; keeps pad channels near zero so generation with
/// pad_in = 0 is consistent.
double pad_penalty(const StepResult& step);

struct TrainConfig {
  std::size_t batch = 128;
  std::size_t epochs = 1;
  AdamHyper adam;  // lr 5e-4, beta1 0.9, beta2 0.999, eps 1e-8
  double w_Z = 1.0, w_Y = 1.0, w_X = 1.0, w_P = 1.0;
  std::uint64_t seed = 0;
  MmdConfig mmd;
};

struct LossBreakdown {
  double total = 0.0;
  double z = 0.0, y = 0.0, x = 0.0, pad = 0.0;
};

/// One batch of the bidirectional objective; gradients (if requested) flow
/// through the full coupled graph including the hidden-state chains across
/// all T steps and the inverse evaluations of loss_X.
LossBreakdown batch_loss_and_grads(const FlowModel& m,
                                   const std::vector<const SequenceSample*>& batch,
                                   const TrainConfig& cfg, RngState& rng, FlowModel* grads,
                                   std::size_t* inverse_evals = nullptr);

struct EpochMetrics {
  std::size_t epoch = 0;
  double loss_Z = 0.0, loss_Y = 0.0, loss_X = 0.0, pad = 0.0;
  double grad_norm = 0.0;
  std::size_t inverse_evals = 0;
  double roundtrip_err = 0.0;  // post-epoch invertibility spot check
};

struct TrainResult {
  std::vector<EpochMetrics> epochs;
  bool aborted = false;
  std::string abort_reason;
};

TrainResult train(FlowModel& m, const Dataset& data, const TrainConfig& cfg, RngState& rng);

}  // namespace crow
