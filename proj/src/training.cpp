#include "crow/training.hpp"

#include <algorithm>
#include <cmath>

namespace crow {

double imq_kernel(const Tensor& a, const Tensor& b, double alpha) {
  if (alpha <= 0.0) throw std::invalid_argument("imq_kernel: alpha must be > 0");
  if (a.shape() != b.shape()) {
    throw std::invalid_argument("imq_kernel: width mismatch: " + a.shape_str() + " vs " +
                                b.shape_str());
  }
  double d2 = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double diff = a[i] - b[i];
    d2 += diff * diff;
  }
  return alpha / (alpha + d2);
}

namespace {

// Kernel sums accumulate in sorted order so the result is a function of the
// value multiset alone: mmd2(A, B) == mmd2(B, A) bit-exactly, and identical
// sample multisets cancel to exactly zero.
double kernel_sum(const std::vector<Tensor>& a, const std::vector<Tensor>& b, double alpha) {
  std::vector<double> values;
  values.reserve(a.size() * b.size());
  for (const Tensor& ai : a)
    for (const Tensor& bj : b) values.push_back(imq_kernel(ai, bj, alpha));
  std::sort(values.begin(), values.end());
  double acc = 0.0;
  for (double v : values) acc += v;
  return acc;
}

}  // namespace

double mmd2(const std::vector<Tensor>& a, const std::vector<Tensor>& b, const MmdConfig& cfg) {
  if (a.empty() || b.empty()) throw std::invalid_argument("mmd2: empty sample set");
  const double n = static_cast<double>(a.size());
  const double m = static_cast<double>(b.size());
  double total = 0.0;
  for (double alpha : cfg.alphas) {
    total += kernel_sum(a, a, alpha) / (n * n) + kernel_sum(b, b, alpha) / (m * m) -
             2.0 * kernel_sum(a, b, alpha) / (n * m);
  }
  return total;
}

namespace {

// d k(x, y) / d x = -2 alpha (x - y) / (alpha + ||x - y||^2)^2
void add_kernel_grad(const Tensor& x, const Tensor& y, double alpha, double coeff, Tensor& dx) {
  double d2 = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double diff = x[i] - y[i];
    d2 += diff * diff;
  }
  const double denom = alpha + d2;
  const double factor = -2.0 * alpha * coeff / (denom * denom);
  for (std::size_t i = 0; i < x.size(); ++i) dx[i] += factor * (x[i] - y[i]);
}

}  // namespace

void mmd2_backward(const std::vector<Tensor>& a, const std::vector<Tensor>& b,
                   const MmdConfig& cfg, double scale, std::vector<Tensor>* da,
                   std::vector<Tensor>* db) {
  const double n = static_cast<double>(a.size());
  const double m = static_cast<double>(b.size());
  for (double alpha : cfg.alphas) {
    if (da) {
      for (std::size_t i = 0; i < a.size(); ++i) {
        for (std::size_t j = 0; j < a.size(); ++j) {
          if (i == j) continue;  // self pair has zero gradient
          add_kernel_grad(a[i], a[j], alpha, 2.0 * scale / (n * n), (*da)[i]);
        }
        for (const Tensor& bj : b) {
          add_kernel_grad(a[i], bj, alpha, -2.0 * scale / (n * m), (*da)[i]);
        }
      }
    }
    if (db) {
      for (std::size_t j = 0; j < b.size(); ++j) {
        for (std::size_t k = 0; k < b.size(); ++k) {
          if (j == k) continue;
          add_kernel_grad(b[j], b[k], alpha, 2.0 * scale / (m * m), (*db)[j]);
        }
        for (const Tensor& ai : a) {
          add_kernel_grad(b[j], ai, alpha, -2.0 * scale / (n * m), (*db)[j]);
        }
      }
    }
  }
}

double loss_Y(const Tensor& y_hat, const Tensor& y_gt) {
  if (y_hat.shape() != y_gt.shape()) {
    throw std::invalid_argument("loss_Y: width mismatch: " + y_hat.shape_str() + " vs " +
                                y_gt.shape_str());
  }
  if (y_hat.size() == 0) return 0.0;
  double acc = 0.0;
  for (std::size_t i = 0; i < y_hat.size(); ++i) {
    const double diff = y_hat[i] - y_gt[i];
    acc += diff * diff;
  }
  return acc / static_cast<double>(y_hat.size());
}

double loss_Z(const std::vector<Tensor>& yhat_z, const std::vector<Tensor>& y_gt,
              std::size_t d_z, const MmdConfig& cfg, RngState& rng) {
  if (yhat_z.size() < 2) throw std::invalid_argument("loss_Z: batch must be >= 2 (pairs required)");
  if (yhat_z.size() != y_gt.size()) {
    throw std::invalid_argument("loss_Z: outputs and ground truth differ in count");
  }
  std::vector<Tensor> counterparts;
  counterparts.reserve(y_gt.size());
  for (const Tensor& y : y_gt) {
    Tensor z = d_z > 0 ? sample_standard_normal(rng, d_z) : Tensor({0});
    counterparts.push_back(concat(y, z));
  }
  return mmd2(yhat_z, counterparts, cfg);
}

double pad_penalty(const StepResult& step) {
  if (step.pad_out.size() == 0) return 0.0;
  return squared_norm(step.pad_out) / static_cast<double>(step.pad_out.size());
}

namespace {

struct BatchPlan {
  std::size_t B = 0, T = 0;
  // z draws, indexed [t][b]; taken up front so the stream does not depend on
  // parameter values (keeps the loss a deterministic function of params).
  std::vector<std::vector<Tensor>> zeta_counterpart;
  std::vector<std::vector<Tensor>> zeta_generate;
};

BatchPlan make_plan(const FlowModel& m, const std::vector<const SequenceSample*>& batch,
                    const TrainConfig& cfg, RngState& rng) {
  BatchPlan plan;
  plan.B = batch.size();
  if (plan.B < 2) throw std::invalid_argument("batch_loss_and_grads: batch must be >= 2");
  plan.T = batch[0]->frames.size();
  for (const SequenceSample* s : batch) {
    if (s->frames.size() != plan.T) {
      throw std::invalid_argument("batch_loss_and_grads: mixed sequence lengths in batch");
    }
  }
  const std::size_t d_z = m.config.d_z;
  auto draw = [&](std::vector<std::vector<Tensor>>& dst) {
    dst.resize(plan.T);
    for (std::size_t t = 0; t < plan.T; ++t) {
      dst[t].reserve(plan.B);
      for (std::size_t b = 0; b < plan.B; ++b) {
        dst[t].push_back(d_z > 0 ? sample_standard_normal(rng, d_z) : Tensor({0}));
      }
    }
  };
  draw(plan.zeta_counterpart);
  if (cfg.w_X != 0.0) draw(plan.zeta_generate);
  return plan;
}

}  // namespace

double loss_X(const FlowModel& m, const std::vector<const SequenceSample*>& batch,
              const MmdConfig& cfg, RngState& rng) {
  TrainConfig tc;
  tc.mmd = cfg;
  tc.w_Z = 0.0;
  tc.w_Y = 0.0;
  tc.w_P = 0.0;
  tc.w_X = 1.0;
  LossBreakdown loss = batch_loss_and_grads(m, batch, tc, rng, nullptr);
  return loss.x;
}

LossBreakdown batch_loss_and_grads(const FlowModel& m,
                                   const std::vector<const SequenceSample*>& batch,
                                   const TrainConfig& cfg, RngState& rng, FlowModel* grads,
                                   std::size_t* inverse_evals) {
  const BatchPlan plan = make_plan(m, batch, cfg, rng);
  const std::size_t B = plan.B, T = plan.T;
  const std::size_t d_y = m.config.d_y, d_z = m.config.d_z, d_pad = m.config.d_pad_out();
  const bool want_grads = grads != nullptr;
  const bool use_x = cfg.w_X != 0.0;

  // Forward pass with caches; H[b][t] is the hidden set entering step t.
  std::vector<std::vector<StepCache>> fw_cache(B);
  std::vector<std::vector<StepCache>> inv_cache(B);
  std::vector<std::vector<StepResult>> res(B);
  std::vector<std::vector<Tensor>> x_rec(B);  // loss_X regenerations
  for (std::size_t b = 0; b < B; ++b) {
    fw_cache[b].resize(T);
    res[b].reserve(T);
    std::vector<LayerHidden> hiddens = initial_hiddens(m);
    for (std::size_t t = 0; t < T; ++t) {
      res[b].push_back(
          step_forward(m, batch[b]->frames[t], hiddens, want_grads ? &fw_cache[b][t] : nullptr));
      hiddens = res[b].back().hiddens;
    }
  }
  if (use_x) {
    Tensor pad_in({d_pad});
    for (std::size_t b = 0; b < B; ++b) {
      inv_cache[b].resize(T);
      x_rec[b].reserve(T);
      std::vector<LayerHidden> hiddens = initial_hiddens(m);
      for (std::size_t t = 0; t < T; ++t) {
        // Regenerate under the same recurrent context the real sequence saw.
        StepInverseResult r = step_inverse(m, batch[b]->covariates[t], plan.zeta_generate[t][b],
                                           pad_in, hiddens, want_grads ? &inv_cache[b][t] : nullptr);
        x_rec[b].push_back(std::move(r.x));
        hiddens = res[b][t].hiddens;
        if (inverse_evals) ++(*inverse_evals);
      }
    }
  }

  LossBreakdown loss;
  // Output-side gradients per (b, t).
  std::vector<std::vector<Tensor>> d_yhat(B), d_zt(B), d_padt(B), d_xrec(B);
  if (want_grads) {
    for (std::size_t b = 0; b < B; ++b) {
      d_yhat[b].assign(T, Tensor({d_y}));
      d_zt[b].assign(T, Tensor({d_z}));
      d_padt[b].assign(T, Tensor({d_pad}));
      if (use_x) d_xrec[b].assign(T, Tensor({m.config.d_x}));
    }
  }

  for (std::size_t t = 0; t < T; ++t) {
    // L_Z: joint [y_hat | z] against [y_gt | z ~ N(0, I)].
    std::vector<Tensor> a_set, b_set;
    a_set.reserve(B);
    b_set.reserve(B);
    for (std::size_t b = 0; b < B; ++b) {
      a_set.push_back(concat(res[b][t].y_hat, res[b][t].z));
      b_set.push_back(concat(batch[b]->covariates[t], plan.zeta_counterpart[t][b]));
    }
    loss.z += mmd2(a_set, b_set, cfg.mmd);
    if (want_grads && cfg.w_Z != 0.0) {
      std::vector<Tensor> da(B, Tensor({d_y + d_z}));
      mmd2_backward(a_set, b_set, cfg.mmd, cfg.w_Z, &da, nullptr);
      for (std::size_t b = 0; b < B; ++b) {
        for (std::size_t i = 0; i < d_y; ++i) d_yhat[b][t][i] += da[b][i];
        for (std::size_t i = 0; i < d_z; ++i) d_zt[b][t][i] += da[b][d_y + i];
      }
    }

    // L_Y and the pad penalty, averaged over the batch.
    for (std::size_t b = 0; b < B; ++b) {
      loss.y += loss_Y(res[b][t].y_hat, batch[b]->covariates[t]) / static_cast<double>(B);
      loss.pad += pad_penalty(res[b][t]) / static_cast<double>(B);
      if (want_grads) {
        if (d_y > 0 && cfg.w_Y != 0.0) {
          const double c = 2.0 * cfg.w_Y / (static_cast<double>(d_y) * static_cast<double>(B));
          for (std::size_t i = 0; i < d_y; ++i) {
            d_yhat[b][t][i] += c * (res[b][t].y_hat[i] - batch[b]->covariates[t][i]);
          }
        }
        if (d_pad > 0 && cfg.w_P != 0.0) {
          const double c = 2.0 * cfg.w_P / (static_cast<double>(d_pad) * static_cast<double>(B));
          for (std::size_t i = 0; i < d_pad; ++i) d_padt[b][t][i] += c * res[b][t].pad_out[i];
        }
      }
    }

    // L_X: regenerated frames against the real ones.
    if (use_x) {
      std::vector<Tensor> rec_set, true_set;
      rec_set.reserve(B);
      true_set.reserve(B);
      for (std::size_t b = 0; b < B; ++b) {
        rec_set.push_back(x_rec[b][t]);
        true_set.push_back(batch[b]->frames[t]);
      }
      loss.x += mmd2(rec_set, true_set, cfg.mmd) / static_cast<double>(T);
      if (want_grads) {
        std::vector<Tensor> da(B, Tensor({m.config.d_x}));
        mmd2_backward(rec_set, true_set, cfg.mmd, cfg.w_X / static_cast<double>(T), &da, nullptr);
        for (std::size_t b = 0; b < B; ++b) add_inplace(d_xrec[b][t], da[b]);
      }
    }
  }

  loss.total = cfg.w_Z * loss.z + cfg.w_Y * loss.y + cfg.w_X * loss.x + cfg.w_P * loss.pad;
  if (!want_grads) return loss;

  // Backward. dh[b][t] accumulates gradients on the hiddens entering step t:
  // from the loss_X inverse at step t, and from step t's own backward pass.
  const std::vector<LayerHidden> zero_h = initial_hiddens(m);
  for (std::size_t b = 0; b < B; ++b) {
    std::vector<std::vector<LayerHidden>> dh(T + 1, zero_h);
    if (use_x) {
      for (std::size_t t = 0; t < T; ++t) {
        Tensor d_v;
        std::vector<LayerHidden> dh_contrib;
        step_inverse_backward(m, inv_cache[b][t], d_xrec[b][t], zero_h, d_v, dh_contrib, *grads);
        for (std::size_t k = 0; k < dh_contrib.size(); ++k) add_inplace(dh[t][k], dh_contrib[k]);
      }
    }
    for (std::size_t t = T; t-- > 0;) {
      std::vector<LayerHidden> dh_in;
      step_backward(m, fw_cache[b][t], d_yhat[b][t], d_zt[b][t], d_padt[b][t], dh[t + 1], dh_in,
                    *grads);
      for (std::size_t k = 0; k < dh_in.size(); ++k) add_inplace(dh[t][k], dh_in[k]);
    }
  }
  return loss;
}

namespace {

double roundtrip_spot_check(const FlowModel& m, const SequenceSample& sample) {
  double worst = 0.0;
  std::vector<LayerHidden> hiddens = initial_hiddens(m);
  for (const Tensor& frame : sample.frames) {
    StepResult fwd = step_forward(m, frame, hiddens);
    StepInverseResult back = step_inverse(m, fwd.y_hat, fwd.z, fwd.pad_out, hiddens);
    worst = std::max(worst, max_abs_diff(back.x, frame));
    hiddens = fwd.hiddens;
  }
  return worst;
}

}  // namespace

TrainResult train(FlowModel& m, const Dataset& data, const TrainConfig& cfg, RngState& rng) {
  if (data.samples.empty()) throw std::invalid_argument("train: dataset is empty");
  data.validate();
  TrainResult result;

  // Adam state per parameter tensor, aligned with visit order.
  std::vector<std::string> names;
  visit_params(m, [&](const std::string& name, Tensor&) { names.push_back(name); });
  std::vector<AdamState> adam(names.size());

  std::vector<std::size_t> order(data.samples.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  FlowModel snapshot = m;  // last-good checkpoint for the NaN abort path
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    // Fisher-Yates on the deterministic stream.
    for (std::size_t i = order.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(rng.next_u64() % i);
      std::swap(order[i - 1], order[j]);
    }

    EpochMetrics em;
    em.epoch = epoch;
    std::size_t n_batches = 0;
    const std::size_t bs = std::max<std::size_t>(2, cfg.batch);
    for (std::size_t start = 0; start + 2 <= order.size(); start += bs) {
      const std::size_t end = std::min(order.size(), start + bs);
      if (end - start < 2) break;  // MMD needs pairs
      std::vector<const SequenceSample*> batch;
      batch.reserve(end - start);
      for (std::size_t i = start; i < end; ++i) batch.push_back(&data.samples[order[i]]);

      FlowModel grads = zero_like(m);
      LossBreakdown loss =
          batch_loss_and_grads(m, batch, cfg, rng, &grads, &em.inverse_evals);
      if (!std::isfinite(loss.total)) {
        m = snapshot;
        result.aborted = true;
        result.abort_reason = "non-finite loss at epoch " + std::to_string(epoch) +
                              "; parameters restored to the last epoch checkpoint";
        result.epochs.push_back(em);
        return result;
      }

      double gn2 = 0.0;
      bool bad_grad = false;
      std::string bad_name;
      visit_params(grads, [&](const std::string& name, Tensor& g) {
        if (!g.all_finite() && !bad_grad) {
          bad_grad = true;
          bad_name = name;
        }
        gn2 += squared_norm(g);
      });
      if (bad_grad) {
        m = snapshot;
        result.aborted = true;
        result.abort_reason = "non-finite gradient in parameter '" + bad_name + "' at epoch " +
                              std::to_string(epoch) +
                              "; parameters restored to the last epoch checkpoint";
        result.epochs.push_back(em);
        return result;
      }

      std::size_t slot = 0;
      std::vector<Tensor*> grad_ptrs;
      visit_params(grads, [&](const std::string&, Tensor& g) { grad_ptrs.push_back(&g); });
      visit_params(m, [&](const std::string&, Tensor& p) {
        adam_step(p, *grad_ptrs[slot], adam[slot], cfg.adam);
        ++slot;
      });

      em.loss_Z += loss.z;
      em.loss_Y += loss.y;
      em.loss_X += loss.x;
      em.pad += loss.pad;
      em.grad_norm += std::sqrt(gn2);
      ++n_batches;
    }
    if (n_batches > 0) {
      em.loss_Z /= static_cast<double>(n_batches);
      em.loss_Y /= static_cast<double>(n_batches);
      em.loss_X /= static_cast<double>(n_batches);
      em.pad /= static_cast<double>(n_batches);
      em.grad_norm /= static_cast<double>(n_batches);
    }
    em.roundtrip_err = roundtrip_spot_check(m, data.samples[order[0]]);
    result.epochs.push_back(em);
    snapshot = m;
  }
  return result;
}

}  // namespace crow
