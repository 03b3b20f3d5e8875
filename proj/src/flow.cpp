#include "crow/flow.hpp"

#include <cmath>

namespace crow {

void FlowConfig::validate() const {
  if (d_x == 0 || d_total == 0) throw std::invalid_argument("FlowConfig: d_x and d_total must be positive");
  if (d_total < d_x) {
    throw std::invalid_argument("FlowConfig: d_total " + std::to_string(d_total) +
                                " must be >= d_x " + std::to_string(d_x));
  }
  if (d_total < d_y + d_z) {
    throw std::invalid_argument("FlowConfig: d_total " + std::to_string(d_total) +
                                " must be >= d_y + d_z = " + std::to_string(d_y + d_z));
  }
  if (n_blocks == 0) throw std::invalid_argument("FlowConfig: n_blocks must be >= 1");
  if (hidden == 0) throw std::invalid_argument("FlowConfig: hidden must be >= 1");
  if (s_max <= 0.0) throw std::invalid_argument("FlowConfig: s_max must be > 0");
  if (split.kind == SplitKind::Checkerboard && split.rows * split.cols != d_x) {
    throw std::invalid_argument("FlowConfig: checkerboard grid " + std::to_string(split.rows) +
                                "x" + std::to_string(split.cols) + " does not cover d_x " +
                                std::to_string(d_x));
  }
}

SplitIndex make_split_index(const SplitScheme& scheme, std::size_t d_x, std::size_t d_total) {
  SplitIndex idx;
  if (scheme.kind == SplitKind::Halves) {
    const std::size_t d1 = (d_total + 1) / 2;
    for (std::size_t k = 0; k < d_total; ++k) {
      (k < d1 ? idx.part1 : idx.part2).push_back(k);
    }
    return idx;
  }
  if (scheme.rows * scheme.cols != d_x) {
    throw std::invalid_argument("make_split_index: grid does not match d_x");
  }
  for (std::size_t k = 0; k < d_x; ++k) {
    const std::size_t i = k / scheme.cols, j = k % scheme.cols;
    ((i + j) % 2 == 0 ? idx.part1 : idx.part2).push_back(k);
  }
  for (std::size_t k = d_x; k < d_total; ++k) {
    ((k - d_x) % 2 == 0 ? idx.part1 : idx.part2).push_back(k);
  }
  return idx;
}

std::pair<Tensor, Tensor> split_apply(const SplitIndex& idx, const Tensor& x) {
  const std::size_t d = idx.part1.size() + idx.part2.size();
  if (x.width() != d) {
    throw std::invalid_argument("split_apply: input " + x.shape_str() + " does not match split width " +
                                std::to_string(d));
  }
  Tensor x1({idx.part1.size()}), x2({idx.part2.size()});
  for (std::size_t i = 0; i < idx.part1.size(); ++i) x1[i] = x[idx.part1[i]];
  for (std::size_t i = 0; i < idx.part2.size(); ++i) x2[i] = x[idx.part2[i]];
  return {x1, x2};
}

Tensor split_merge(const SplitIndex& idx, const Tensor& x1, const Tensor& x2) {
  if (x1.width() != idx.part1.size() || x2.width() != idx.part2.size()) {
    throw std::invalid_argument("split_merge: parts " + x1.shape_str() + ", " + x2.shape_str() +
                                " do not match split sizes " + std::to_string(idx.part1.size()) +
                                "/" + std::to_string(idx.part2.size()));
  }
  Tensor x({idx.part1.size() + idx.part2.size()});
  for (std::size_t i = 0; i < idx.part1.size(); ++i) x[idx.part1[i]] = x1[i];
  for (std::size_t i = 0; i < idx.part2.size(); ++i) x[idx.part2[i]] = x2[i];
  return x;
}

Tensor pad(const Tensor& x, std::size_t d_total) {
  if (x.width() > d_total) {
    throw std::invalid_argument("pad: input " + x.shape_str() + " wider than d_total " +
                                std::to_string(d_total));
  }
  Tensor v({d_total});
  for (std::size_t i = 0; i < x.width(); ++i) v[i] = x[i];
  return v;
}

Tensor unpad(const Tensor& v, std::size_t d_x) {
  if (v.width() < d_x) {
    throw std::invalid_argument("unpad: input " + v.shape_str() + " narrower than d_x " +
                                std::to_string(d_x));
  }
  return segment(v, 0, d_x);
}

FlowModel init_model(const FlowConfig& config) {
  config.validate();
  FlowModel m;
  m.config = config;
  m.split_idx = make_split_index(config.split, config.d_x, config.d_total);
  const std::size_t d1 = m.split_idx.part1.size();
  const std::size_t d2 = m.split_idx.part2.size();
  RngState rng(config.seed);
  m.blocks.reserve(config.n_blocks);
  for (std::size_t i = 0; i < config.n_blocks; ++i) {
    m.blocks.push_back(make_coupling_block(d1, d2, config.hidden, rng));
  }
  return m;
}

void visit_params(FlowModel& m, const ParamVisitor& fn) {
  for (std::size_t i = 0; i < m.blocks.size(); ++i) {
    visit_params(m.blocks[i], "block" + std::to_string(i), fn);
  }
}

void visit_params(const FlowModel& m, const ConstParamVisitor& fn) {
  visit_params(const_cast<FlowModel&>(m),
               [&](const std::string& name, Tensor& t) { fn(name, t); });
}

FlowModel zero_like(const FlowModel& m) {
  FlowModel z = m;
  visit_params(z, [](const std::string&, Tensor& t) { t.fill(0.0); });
  return z;
}

void randomize_params(FlowModel& m, RngState& rng, double scale) {
  visit_params(m, [&](const std::string&, Tensor& t) {
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = (2.0 * rng.next_uniform() - 1.0) * scale;
  });
}

std::vector<LayerHidden> initial_hiddens(const FlowModel& m) {
  return std::vector<LayerHidden>(2 * m.config.n_blocks, Tensor({m.config.hidden}));
}

namespace {

void check_hiddens(const FlowModel& m, const std::vector<LayerHidden>& hiddens, const char* where) {
  if (hiddens.size() != 2 * m.config.n_blocks) {
    throw std::invalid_argument(std::string(where) + ": expected " +
                                std::to_string(2 * m.config.n_blocks) + " hidden states, got " +
                                std::to_string(hiddens.size()));
  }
}

}  // namespace

StepResult step_forward(const FlowModel& m, const Tensor& x_t,
                        const std::vector<LayerHidden>& hiddens, StepCache* cache) {
  check_hiddens(m, hiddens, "step_forward");
  if (x_t.width() != m.config.d_x) {
    throw std::invalid_argument("step_forward: frame " + x_t.shape_str() + " does not match d_x " +
                                std::to_string(m.config.d_x));
  }
  Tensor v = pad(x_t, m.config.d_total);
  if (cache) cache->v_in = v;
  auto [p1, p2] = split_apply(m.split_idx, v);
  StepResult out;
  out.hiddens = hiddens;
  out.logdet = 0.0;
  if (cache) cache->blocks.resize(m.blocks.size());
  for (std::size_t i = 0; i < m.blocks.size(); ++i) {
    BlockForwardResult r =
        block_forward(m.blocks[i], p1, p2, hiddens[2 * i], hiddens[2 * i + 1], m.config.s_max,
                      cache ? &cache->blocks[i] : nullptr);
    p1 = std::move(r.v1);
    p2 = std::move(r.v2);
    out.hiddens[2 * i] = std::move(r.h_a);
    out.hiddens[2 * i + 1] = std::move(r.h_b);
    out.logdet += r.logdet;
  }
  Tensor merged = split_merge(m.split_idx, p1, p2);
  out.y_hat = segment(merged, 0, m.config.d_y);
  out.z = segment(merged, m.config.d_y, m.config.d_z);
  out.pad_out = segment(merged, m.config.d_y + m.config.d_z, m.config.d_pad_out());
  return out;
}

Tensor step_backward(const FlowModel& m, const StepCache& cache, const Tensor& d_yhat,
                     const Tensor& d_z, const Tensor& d_pad,
                     const std::vector<LayerHidden>& dh_out, std::vector<LayerHidden>& dh_in,
                     FlowModel& grad) {
  Tensor dv = concat(concat(d_yhat, d_z), d_pad);
  auto [dp1, dp2] = split_apply(m.split_idx, dv);
  dh_in.assign(2 * m.config.n_blocks, Tensor({m.config.hidden}));
  for (std::size_t i = m.blocks.size(); i-- > 0;) {
    Tensor du1(dp1.shape()), du2(dp2.shape());
    block_backward(m.blocks[i], cache.blocks[i], m.config.s_max, dp1, dp2, dh_out[2 * i],
                   dh_out[2 * i + 1], du1, du2, dh_in[2 * i], dh_in[2 * i + 1], grad.blocks[i]);
    dp1 = std::move(du1);
    dp2 = std::move(du2);
  }
  Tensor dv_in = split_merge(m.split_idx, dp1, dp2);
  return unpad(dv_in, m.config.d_x);
}

StepInverseResult step_inverse(const FlowModel& m, const Tensor& y, const Tensor& z,
                               const Tensor& pad_in, const std::vector<LayerHidden>& hiddens,
                               StepCache* cache) {
  check_hiddens(m, hiddens, "step_inverse");
  if (y.width() != m.config.d_y || z.width() != m.config.d_z ||
      pad_in.width() != m.config.d_pad_out()) {
    throw std::invalid_argument("step_inverse: [y|z|pad] widths " + y.shape_str() + "+" +
                                z.shape_str() + "+" + pad_in.shape_str() + " do not match config");
  }
  Tensor v = concat(concat(y, z), pad_in);
  if (cache) {
    cache->v_in = v;
    cache->blocks.resize(m.blocks.size());
  }
  auto [p1, p2] = split_apply(m.split_idx, v);
  StepInverseResult out;
  out.hiddens = hiddens;
  for (std::size_t i = m.blocks.size(); i-- > 0;) {
    BlockInverseResult r =
        block_inverse(m.blocks[i], p1, p2, hiddens[2 * i], hiddens[2 * i + 1], m.config.s_max,
                      cache ? &cache->blocks[i] : nullptr);
    p1 = std::move(r.u1);
    p2 = std::move(r.u2);
    out.hiddens[2 * i] = std::move(r.h_a);
    out.hiddens[2 * i + 1] = std::move(r.h_b);
  }
  out.x = unpad(split_merge(m.split_idx, p1, p2), m.config.d_x);
  return out;
}

void step_inverse_backward(const FlowModel& m, const StepCache& cache, const Tensor& dx,
                           const std::vector<LayerHidden>& dh_out, Tensor& d_v,
                           std::vector<LayerHidden>& dh_in, FlowModel& grad) {
  Tensor dv0 = pad(dx, m.config.d_total);  // pad channels of the recovered u are dropped
  auto [dp1, dp2] = split_apply(m.split_idx, dv0);
  dh_in.assign(2 * m.config.n_blocks, Tensor({m.config.hidden}));
  // Inverse execution visited blocks n-1 .. 0; unwind in the opposite order.
  for (std::size_t i = 0; i < m.blocks.size(); ++i) {
    Tensor dv1(dp1.shape()), dv2(dp2.shape());
    block_inverse_backward(m.blocks[i], cache.blocks[i], m.config.s_max, dp1, dp2, dh_out[2 * i],
                           dh_out[2 * i + 1], dv1, dv2, dh_in[2 * i], dh_in[2 * i + 1],
                           grad.blocks[i]);
    dp1 = std::move(dv1);
    dp2 = std::move(dv2);
  }
  d_v = split_merge(m.split_idx, dp1, dp2);
}

std::vector<StepResult> sequence_forward(const FlowModel& m, const SequenceSample& sample) {
  if (sample.frames.empty()) throw std::invalid_argument("sequence_forward: empty sequence");
  std::vector<StepResult> results;
  results.reserve(sample.frames.size());
  std::vector<LayerHidden> hiddens = initial_hiddens(m);
  for (const Tensor& frame : sample.frames) {
    results.push_back(step_forward(m, frame, hiddens));
    hiddens = results.back().hiddens;
  }
  return results;
}

SequenceSample sequence_generate(const FlowModel& m, const std::vector<Tensor>& covariates,
                                 RngState& rng) {
  if (covariates.empty()) throw std::invalid_argument("sequence_generate: empty covariates");
  SequenceSample out;
  out.covariates = covariates;
  out.frames.reserve(covariates.size());
  std::vector<LayerHidden> hiddens = initial_hiddens(m);
  Tensor pad_in({m.config.d_pad_out()});
  for (const Tensor& y : covariates) {
    Tensor z = m.config.d_z > 0 ? sample_standard_normal(rng, m.config.d_z) : Tensor({0});
    StepInverseResult r = step_inverse(m, y, z, pad_in, hiddens);
    out.frames.push_back(std::move(r.x));
    hiddens = std::move(r.hiddens);
  }
  return out;
}

double log_density(const StepResult& step) {
  static const double log_2pi = std::log(2.0 * M_PI);
  const double dz = static_cast<double>(step.z.width());
  double lp = -0.5 * squared_norm(step.z) - 0.5 * dz * log_2pi;
  const double dp = static_cast<double>(step.pad_out.width());
  if (dp > 0) {
    lp += -0.5 * squared_norm(step.pad_out) / (kPadSigma * kPadSigma) -
          0.5 * dp * (log_2pi + 2.0 * std::log(kPadSigma));
  }
  return lp + step.logdet;
}

}  // namespace crow
