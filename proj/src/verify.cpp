#include "crow/verify.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <sstream>

#include "crow/io.hpp"
#include "crow/stats.hpp"
#include "crow/synth.hpp"
#include "crow/training.hpp"

namespace crow {

namespace {

struct Suite {
  std::vector<CheckResult> results;

  void check(const std::string& name, bool ok, const std::string& detail) {
    results.push_back({name, ok, detail});
  }

  // Convenience for "value must be below bound" checks.
  void below(const std::string& name, double value, double bound) {
    std::ostringstream os;
    os << value << " (bound " << bound << ")";
    check(name, value < bound, os.str());
  }
};

FlowConfig toy_config(std::size_t d_x, std::size_t d_total, std::size_t d_y, std::size_t d_z,
                      std::size_t n_blocks, std::size_t hidden, std::uint64_t seed) {
  FlowConfig c;
  c.d_x = d_x;
  c.d_y = d_y;
  c.d_z = d_z;
  c.d_total = d_total;
  c.n_blocks = n_blocks;
  c.hidden = hidden;
  c.split.kind = SplitKind::Halves;
  c.seed = seed;
  return c;
}

double model_map_logdet_gap(const FlowModel& m, RngState& rng) {
  // Accumulated analytic log|det| vs LU of the finite-difference Jacobian of
  // the full (split -> blocks -> merge) map at fixed hidden states.
  const std::size_t d = m.config.d_total;
  std::vector<LayerHidden> hiddens(2 * m.config.n_blocks, Tensor({m.config.hidden}));
  for (auto& h : hiddens) {
    Tensor r = sample_standard_normal(rng, m.config.hidden);
    h = scaled(r, 0.3);
  }
  auto map = [&](const Tensor& u) {
    auto [p1, p2] = split_apply(m.split_idx, u);
    for (std::size_t i = 0; i < m.blocks.size(); ++i) {
      BlockForwardResult r = block_forward(m.blocks[i], p1, p2, hiddens[2 * i], hiddens[2 * i + 1],
                                           m.config.s_max);
      p1 = r.v1;
      p2 = r.v2;
    }
    return split_merge(m.split_idx, p1, p2);
  };
  Tensor u = sample_standard_normal(rng, d);
  auto [p1, p2] = split_apply(m.split_idx, u);
  double analytic = 0.0;
  for (std::size_t i = 0; i < m.blocks.size(); ++i) {
    BlockForwardResult r =
        block_forward(m.blocks[i], p1, p2, hiddens[2 * i], hiddens[2 * i + 1], m.config.s_max);
    p1 = r.v1;
    p2 = r.v2;
    analytic += r.logdet;
  }
  LogDet lu = lu_log_abs_det(finite_difference_jacobian(map, u));
  return std::fabs(analytic - lu.logabs);
}

double sequence_roundtrip_err(const FlowModel& m, RngState& rng, std::size_t T) {
  std::vector<LayerHidden> hiddens = initial_hiddens(m);
  double worst = 0.0;
  for (std::size_t t = 0; t < T; ++t) {
    Tensor x = sample_standard_normal(rng, m.config.d_x);
    StepResult fwd = step_forward(m, x, hiddens);
    StepInverseResult back = step_inverse(m, fwd.y_hat, fwd.z, fwd.pad_out, hiddens);
    worst = std::max(worst, max_abs_diff(back.x, x));
    for (std::size_t k = 0; k < hiddens.size(); ++k) {
      worst = std::max(worst, max_abs_diff(back.hiddens[k], fwd.hiddens[k]));
    }
    hiddens = fwd.hiddens;
  }
  return worst;
}

}  // namespace

std::vector<CheckResult> run_verification(std::uint64_t seed, const FlowConfig* extra_config) {
  Suite suite;
  RngState rng(seed);

  // mat_vec against the naive triple loop.
  {
    Tensor m({5, 5}, sample_standard_normal(rng, 25).values());
    Tensor v = sample_standard_normal(rng, 5);
    Tensor got = mat_vec(m, v);
    double worst = 0.0;
    for (std::size_t i = 0; i < 5; ++i) {
      double acc = 0.0;
      for (std::size_t j = 0; j < 5; ++j) acc += m.at2(i, j) * v[j];
      worst = std::max(worst, std::fabs(acc - got[i]));
    }
    suite.below("numerics.mat_vec_oracle", worst, 1e-14);
  }

  // Standard-normal sampler moments.
  {
    RngState moments_rng(7);
    Tensor draws = sample_standard_normal(moments_rng, 100000);
    double mean = sum(draws) / static_cast<double>(draws.size());
    double var = 0.0;
    for (std::size_t i = 0; i < draws.size(); ++i) var += (draws[i] - mean) * (draws[i] - mean);
    var /= static_cast<double>(draws.size() - 1);
    std::ostringstream os;
    os << "mean " << mean << ", var " << var;
    suite.check("numerics.normal_moments",
                mean > -0.02 && mean < 0.02 && var > 0.97 && var < 1.03, os.str());
  }

  // Determinism of the sampler.
  {
    RngState a(42), b(42);
    Tensor da = sample_standard_normal(a, 64);
    Tensor db = sample_standard_normal(b, 64);
    suite.check("numerics.rng_determinism", da == db, "same seed, same stream");
  }

  // log|det(AB)| = log|det A| + log|det B|.
  {
    double worst = 0.0;
    for (int trial = 0; trial < 10; ++trial) {
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
      worst = std::max(worst, std::fabs(la.logabs + lb.logabs - lab.logabs));
      if (la.sign * lb.sign != lab.sign) worst = 1.0;
    }
    suite.below("numerics.lu_chaining", worst, 1e-10);
  }

  // Coupling block round trips across widths.
  {
    double worst = 0.0;
    for (std::size_t d : {2u, 4u, 8u, 16u}) {
      const std::size_t d1 = (d + 1) / 2, d2 = d / 2, hidden = 6;
      for (int trial = 0; trial < 25; ++trial) {
        CouplingBlockParams block = make_coupling_block(d1, d2, hidden, rng);
        visit_params(block, "b", [&](const std::string&, Tensor& t) {
          for (std::size_t i = 0; i < t.size(); ++i) t[i] = (2.0 * rng.next_uniform() - 1.0) * 0.5;
        });
        Tensor u1 = sample_standard_normal(rng, d1), u2 = sample_standard_normal(rng, d2);
        Tensor ha = scaled(sample_standard_normal(rng, hidden), 0.3);
        Tensor hb = scaled(sample_standard_normal(rng, hidden), 0.3);
        BlockForwardResult fwd = block_forward(block, u1, u2, ha, hb, 2.0);
        BlockInverseResult inv = block_inverse(block, fwd.v1, fwd.v2, ha, hb, 2.0);
        worst = std::max({worst, max_abs_diff(inv.u1, u1), max_abs_diff(inv.u2, u2),
                          max_abs_diff(inv.h_a, fwd.h_a), max_abs_diff(inv.h_b, fwd.h_b)});
      }
    }
    suite.below("coupling.block_round_trip", worst, 1e-9);
  }

  // Analytic logdet vs the LU-of-FD-Jacobian oracle, d_total = 12.
  {
    double worst = 0.0;
    for (int trial = 0; trial < 5; ++trial) {
      FlowModel m = init_model(toy_config(10, 12, 2, 4, 2, 6, rng.next_u64()));
      randomize_params(m, rng, 0.4);
      worst = std::max(worst, model_map_logdet_gap(m, rng));
    }
    suite.below("coupling.logdet_vs_lu", worst, 1e-4);
  }

  // Triangular structure: the gated half must not respond to the transformed
  // half, and its own block must be diagonal.
  {
    const std::size_t dt = 3, dc = 3, hidden = 5;
    CouplingLayerParams layer = make_coupling_layer(dt, dc, hidden, rng);
    visit_params(layer, "l", [&](const std::string&, Tensor& t) {
      for (std::size_t i = 0; i < t.size(); ++i) t[i] = (2.0 * rng.next_uniform() - 1.0) * 0.5;
    });
    Tensor h = scaled(sample_standard_normal(rng, hidden), 0.3);
    auto map = [&](const Tensor& in) {
      Tensor xt = segment(in, 0, dt), xc = segment(in, dt, dc);
      LayerResult r = layer_forward(layer, xt, xc, h, 2.0);
      return concat(r.yt, r.yc);
    };
    Tensor point = sample_standard_normal(rng, dt + dc);
    Tensor jac = finite_difference_jacobian(map, point);
    double zero_block = 0.0, off_diag = 0.0;
    for (std::size_t i = 0; i < dc; ++i) {
      for (std::size_t j = 0; j < dt; ++j) zero_block = std::max(zero_block, std::fabs(jac.at2(dt + i, j)));
      for (std::size_t j = 0; j < dc; ++j) {
        if (i != j) off_diag = std::max(off_diag, std::fabs(jac.at2(dt + i, dt + j)));
      }
    }
    suite.below("coupling.triangular_zero_block", zero_block, 1e-8);
    suite.below("coupling.gate_block_diagonal", off_diag, 1e-8);
  }

  // Forward-then-inverse over a full sequence, default toy dims.
  {
    FlowModel m = init_model(toy_config(10, 12, 2, 4, 2, 8, rng.next_u64()));
    randomize_params(m, rng, 0.5);
    suite.below("flow.sequence_round_trip", sequence_roundtrip_err(m, rng, 6), 1e-9);
  }

  // FD Jacobian of forward-then-inverse is the identity (d <= 8).
  {
    FlowModel m = init_model(toy_config(8, 8, 2, 4, 1, 5, rng.next_u64()));
    randomize_params(m, rng, 0.4);
    std::vector<LayerHidden> hiddens = initial_hiddens(m);
    auto round = [&](const Tensor& x) {
      StepResult fwd = step_forward(m, x, hiddens);
      return step_inverse(m, fwd.y_hat, fwd.z, fwd.pad_out, hiddens).x;
    };
    Tensor x0 = sample_standard_normal(rng, 8);
    Tensor jac = finite_difference_jacobian(round, x0);
    double worst = 0.0;
    for (std::size_t i = 0; i < 8; ++i)
      for (std::size_t j = 0; j < 8; ++j)
        worst = std::max(worst, std::fabs(jac.at2(i, j) - (i == j ? 1.0 : 0.0)));
    suite.below("numerics.fd_jacobian_roundtrip_identity", worst, 1e-6);
  }

  // Split/merge bijection for both schemes.
  {
    SplitIndex halves = make_split_index({SplitKind::Halves, 0, 0}, 12, 12);
    SplitIndex cb = make_split_index({SplitKind::Checkerboard, 4, 3}, 12, 16);
    bool ok = true;
    for (int trial = 0; trial < 20; ++trial) {
      Tensor a = sample_standard_normal(rng, 12);
      auto [a1, a2] = split_apply(halves, a);
      ok = ok && split_merge(halves, a1, a2) == a;
      Tensor b = sample_standard_normal(rng, 16);
      auto [b1, b2] = split_apply(cb, b);
      ok = ok && split_merge(cb, b1, b2) == b;
    }
    suite.check("flow.split_merge_bijection", ok, "merge(apply(x)) == x, both schemes");
  }

  // MMD properties: identity at zero distance, vanishing on identical sets,
  // nonnegativity, exact symmetry.
  {
    MmdConfig cfg;
    Tensor a = sample_standard_normal(rng, 4);
    bool ok = imq_kernel(a, a, 0.2) == 1.0;
    double worst_self = 0.0, worst_neg = 0.0, worst_sym = 0.0;
    for (int trial = 0; trial < 20; ++trial) {
      std::vector<Tensor> sa, sb;
      for (int i = 0; i < 6; ++i) {
        sa.push_back(sample_standard_normal(rng, 3));
        sb.push_back(sample_standard_normal(rng, 3));
      }
      worst_self = std::max(worst_self, std::fabs(mmd2(sa, sa, cfg)));
      double m2 = mmd2(sa, sb, cfg);
      worst_neg = std::min(worst_neg, m2);
      worst_sym = std::max(worst_sym, std::fabs(m2 - mmd2(sb, sa, cfg)));
    }
    std::ostringstream os;
    os << "self " << worst_self << ", min " << worst_neg << ", asym " << worst_sym;
    suite.check("training.mmd_properties",
                ok && worst_self < 1e-12 && worst_neg >= -1e-12 && worst_sym == 0.0, os.str());
  }

  // Serialization bijectivity through temp files.
  {
    namespace fs = std::filesystem;
    fs::path dir = fs::temp_directory_path() / ("crow_verify_" + std::to_string(rng.next_u64()));
    fs::create_directories(dir);
    FlowModel m = init_model(toy_config(10, 12, 2, 4, 2, 6, 99));
    randomize_params(m, rng, 0.5);
    save_model(m, (dir / "m.crow").string());
    FlowModel back = load_model((dir / "m.crow").string());
    bool ok = true;
    std::vector<const Tensor*> orig, loaded;
    visit_params(m, [&](const std::string&, const Tensor& t) { orig.push_back(&t); });
    visit_params(back, [&](const std::string&, const Tensor& t) { loaded.push_back(&t); });
    for (std::size_t i = 0; i < orig.size(); ++i) ok = ok && (*orig[i] == *loaded[i]);

    RngState ds_rng(3);
    Dataset ds = synth_regime(6, 3, 8, ds_rng);
    save_dataset(ds, (dir / "d.crow").string());
    Dataset ds2 = load_dataset((dir / "d.crow").string());
    ok = ok && ds2.samples.size() == ds.samples.size();
    for (std::size_t i = 0; ok && i < ds.samples.size(); ++i) {
      for (std::size_t t = 0; t < ds.meta.T; ++t) {
        ok = ok && ds.samples[i].frames[t] == ds2.samples[i].frames[t] &&
             ds.samples[i].covariates[t] == ds2.samples[i].covariates[t];
      }
    }
    fs::remove_all(dir);
    suite.check("harness.serialization_round_trip", ok, "bit-exact load(save(x))");
  }

  // Group analysis null case: identical groups produce zero flags.
  {
    std::vector<Tensor> g;
    for (int i = 0; i < 5; ++i) g.push_back(sample_standard_normal(rng, 4));
    GroupStats stats = group_analysis(g, g, 0.01);
    bool ok = stats.n_significant() == 0;
    for (const FeatureStat& f : stats.features) ok = ok && f.p_corrected == 1.0;
    suite.check("harness.group_analysis_null", ok, "identical groups, all corrected p = 1");
  }

  // Generation determinism.
  {
    FlowModel m = init_model(toy_config(10, 12, 2, 4, 1, 6, rng.next_u64()));
    randomize_params(m, rng, 0.5);
    std::vector<Tensor> covs(4, Tensor::of({1.0, 0.0}));
    RngState g1(11), g2(11);
    SequenceSample s1 = sequence_generate(m, covs, g1);
    SequenceSample s2 = sequence_generate(m, covs, g2);
    bool ok = true;
    for (std::size_t t = 0; t < covs.size(); ++t) ok = ok && s1.frames[t] == s2.frames[t];
    suite.check("flow.generate_determinism", ok, "same seed, bit-identical frames");
  }

  if (extra_config) {
    FlowModel m = init_model(*extra_config);
    randomize_params(m, rng, 0.3);
    suite.below("config.sequence_round_trip", sequence_roundtrip_err(m, rng, 3),
                extra_config->d_total >= 512 ? 1e-8 : 1e-9);
  }

  return suite.results;
}

}  // namespace crow
