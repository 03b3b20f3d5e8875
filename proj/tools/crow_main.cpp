#include <filesystem>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "crow/io.hpp"
#include "crow/stats.hpp"
#include "crow/synth.hpp"
#include "crow/training.hpp"
#include "crow/verify.hpp"
#include "json.hpp"

using namespace crow;
using nlohmann::json;

namespace {

struct FullConfig {
  FlowConfig flow;
  TrainConfig train;
};

FullConfig parse_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config " + path);
  json j = json::parse(in);
  FullConfig cfg;

  const json& f = j.at("flow");
  cfg.flow.d_x = f.at("d_x").get<std::size_t>();
  cfg.flow.d_y = f.at("d_y").get<std::size_t>();
  cfg.flow.d_z = f.at("d_z").get<std::size_t>();
  cfg.flow.d_total = f.at("d_total").get<std::size_t>();
  cfg.flow.n_blocks = f.value("n_blocks", std::size_t{1});
  cfg.flow.hidden = f.value("hidden", std::size_t{16});
  cfg.flow.s_max = f.value("s_max", 2.0);
  cfg.flow.seed = f.value("seed", std::uint64_t{0});
  if (f.contains("split")) {
    const json& s = f.at("split");
    const std::string kind = s.value("kind", "halves");
    if (kind == "checkerboard") {
      cfg.flow.split.kind = SplitKind::Checkerboard;
      cfg.flow.split.rows = s.at("rows").get<std::size_t>();
      cfg.flow.split.cols = s.at("cols").get<std::size_t>();
    } else if (kind == "halves") {
      cfg.flow.split.kind = SplitKind::Halves;
    } else {
      throw std::runtime_error("config split.kind must be 'halves' or 'checkerboard'");
    }
  }
  cfg.flow.validate();

  if (j.contains("train")) {
    const json& t = j.at("train");
    cfg.train.batch = t.value("batch", std::size_t{128});
    cfg.train.epochs = t.value("epochs", std::size_t{1});
    cfg.train.adam.lr = t.value("lr", 5e-4);
    cfg.train.adam.beta1 = t.value("beta1", 0.9);
    cfg.train.adam.beta2 = t.value("beta2", 0.999);
    cfg.train.adam.eps = t.value("eps", 1e-8);
    cfg.train.w_Z = t.value("w_Z", 1.0);
    cfg.train.w_Y = t.value("w_Y", 1.0);
    cfg.train.w_X = t.value("w_X", 1.0);
    cfg.train.w_P = t.value("w_P", 1.0);
    cfg.train.seed = t.value("seed", std::uint64_t{0});
  }
  return cfg;
}

int cmd_synth(const std::string& kind, std::size_t n, std::size_t t, std::size_t rows,
              std::size_t cols, std::size_t d, std::uint64_t seed, const std::string& out) {
  RngState rng(seed);
  Dataset ds;
  if (kind == "blob") {
    ds = synth_moving_blob(n, t, rows, cols, rng);
  } else if (kind == "regime") {
    ds = synth_regime(n, t, d, rng);
  } else {
    std::cerr << "synth: unknown kind '" << kind << "' (expected blob or regime)\n";
    return 2;
  }
  save_dataset(ds, out);
  std::cout << "wrote " << ds.samples.size() << " sequences (d_x=" << ds.meta.d_x
            << ", T=" << ds.meta.T << ") to " << out << "\n";
  return 0;
}

int cmd_train(const std::string& config_path, const std::string& data_path,
              const std::string& out, const std::string& metrics_path, std::int64_t seed) {
  FullConfig cfg = parse_config(config_path);
  if (seed >= 0) {
    cfg.flow.seed = static_cast<std::uint64_t>(seed);
    cfg.train.seed = static_cast<std::uint64_t>(seed);
  }
  Dataset ds = load_dataset(data_path);
  if (ds.meta.d_x != cfg.flow.d_x || ds.meta.d_y != cfg.flow.d_y) {
    throw std::runtime_error("dataset dims (d_x=" + std::to_string(ds.meta.d_x) +
                             ", d_y=" + std::to_string(ds.meta.d_y) +
                             ") do not match the flow config");
  }
  FlowModel model = init_model(cfg.flow);
  RngState rng(cfg.train.seed);
  TrainResult result = train(model, ds, cfg.train, rng);
  const std::string metrics_out = metrics_path.empty() ? out + ".metrics.csv" : metrics_path;
  write_metrics_csv(result.epochs, metrics_out);
  if (result.aborted) {
    save_model(model, out + ".last_good");
    std::cerr << "train: aborted: " << result.abort_reason << "\n"
              << "last-good checkpoint written to " << out << ".last_good\n";
    return 1;
  }
  save_model(model, out);
  std::cout << "trained " << result.epochs.size() << " epochs; model written to " << out
            << ", metrics to " << metrics_out << "\n";
  return 0;
}

int cmd_generate(const std::string& model_path, const std::string& conditions_path, std::size_t n,
                 std::uint64_t seed, const std::string& out, const std::string& frames_dir,
                 std::size_t grid_rows, std::size_t grid_cols) {
  FlowModel model = load_model(model_path);
  std::vector<Tensor> covariates = read_conditions_csv(conditions_path);
  for (const Tensor& y : covariates) {
    if (y.width() != model.config.d_y) {
      throw std::runtime_error("conditions have " + std::to_string(y.width()) +
                               " covariates per row, model expects " +
                               std::to_string(model.config.d_y));
    }
  }
  RngState rng(seed);
  Dataset out_ds;
  out_ds.meta = {model.config.d_x, model.config.d_y, covariates.size(), "generated", seed,
                 model.config.split.rows, model.config.split.cols};
  for (std::size_t i = 0; i < n; ++i) {
    out_ds.samples.push_back(sequence_generate(model, covariates, rng));
  }
  save_dataset(out_ds, out);
  std::cout << "generated " << n << " sequences of length " << covariates.size() << " to " << out
            << "\n";

  if (!frames_dir.empty()) {
    std::size_t rows = grid_rows, cols = grid_cols;
    if (rows * cols == 0 && model.config.split.kind == SplitKind::Checkerboard) {
      rows = model.config.split.rows;
      cols = model.config.split.cols;
    }
    if (rows * cols != model.config.d_x) {
      throw std::runtime_error(
          "--frames needs a grid; pass --grid-rows/--grid-cols matching d_x = " +
          std::to_string(model.config.d_x));
    }
    for (std::size_t i = 0; i < out_ds.samples.size(); ++i) {
      write_frames_pgm(out_ds.samples[i], rows, cols, frames_dir + "/seq_" + std::to_string(i));
    }
    std::cout << "frames written under " << frames_dir << "\n";
  }
  return 0;
}

int cmd_density(const std::string& model_path, const std::string& data_path,
                const std::string& out) {
  FlowModel model = load_model(model_path);
  Dataset ds = load_dataset(data_path);
  std::vector<DensityRow> rows;
  for (std::size_t i = 0; i < ds.samples.size(); ++i) {
    std::vector<StepResult> steps = sequence_forward(model, ds.samples[i]);
    for (std::size_t t = 0; t < steps.size(); ++t) {
      rows.push_back({i, t + 1, steps[t].logdet, log_density(steps[t])});
    }
  }
  write_density_csv(rows, out);
  std::cout << "wrote " << rows.size() << " density rows to " << out << "\n";
  return 0;
}

int cmd_analyze(const std::string& a_path, const std::string& b_path, std::size_t t_index,
                double alpha, const std::string& out) {
  Dataset a = load_dataset(a_path);
  Dataset b = load_dataset(b_path);
  if (t_index < 1 || t_index > a.meta.T || t_index > b.meta.T) {
    throw std::runtime_error("--t-index " + std::to_string(t_index) +
                             " outside the sequence length");
  }
  auto frames_at = [&](const Dataset& ds) {
    std::vector<Tensor> frames;
    for (const auto& s : ds.samples) frames.push_back(s.frames[t_index - 1]);
    return frames;
  };
  GroupStats stats = group_analysis(frames_at(a), frames_at(b), alpha);
  write_analysis_csv(stats, out);
  std::cout << stats.n_significant() << " of " << stats.features.size()
            << " features significant at Bonferroni-corrected alpha " << alpha << "; table in "
            << out << "\n";
  return 0;
}

int cmd_verify(const std::string& config_path, std::uint64_t seed) {
  const FlowConfig* extra = nullptr;
  FlowConfig cfg;
  if (!config_path.empty()) {
    cfg = parse_config(config_path).flow;
    extra = &cfg;
  }
  std::vector<CheckResult> results = run_verification(seed, extra);
  bool all_ok = true;
  for (const CheckResult& c : results) {
    std::cout << (c.ok ? "[ ok ] " : "[FAIL] ") << c.name << ": " << c.detail << "\n";
    all_ok = all_ok && c.ok;
  }
  if (!all_ok) {
    for (const CheckResult& c : results) {
      if (!c.ok) {
        std::cerr << "verification failed: " << c.name << " (" << c.detail << ")\n";
        break;
      }
    }
    return 1;
  }
  std::cout << "all " << results.size() << " checks passed\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"crow: conditionally invertible recurrent flow"};
  app.require_subcommand(1);

  auto* synth = app.add_subcommand("synth", "Generate a synthetic sequence dataset");
  std::string synth_kind, synth_out;
  std::size_t synth_n = 100, synth_t = 6, synth_rows = 12, synth_cols = 12, synth_d = 82;
  std::uint64_t synth_seed = 0;
  synth->add_option("--kind", synth_kind, "blob | regime")->required();
  synth->add_option("--n", synth_n, "number of sequences")->required();
  synth->add_option("--t", synth_t, "timesteps per sequence")->required();
  synth->add_option("--out", synth_out, "output dataset file")->required();
  synth->add_option("--grid-rows", synth_rows, "blob frame rows (default 12)");
  synth->add_option("--grid-cols", synth_cols, "blob frame cols (default 12)");
  synth->add_option("--d", synth_d, "regime feature width (default 82)");
  synth->add_option("--seed", synth_seed, "RNG seed (default 0)");

  auto* train_cmd = app.add_subcommand("train", "Train a model on a dataset");
  std::string train_config, train_data, train_out, train_metrics;
  std::int64_t train_seed = -1;
  train_cmd->add_option("--config", train_config, "JSON config with flow and train sections")
      ->required();
  train_cmd->add_option("--data", train_data, "training dataset file")->required();
  train_cmd->add_option("--out", train_out, "output model file")->required();
  train_cmd->add_option("--metrics", train_metrics, "metrics CSV (default <out>.metrics.csv)");
  train_cmd->add_option("--seed", train_seed, "override flow and train seeds");

  auto* gen = app.add_subcommand("generate", "Generate sequences for a covariate path");
  std::string gen_model, gen_conditions, gen_out, gen_frames;
  std::size_t gen_n = 1, gen_rows = 0, gen_cols = 0;
  std::uint64_t gen_seed = 0;
  gen->add_option("--model", gen_model, "trained model file")->required();
  gen->add_option("--conditions", gen_conditions, "CSV with header t,y_1,...,y_d")->required();
  gen->add_option("--n", gen_n, "sequences to sample (default 1)");
  gen->add_option("--seed", gen_seed, "RNG seed (default 0)");
  gen->add_option("--out", gen_out, "output dataset file")->required();
  gen->add_option("--frames", gen_frames, "directory for PGM frame strips");
  gen->add_option("--grid-rows", gen_rows, "frame rows for --frames (checkerboard models infer)");
  gen->add_option("--grid-cols", gen_cols, "frame cols for --frames");

  auto* dens = app.add_subcommand("density", "Per-timestep log-densities of sequences");
  std::string dens_model, dens_data, dens_out;
  dens->add_option("--model", dens_model, "trained model file")->required();
  dens->add_option("--data", dens_data, "dataset file")->required();
  dens->add_option("--out", dens_out, "output CSV")->required();

  auto* ana = app.add_subcommand("analyze", "Two-sample Welch t-test between cohorts");
  std::string ana_a, ana_b, ana_out;
  std::size_t ana_t = 1;
  double ana_alpha = 0.01;
  ana->add_option("--group-a", ana_a, "dataset file, cohort A")->required();
  ana->add_option("--group-b", ana_b, "dataset file, cohort B")->required();
  ana->add_option("--t-index", ana_t, "1-based timestep to test")->required();
  ana->add_option("--alpha", ana_alpha, "significance level (default 0.01)");
  ana->add_option("--out", ana_out, "output CSV")->required();

  auto* ver = app.add_subcommand("verify", "Run the invariant/oracle suite");
  std::string ver_config;
  std::uint64_t ver_seed = 0;
  ver->add_option("--config", ver_config, "also check round trips at this config");
  ver->add_option("--seed", ver_seed, "RNG seed (default 0)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << e.what() << "\n\n" << app.help() << "\n";
    return 2;
  }

  try {
    if (*synth) {
      return cmd_synth(synth_kind, synth_n, synth_t, synth_rows, synth_cols, synth_d, synth_seed,
                       synth_out);
    }
    if (*train_cmd) {
      return cmd_train(train_config, train_data, train_out, train_metrics, train_seed);
    }
    if (*gen) {
      return cmd_generate(gen_model, gen_conditions, gen_n, gen_seed, gen_out, gen_frames,
                          gen_rows, gen_cols);
    }
    if (*dens) return cmd_density(dens_model, dens_data, dens_out);
    if (*ana) return cmd_analyze(ana_a, ana_b, ana_t, ana_alpha, ana_out);
    if (*ver) return cmd_verify(ver_config, ver_seed);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
