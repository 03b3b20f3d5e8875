#include <cmath>
#include <filesystem>
#include <fstream>

#include "crow/io.hpp"
#include "crow/stats.hpp"
#include "crow/synth.hpp"
#include "doctest.h"
#include "test_helpers.hpp"

using namespace crow;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const char* tag) {
  fs::path dir = fs::temp_directory_path() / (std::string("crow_test_") + tag);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::vector<char> slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// Column centroid of the brightest structure in a frame.
double blob_center_col(const Tensor& frame, std::size_t rows, std::size_t cols) {
  double weight = 0.0, acc = 0.0;
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j) {
      double v = frame[i * cols + j];
      acc += v * static_cast<double>(j);
      weight += v;
    }
  return acc / weight;
}

}  // namespace

TEST_CASE("blob dataset dimensions and covariates") {
  RngState rng(1);
  Dataset ds = synth_moving_blob(20, 6, 12, 12, rng);
  CHECK(ds.meta.d_x == 144);
  CHECK(ds.meta.d_y == 2);
  CHECK(ds.meta.T == 6);
  CHECK(ds.samples.size() == 20);
  ds.validate();
  for (const auto& s : ds.samples) {
    // one-hot class, constant across the sequence
    CHECK(s.covariates[0][0] + s.covariates[0][1] == 1.0);
    for (std::size_t t = 1; t < 6; ++t) CHECK(s.covariates[t] == s.covariates[0]);
  }
  CHECK_THROWS_WITH_AS(synth_moving_blob(2, 6, 6, 6, rng), doctest::Contains("blob larger"),
                       std::invalid_argument);
}

TEST_CASE("blob trajectories reflect at the right boundary") {
  RngState rng(2);
  // long sequences guarantee several boundary hits
  Dataset ds = synth_moving_blob(6, 24, 12, 12, rng);
  for (const auto& s : ds.samples) {
    std::vector<double> centers;
    for (const auto& f : s.frames) centers.push_back(blob_center_col(f, 12, 12));
    bool bounced = false;
    for (std::size_t t = 2; t < centers.size(); ++t) {
      double prev_step = centers[t - 1] - centers[t - 2];
      double step = centers[t] - centers[t - 1];
      CHECK(std::fabs(step) < 1.6);  // one column per step, plus noise jitter
      if (prev_step > 0.25 && step < -0.25) {
        // direction flipped: must have happened near the right margin
        CHECK(centers[t - 1] > 7.5);
        bounced = true;
      }
    }
    CHECK(bounced);
  }
}

TEST_CASE("synth generators are pure functions of the seed") {
  auto dir = temp_dir("synth_purity");
  RngState a(7), b(7);
  save_dataset(synth_moving_blob(10, 4, 10, 10, a), (dir / "a.crow").string());
  save_dataset(synth_moving_blob(10, 4, 10, 10, b), (dir / "b.crow").string());
  CHECK(slurp(dir / "a.crow") == slurp(dir / "b.crow"));

  RngState c(8), d(9);
  save_dataset(synth_regime(10, 3, 8, c), (dir / "c.crow").string());
  save_dataset(synth_regime(10, 3, 8, d), (dir / "d.crow").string());
  CHECK(slurp(dir / "c.crow") != slurp(dir / "d.crow"));
  fs::remove_all(dir);
}

TEST_CASE("regime cohorts follow the covariate paths and drift construction") {
  RngState rng(3);
  const std::size_t T = 3, d = 82;
  Dataset ds = synth_regime(400, T, d, rng);
  CHECK(ds.meta.d_y == 1);
  std::vector<std::size_t> drift = regime_drift_coords(d);
  CHECK(drift.size() == 11);  // ceil(82 / 8)

  double control_mean = 0.0, progress_mean = 0.0;
  std::size_t n_control = 0, n_progress = 0;
  for (const auto& s : ds.samples) {
    const bool progress = s.covariates[1][0] > 10.0;
    if (progress) {
      CHECK(s.covariates[0][0] == 10.0);
      CHECK(s.covariates[1][0] == 20.0);
      CHECK(s.covariates[2][0] == 30.0);
      for (std::size_t i : drift) progress_mean += s.frames[2][i];
      n_progress += drift.size();
    } else {
      for (std::size_t t = 0; t < T; ++t) CHECK(s.covariates[t][0] == 10.0);
      for (std::size_t i : drift) control_mean += s.frames[2][i];
      n_control += drift.size();
    }
  }
  control_mean /= static_cast<double>(n_control);
  progress_mean /= static_cast<double>(n_progress);
  // +0.5 per step for (T - 1) steps separates the cohort means by 1.0
  CHECK(progress_mean - control_mean ==
        doctest::Approx(kRegimeDrift * static_cast<double>(T - 1)).epsilon(0.05));
}

TEST_CASE("group_analysis null, separation and degenerate contracts") {
  RngState rng(4);
  std::vector<Tensor> same;
  for (int i = 0; i < 6; ++i) same.push_back(sample_standard_normal(rng, 5));
  GroupStats null_stats = group_analysis(same, same, 0.01);
  CHECK(null_stats.n_significant() == 0);
  for (const auto& f : null_stats.features) {
    CHECK(f.t_stat == 0.0);
    CHECK(f.p_corrected == 1.0);
  }

  std::vector<Tensor> a, b;
  for (int i = 0; i < 100; ++i) {
    a.push_back(sample_standard_normal(rng, 1));
    Tensor shifted = sample_standard_normal(rng, 1);
    shifted[0] += 5.0;
    b.push_back(shifted);
  }
  GroupStats sep = group_analysis(a, b, 0.01);
  CHECK(sep.features[0].significant);
  CHECK(sep.features[0].p_corrected < 1e-6);

  std::vector<Tensor> constant(5, Tensor::of({2.0}));
  std::vector<Tensor> constant2(5, Tensor::of({3.0}));
  GroupStats degen = group_analysis(constant, constant2, 0.01);
  CHECK(degen.features[0].degenerate);
  CHECK(degen.features[0].p_raw == 1.0);
  CHECK_FALSE(degen.features[0].significant);

  CHECK_THROWS_AS(group_analysis({Tensor({2})}, {Tensor({2})}, 0.01), std::invalid_argument);
}

TEST_CASE("group_analysis flags are invariant under consistent feature reordering") {
  RngState rng(5);
  const std::size_t d = 6;
  std::vector<Tensor> a, b;
  for (int i = 0; i < 40; ++i) {
    Tensor xa = sample_standard_normal(rng, d);
    Tensor xb = sample_standard_normal(rng, d);
    xb[2] += 3.0;  // feature 2 separates
    a.push_back(xa);
    b.push_back(xb);
  }
  GroupStats direct = group_analysis(a, b, 0.01);

  std::vector<std::size_t> perm = {4, 2, 0, 5, 1, 3};
  auto apply_perm = [&](const std::vector<Tensor>& xs) {
    std::vector<Tensor> out;
    for (const Tensor& x : xs) {
      Tensor y({d});
      for (std::size_t i = 0; i < d; ++i) y[i] = x[perm[i]];
      out.push_back(y);
    }
    return out;
  };
  GroupStats permuted = group_analysis(apply_perm(a), apply_perm(b), 0.01);
  for (std::size_t i = 0; i < d; ++i) {
    CHECK(permuted.features[i].significant == direct.features[perm[i]].significant);
    CHECK(permuted.features[i].p_raw == direct.features[perm[i]].p_raw);
  }
}

TEST_CASE("student t two-sided p against known quantiles") {
  // t = 2.086 is the 97.5% quantile at 20 dof
  CHECK(student_t_two_sided_p(2.086, 20.0) == doctest::Approx(0.05).epsilon(1e-3));
  CHECK(student_t_two_sided_p(0.0, 15.0) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(student_t_two_sided_p(12.0, 50.0) < 1e-10);
}

TEST_CASE("model serialization round trips bit-exactly") {
  auto dir = temp_dir("model_io");
  FlowConfig cfg = crow::testing::small_config(10, 14, 2, 4, 2, 6, 77);
  cfg.split.kind = SplitKind::Checkerboard;
  cfg.split.rows = 2;
  cfg.split.cols = 5;
  FlowModel m = init_model(cfg);
  RngState rng(6);
  randomize_params(m, rng, 0.7);
  save_model(m, (dir / "m.crow").string());
  FlowModel back = load_model((dir / "m.crow").string());
  CHECK(back.config.d_total == 14);
  CHECK(back.config.split.kind == SplitKind::Checkerboard);
  CHECK(crow::testing::flatten_params(back) == crow::testing::flatten_params(m));
  // identical behaviour, not just identical bytes
  Tensor x = sample_standard_normal(rng, 10);
  StepResult a = step_forward(m, x, initial_hiddens(m));
  StepResult b = step_forward(back, x, initial_hiddens(back));
  CHECK(a.z == b.z);
  CHECK(a.logdet == b.logdet);
  fs::remove_all(dir);
}

TEST_CASE("containers reject truncation, bad magic and future versions") {
  auto dir = temp_dir("bad_files");
  RngState rng(7);
  Dataset ds = synth_regime(4, 3, 8, rng);
  const std::string path = (dir / "d.crow").string();
  save_dataset(ds, path);

  std::vector<char> bytes = slurp(path);
  {
    std::ofstream out(dir / "trunc.crow", std::ios::binary);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size() / 2));
  }
  CHECK_THROWS_WITH_AS(load_dataset((dir / "trunc.crow").string()), doctest::Contains("truncated"),
                       std::runtime_error);

  {
    std::vector<char> wrong = bytes;
    wrong[0] = 'X';
    std::ofstream out(dir / "magic.crow", std::ios::binary);
    out.write(wrong.data(), static_cast<std::streamsize>(wrong.size()));
  }
  CHECK_THROWS_WITH_AS(load_dataset((dir / "magic.crow").string()), doctest::Contains("magic"),
                       std::runtime_error);

  {
    std::vector<char> future = bytes;
    future[4] = static_cast<char>(0xe7);  // version 999
    future[5] = static_cast<char>(0x03);
    std::ofstream out(dir / "future.crow", std::ios::binary);
    out.write(future.data(), static_cast<std::streamsize>(future.size()));
  }
  CHECK_THROWS_WITH_AS(load_dataset((dir / "future.crow").string()),
                       doctest::Contains("incompatible"), std::runtime_error);

  // model/dataset kinds are not interchangeable
  CHECK_THROWS_WITH_AS(load_model(path), doctest::Contains("kind"), std::runtime_error);
  fs::remove_all(dir);
}

TEST_CASE("pgm frames quantize within half a level and count T files") {
  auto dir = temp_dir("pgm");
  RngState rng(8);
  SequenceSample s;
  for (int t = 0; t < 6; ++t) {
    Tensor frame({20});
    for (std::size_t i = 0; i < 20; ++i) frame[i] = rng.next_uniform();
    frame[3] = -0.5;  // clipped to 0
    frame[4] = 1.5;   // clipped to 1
    s.frames.push_back(frame);
    s.covariates.push_back(Tensor({1}));
  }
  write_frames_pgm(s, 4, 5, (dir / "frames").string());
  for (int t = 1; t <= 6; ++t) {
    fs::path p = dir / "frames" / ("frame_" + std::to_string(t) + ".pgm");
    REQUIRE(fs::exists(p));
    PgmImage img = read_pgm(p.string());
    CHECK(img.rows == 4);
    CHECK(img.cols == 5);
    for (std::size_t i = 0; i < 20; ++i) {
      double original = std::min(1.0, std::max(0.0, s.frames[t - 1][i]));
      double decoded = static_cast<double>(img.pixels[i]) / 255.0;
      CHECK(std::fabs(decoded - original) <= 0.5 / 255.0 + 1e-12);
    }
  }
  CHECK_FALSE(fs::exists(dir / "frames" / "frame_7.pgm"));

  // all-zero frame -> all-zero payload
  SequenceSample zero;
  zero.frames.push_back(Tensor({20}));
  zero.covariates.push_back(Tensor({1}));
  write_frames_pgm(zero, 4, 5, (dir / "zero").string());
  PgmImage img = read_pgm((dir / "zero" / "frame_1.pgm").string());
  for (unsigned char px : img.pixels) CHECK(px == 0);
  fs::remove_all(dir);
}

TEST_CASE("conditions csv round trips and parses flips") {
  auto dir = temp_dir("csv");
  std::vector<Tensor> covs;
  for (int t = 0; t < 4; ++t) covs.push_back(t < 2 ? Tensor::of({1.0, 0.0}) : Tensor::of({0.0, 1.0}));
  const std::string path = (dir / "cond.csv").string();
  write_conditions_csv(covs, path);
  std::vector<Tensor> back = read_conditions_csv(path);
  REQUIRE(back.size() == 4);
  for (std::size_t t = 0; t < 4; ++t) CHECK(back[t] == covs[t]);

  std::ifstream in(path);
  std::string header;
  std::getline(in, header);
  CHECK(header == "t,y_1,y_2");
  fs::remove_all(dir);
}

TEST_CASE("density csv has one row per sequence and timestep") {
  auto dir = temp_dir("density_csv");
  std::vector<DensityRow> rows = {{0, 1, 0.5, -3.25}, {0, 2, 0.25, -4.0}, {1, 1, -0.125, -2.5}};
  const std::string path = (dir / "density.csv").string();
  write_density_csv(rows, path);
  std::ifstream in(path);
  std::string line;
  std::getline(in, line);
  CHECK(line == "seq_id,t,logdet,log_density");
  std::size_t count = 0;
  while (std::getline(in, line)) {
    if (!line.empty()) ++count;
  }
  CHECK(count == 3);
  fs::remove_all(dir);
}
