#include "crow/synth.hpp"

#include <cmath>

namespace crow {

namespace {

constexpr std::size_t kBlobMargin = 2;
constexpr double kBlobNoise = 0.02;

double disk_value(double di, double dj) {
  return std::exp(-0.5 * (di * di + dj * dj));
}

double cross_value(double di, double dj) {
  const double horiz = std::exp(-0.5 * (di * di / 0.2 + dj * dj / 4.0));
  const double vert = std::exp(-0.5 * (di * di / 4.0 + dj * dj / 0.2));
  return std::max(horiz, vert);
}

Tensor render_blob(std::size_t rows, std::size_t cols, double cr, double cc, bool cross,
                   RngState& rng) {
  Tensor frame({rows * cols});
  Tensor noise = sample_standard_normal(rng, rows * cols);
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < cols; ++j) {
      const double di = static_cast<double>(i) - cr;
      const double dj = static_cast<double>(j) - cc;
      double v = cross ? cross_value(di, dj) : disk_value(di, dj);
      v += kBlobNoise * noise[i * cols + j];
      frame[i * cols + j] = std::min(1.0, std::max(0.0, v));
    }
  }
  return frame;
}

std::size_t uniform_index(RngState& rng, std::size_t lo, std::size_t hi) {
  return lo + static_cast<std::size_t>(rng.next_u64() % (hi - lo + 1));
}

}  // namespace

Dataset synth_moving_blob(std::size_t n, std::size_t T, std::size_t rows, std::size_t cols,
                          RngState& rng) {
  if (rows < 2 * kBlobMargin + 4 || cols < 2 * kBlobMargin + 4) {
    throw std::invalid_argument("synth_moving_blob: blob larger than grid; need at least 8x8, got " +
                                std::to_string(rows) + "x" + std::to_string(cols));
  }
  if (T < 2) throw std::invalid_argument("synth_moving_blob: T must be >= 2");
  Dataset ds;
  ds.meta = {rows * cols, 2, T, "blob", rng.seed, rows, cols};
  ds.samples.reserve(n);
  for (std::size_t s = 0; s < n; ++s) {
    const bool cross = (s % 2 == 1);  // balanced classes
    const std::size_t row = uniform_index(rng, kBlobMargin, rows - 1 - kBlobMargin);
    std::size_t col = uniform_index(rng, kBlobMargin, cols - 1 - kBlobMargin);
    int dir = 1;
    SequenceSample sample;
    sample.frames.reserve(T);
    sample.covariates.reserve(T);
    for (std::size_t t = 0; t < T; ++t) {
      sample.frames.push_back(render_blob(rows, cols, static_cast<double>(row),
                                          static_cast<double>(col), cross, rng));
      sample.covariates.push_back(cross ? Tensor::of({0.0, 1.0}) : Tensor::of({1.0, 0.0}));
      // advance rightward, reflecting at the margins
      long next = static_cast<long>(col) + dir;
      if (next > static_cast<long>(cols - 1 - kBlobMargin) || next < static_cast<long>(kBlobMargin)) {
        dir = -dir;
        next = static_cast<long>(col) + dir;
      }
      col = static_cast<std::size_t>(next);
    }
    ds.samples.push_back(std::move(sample));
  }
  return ds;
}

std::vector<std::size_t> regime_drift_coords(std::size_t d) {
  const std::size_t k = (d + 7) / 8;
  std::vector<std::size_t> coords;
  coords.reserve(k);
  for (std::size_t j = 0; j < k; ++j) coords.push_back(j * d / k);
  return coords;
}

Dataset synth_regime(std::size_t n, std::size_t T, std::size_t d, RngState& rng) {
  if (d < 4) throw std::invalid_argument("synth_regime: d must be >= 4");
  if (T < 2) throw std::invalid_argument("synth_regime: T must be >= 2");
  Dataset ds;
  ds.meta = {d, 1, T, "regime", rng.seed, 0, 0};
  ds.samples.reserve(n);
  const std::vector<std::size_t> drift = regime_drift_coords(d);
  for (std::size_t s = 0; s < n; ++s) {
    const bool progress = (s % 2 == 1);
    SequenceSample sample;
    sample.frames.reserve(T);
    sample.covariates.reserve(T);
    for (std::size_t t = 0; t < T; ++t) {
      Tensor noise = sample_standard_normal(rng, d);
      Tensor frame({d});
      for (std::size_t i = 0; i < d; ++i) {
        frame[i] = kRegimeBaseline + kRegimeNoise * noise[i];
      }
      if (progress) {
        for (std::size_t i : drift) frame[i] += kRegimeDrift * static_cast<double>(t);
      }
      sample.frames.push_back(std::move(frame));
      const double cov = progress
                             ? kRegimeCovariateStart + kRegimeCovariateStep * static_cast<double>(t)
                             : kRegimeCovariateStart;
      sample.covariates.push_back(Tensor::of({cov}));
    }
    ds.samples.push_back(std::move(sample));
  }
  return ds;
}

}  // namespace crow
