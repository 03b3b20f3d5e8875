#pragma once

#include "crow/dataset.hpp"

namespace crow {

/// Two-class moving-sprite sequences: a 2-pixel-radius Gaussian blob (disk or
/// cross) translating rightward one column per step and reflecting at the
/// boundaries. Covariate y^t is the one-hot shape class. Frames are
/// vectorized row-major with values in [0, 1] plus light pixel noise.
Dataset synth_moving_blob(std::size_t n, std::size_t T, std::size_t rows, std::size_t cols,
                          RngState& rng);

/// Two-cohort regime sequences mirroring a control-vs-progression design:
/// control stays at the baseline with a flat scalar covariate (10 -> 10 ->
/// ...), progression drifts k = ceil(d/8) designated coordinates by +0.5 per
/// step with the covariate rising 10 per step (10 -> 20 -> 30 over T = 3).
Dataset synth_regime(std::size_t n, std::size_t T, std::size_t d, RngState& rng);

// The coordinates synth_regime drifts, evenly spaced over [0, d).
std::vector<std::size_t> regime_drift_coords(std::size_t d);

constexpr double kRegimeBaseline = 1.0;
constexpr double kRegimeDrift = 0.5;
constexpr double kRegimeNoise = 0.1;
constexpr double kRegimeCovariateStart = 10.0;
constexpr double kRegimeCovariateStep = 10.0;

}  // namespace crow
