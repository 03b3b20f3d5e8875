#pragma once

#include <cstdint>

namespace crow {

/// Deterministic PRNG embedded in the repo so streams are reproducible across
/// platforms: xoshiro256** (Blackman/Vigna), seeded through splitmix64.
/// Same seed => same stream of u64 draws, independent of the platform RNG.
struct RngState {
  std::uint64_t seed = 0;
  std::uint64_t s[4] = {0, 0, 0, 0};

  RngState() : RngState(0) {}
  explicit RngState(std::uint64_t seed_value);

  std::uint64_t next_u64();

  // Uniform double in (0, 1): 53 high bits, zero mapped to the smallest step.
  double next_uniform();

  // Derives an independent, reproducible child stream (used to give each
  // dataset sample / batch item its own seed).
  RngState fork();
};

}  // namespace crow
