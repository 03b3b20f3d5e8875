#pragma once

#include <string>
#include <vector>

#include "crow/flow.hpp"

namespace crow {

struct CheckResult {
  std::string name;
  bool ok = false;
  std::string detail;
};

/// The invariant/oracle suite behind `crow verify`: exercises the analytic
/// formulas against the finite-difference and LU oracles, the round-trip
/// contracts, MMD properties, and serialization. Runs in seconds. When
/// `extra_config` is given, the round-trip and determinant checks also run at
/// that configuration.
std::vector<CheckResult> run_verification(std::uint64_t seed,
                                          const FlowConfig* extra_config = nullptr);

}  // namespace crow
