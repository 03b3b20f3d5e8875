#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "crow/flow.hpp"

namespace crow {

struct DatasetMeta {
  std::size_t d_x = 0;
  std::size_t d_y = 0;
  std::size_t T = 0;
  std::string kind;  // "blob", "regime", "generated", ...
  std::uint64_t seed = 0;
  std::size_t rows = 0, cols = 0;  // frame grid when applicable, else 0
};

struct Dataset {
  std::vector<SequenceSample> samples;
  DatasetMeta meta;

  // Throws when any sample disagrees with meta.
  void validate() const;
};

}  // namespace crow
