#pragma once

#include <string>

#include "crow/dataset.hpp"
#include "crow/flow.hpp"
#include "crow/training.hpp"

namespace crow {

// Binary container: magic "CROW", format version u32, container kind u32,
// metadata block, then raw little-endian f64 payload. load(save(x)) == x
// bit-exactly. Writes go through a temp file and an atomic rename.
inline constexpr std::uint32_t kFormatVersion = 1;
inline constexpr std::uint32_t kKindModel = 1;
inline constexpr std::uint32_t kKindDataset = 2;

void save_model(const FlowModel& m, const std::string& path);
FlowModel load_model(const std::string& path);

void save_dataset(const Dataset& ds, const std::string& path);
Dataset load_dataset(const std::string& path);

/// One binary PGM (P5, maxval 255) per timestep, named frame_<t>.pgm with t
/// starting at 1. Values are clipped to [0, 1] then scaled by 255.
void write_frames_pgm(const SequenceSample& sample, std::size_t rows, std::size_t cols,
                      const std::string& dir);

struct PgmImage {
  std::size_t rows = 0, cols = 0;
  std::vector<unsigned char> pixels;
};
PgmImage read_pgm(const std::string& path);

// Conditions CSV: header t,y_1,...,y_{d_y}, one row per timestep; covariates
// pass through unscaled.
std::vector<Tensor> read_conditions_csv(const std::string& path);
void write_conditions_csv(const std::vector<Tensor>& covariates, const std::string& path);

struct DensityRow {
  std::size_t seq_id = 0;
  std::size_t t = 0;  // 1-based timestep
  double logdet = 0.0;
  double log_density = 0.0;
};
void write_density_csv(const std::vector<DensityRow>& rows, const std::string& path);

void write_metrics_csv(const std::vector<EpochMetrics>& metrics, const std::string& path);

struct GroupStats;  // stats.hpp
void write_analysis_csv(const GroupStats& stats, const std::string& path);

// Format a double so the value round-trips exactly; shared by the CSV
// writers to keep outputs byte-stable.
std::string format_double(double v);

}  // namespace crow
