#pragma once

// Single runs and preset x noise-ratio x seed grids, with CSV output.

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "nlw/experiment.hpp"

namespace nlw {

/// Sets engine.seed to `seed` and derives the noise seed from it, so each
/// seed is a fresh noise draw and a fresh initialization.
void apply_seed(ExperimentConfig& config, std::uint64_t seed);

/// Loads data, trains, and writes `<out>/report.csv` and `<out>/config.exp`.
RunResult run_experiment(const ExperimentConfig& config, const std::filesystem::path& out);

struct CellMetrics {
  double final_acc = 0.0;
  double best_acc = 0.0;
  double mean_acc_last10 = 0.0;
};

/// NaN fields when the report has no rows.
CellMetrics cell_metrics(const RunReport& report);

struct GridCell {
  std::string run_id;
  std::string preset;
  NoiseKind noise_kind = NoiseKind::symmetric;
  double noise_ratio = 0.0;
  std::uint64_t seed = 0;
  bool ok = false;
  std::string error;
  CellMetrics metrics;
};

struct GroupAggregate {
  std::string preset;
  double noise_ratio = 0.0;
  int runs = 0;  // successful cells in the group
  CellMetrics mean;
  CellMetrics stddev;  // sample standard deviation; 0 for a single run
};

struct GridResult {
  std::vector<GridCell> cells;
  std::vector<GroupAggregate> groups;
};

struct GridSpec {
  /// Experiment text; any engine.preset line is replaced per cell.
  std::string base_text;
  std::vector<std::string> presets;
  std::vector<double> ratios;
  std::vector<std::uint64_t> seeds;
  int parallel = 1;
  std::filesystem::path out;
};

/// Runs every cell, writes `<out>/<run_id>/report.csv` per cell and
/// `<out>/summary.csv`. A failed cell is recorded and does not stop the grid.
/// Throws ConfigError when the axes are empty or a cell config is invalid.
GridResult run_grid(const GridSpec& spec);

std::vector<GroupAggregate> aggregate(const std::vector<GridCell>& cells);

/// run_id,preset,noise_kind,noise_ratio,seed,final_acc,best_acc,mean_acc_last10
/// Aggregate rows use run_id `agg`, seed `mean+-std`, and `M+-S` metric cells.
std::string summary_csv(const GridResult& result);

/// "0..4" (inclusive range) or "1,5,9".
std::vector<std::uint64_t> parse_seed_list(std::string_view text);

}  // namespace nlw
