#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "sinessl/harness/config.hpp"

namespace sinessl {

/// One training run of an experiment grid.
struct CellRun {
  std::string cell;
  std::uint64_t seed = 0;
  /// Effective configuration of this run alone.
  ToolConfig config;
};

struct SummaryRow {
  std::string experiment;
  std::string cell;
  double mean_accuracy = 0.0;
  double std_accuracy = 0.0;
  double min_accuracy = 0.0;
  double max_accuracy = 0.0;
  std::vector<std::uint64_t> seeds;
};

inline constexpr const char* kSummaryHeader = "experiment,cell,mean_accuracy,std_accuracy,min_accuracy,max_accuracy,seeds";

/// Expands the experiment named in cfg.experiment.name into its runs, cell
/// by cell in row order.
std::vector<CellRun> expand_grid(const ToolConfig& cfg);

/// Trains a single run into `dir` (metrics.csv, trace.csv, confusion.csv,
/// config.json, checkpoint/, then done.marker).
void execute_run(const ToolConfig& run_cfg, const std::filesystem::path& dir);

using ProgressFn = std::function<void(const std::string& line)>;

/// Runs every grid cell not yet marked done under runs_dir/<name>, then
/// writes the report files. Returns the summary rows.
std::vector<SummaryRow> run_experiment(const ToolConfig& cfg, const ProgressFn& progress = {});

struct ReportFiles {
  std::vector<SummaryRow> summary;
  std::filesystem::path summary_csv, threshold_trace_csv, mask_rate_trace_csv;
};

/// Rebuilds summary.csv, threshold_trace.csv (cell,seed,iter,threshold) and
/// mask_rate_trace.csv (cell,seed,iter,mask_rate) from the completed runs
/// under `exp_dir`. Cells keep the order recorded in grid.json when present.
/// Throws IoError when no completed run exists.
ReportFiles report(const std::filesystem::path& exp_dir);

/// Final-row test accuracy of a metrics.csv.
double final_accuracy(const std::filesystem::path& metrics_csv);

std::vector<SummaryRow> read_summary_csv(const std::filesystem::path& path);

}  // namespace sinessl
