#pragma once

#include "pgcan/cli/config.hpp"
#include "pgcan/evaluation.hpp"

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace pgcan::cli {

enum ExitCode { kSuccess = 0, kFailure = 1, kUsage = 2, kNumeric = 3 };

/// Writes to a temporary sibling, then renames over `path`.
void write_atomic(const std::filesystem::path& path, const std::string& content);

/// %.17g, with "nan"/"inf"/"-inf" spelled out.
std::string format_double(double v);

/// metrics.csv header for a problem:
/// epoch,loss_pde,loss_bc,loss_ic,lambda_bc,lambda_ic,lr,l2rel[,l2rel_<name>...].
std::string metrics_header(const PDEProblem& problem);
std::string metrics_line(const MetricRow& row);

struct SeedStats {
  double mean = 0.0;
  /// Sample standard deviation (n - 1); 0 for a single seed.
  double std = 0.0;
  double median = 0.0;
  double best = 0.0;
};
SeedStats seed_statistics(const std::vector<double>& finals);

struct TrainOptions {
  bool force = false;
  bool resume = false;
  std::function<void(const std::string&)> log;
};

/// Trains every seed of `config` into its run directory:
///   config.json, summary.json,
///   seed_<s>/metrics.csv, seed_<s>/checkpoints/epoch_<EEEEEE>.ckpt.
/// Refuses a non-empty directory unless `force` (which clears previous run
/// artifacts) or `resume` (which continues each seed from its latest
/// checkpoint when the config hash matches).
std::filesystem::path cmd_train(const RunConfig& config, const TrainOptions& options = {});

struct TableRow {
  std::string problem;
  std::string parameter;
  std::string architecture;
  SeedStats stats;
};
struct SweepResult {
  std::filesystem::path table;
  std::vector<TableRow> rows;
  int skipped = 0;
};

/// Runs every cell of the sweep under `root` and writes root/table.csv with
/// columns problem,parameter,architecture,mean,std,median,best. Cells whose
/// summary.json carries the same config hash are skipped; interrupted cells
/// resume from their checkpoints.
SweepResult cmd_sweep(const SweepConfig& sweep, const std::filesystem::path& root, const TrainOptions& options = {});

struct AnalyzeOptions {
  int resolution = 256;
  /// Checkpoint epoch to analyze; latest when unset.
  std::optional<int> epoch;
  /// Seeds to analyze; all seeds of the run when empty.
  std::vector<std::uint64_t> seeds;
  std::vector<int> study_resolutions{32, 64, 128, 256};
};

/// Writes <run>/analysis/seed_<s>/ with error_<channel>.csv (x,y,err),
/// psd_<channel>.csv (direction,bin,raw,log10,value), features.csv for
/// PGCAN runs and resolution.csv, plus analysis/summary.json with L2_rel and
/// flatness scores. Deterministic: analyzing twice gives identical files.
std::filesystem::path cmd_analyze(const std::filesystem::path& run_dir, const AnalyzeOptions& options = {});

/// Reads an x,y,err CSV onto its N x N lattice; absent nodes are 0.
Eigen::MatrixXd read_field_csv(const std::filesystem::path& path);

/// Directional PSD curves of each field, aligned across all inputs per
/// direction. Writes out/psd_curves.csv (field,direction,bin,raw,log10,value)
/// and out/flatness.csv (field,direction,flatness,raw_zero).
std::filesystem::path cmd_psd(const std::vector<std::filesystem::path>& fields, const std::filesystem::path& out);

}  // namespace pgcan::cli
