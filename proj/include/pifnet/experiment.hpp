#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "pifnet/config.hpp"
#include "pifnet/model.hpp"
#include "pifnet/synth.hpp"
#include "pifnet/train.hpp"

namespace pifnet {

/// Everything one experiment needs: architecture, per-arm training
/// settings, data source and repetition protocol.
struct ExperimentConfig {
  /// Shared architecture. The baseline uses all five filter counts; the PIF
  /// model uses the first four followed by `pif`.
  ModelSpec model;
  PifConfig pif;
  TrainConfig baseline_train;
  TrainConfig pif_train;
  SynthSpec data;
  std::optional<std::filesystem::path> data_dir;
  std::size_t repetitions = 10;
  std::optional<double> subset_fraction;
  std::uint64_t seed = 42;
};

/// Desk-scale defaults (2D 32x32 synthetic data, 8x8 PIF input with 2x2 patches).
ExperimentConfig default_experiment();

/// Applies a parsed config on top of the defaults. Unknown keys, invalid
/// values and a translation policy on the PIF arm raise ConfigError.
ExperimentConfig experiment_from_config(const Config& cfg);
ExperimentConfig load_experiment(const std::filesystem::path& path);

ModelSpec model_spec_for(const ExperimentConfig& cfg, ModelKind kind);
TrainConfig train_config_for(const ExperimentConfig& cfg, ModelKind kind);

/// Generated splits, or the dataset directory when one is configured.
DataSplits load_or_generate(const ExperimentConfig& cfg);

/// Creates `<base>/<prefix>-NNNN` with the first unused index.
std::filesystem::path next_run_dir(const std::filesystem::path& base, const std::string& prefix);

struct GenSummary {
  std::filesystem::path dir;
  std::size_t samples = 0;
  std::vector<std::size_t> class_counts;
  std::uint64_t spec_hash = 0;
};

/// Writes the configured synthetic dataset to `out`; refuses to overwrite
/// an existing dataset (IoError).
GenSummary cmd_gen(const ExperimentConfig& cfg, const std::filesystem::path& out, std::ostream& log);

struct RunResult {
  ModelKind kind = ModelKind::baseline;
  std::string regime;
  std::size_t repetition = 0;
  std::uint64_t seed = 0;
  TrainHistory history;
  double test_bacc = 0.0;
  std::size_t param_count = 0;
  bool diverged = false;
  std::size_t diverged_epoch = 0;
};

/// One training run. Model init and subset draws use streams derived from
/// `seed`, so two arms with the same seed see identical data and stems.
RunResult run_training(const ExperimentConfig& cfg, const DataSplits& data, ModelKind kind,
                       std::uint64_t seed, std::optional<double> subset);

/// `stop_iteration,best_epoch,best_val_bacc,param_count,seed` header + row.
std::string summary_csv(const RunResult& r);

struct TrainOutcome {
  std::filesystem::path dir;
  RunResult result;
};

/// Trains once and writes history.csv, summary.csv and weights/ into a
/// fresh versioned directory under `out_base`.
TrainOutcome cmd_train(const ExperimentConfig& cfg, ModelKind kind, std::uint64_t seed,
                       std::optional<double> subset, const std::filesystem::path& out_base,
                       std::ostream& log);

struct CompareRow {
  std::string model;
  std::string regime;
  double mean_bal_acc = 0.0;
  double mean_stop_iter = 0.0;
  std::size_t param_count = 0;
  double mean_test_bal_acc = 0.0;
  std::size_t runs = 0;
  std::size_t diverged = 0;
};

struct CompareReport {
  std::filesystem::path dir;
  std::vector<RunResult> runs;
  std::vector<CompareRow> rows;
  std::size_t repetitions = 0;
  double subset_fraction = 0.0;
  /// More than half of some arm's runs diverged.
  bool failed = false;

  const CompareRow& row(const std::string& model, const std::string& regime) const;
};

/// Paired-seed comparison: repetition r uses seed + r for both arms, in the
/// full and the subset regime. Writes runs.csv, compare.csv and report.txt.
CompareReport cmd_compare(const ExperimentConfig& cfg, std::uint64_t seed, std::size_t reps,
                          std::optional<double> subset, const std::filesystem::path& out_base,
                          std::ostream& log);

std::string compare_csv(const CompareReport& r);
std::string compare_table(const CompareReport& r);

}  // namespace pifnet
