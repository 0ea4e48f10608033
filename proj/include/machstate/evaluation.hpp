#pragma once

// Per-snapshot accuracy, per-run correct prediction frequency, CCDF curves
// and the minimum-leaf-size sweep, stratified by raw-material type.

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "machstate/analytics.hpp"
#include "machstate/pipeline.hpp"

namespace machstate {

struct RunEvaluation {
  std::string batch_id;
  std::string actual_label;
  std::int64_t snapshot_count = 0;
  std::int64_t correct_count = 0;
  std::int64_t unknown_count = 0;
  /// correct / (snapshots - unknown); absent when every verdict is unknown.
  std::optional<double> frequency;
};

/// A prediction is correct iff (verdict == target) <=> (actual == target).
RunEvaluation evaluate_run(const CompiledModel& model, const std::vector<ProcessSnapshot>& snapshots,
                           const std::string& batch_id, const std::string& actual_label,
                           double threshold = kDefaultDecisionThreshold,
                           Exec exec = Exec::parallel);

using CcdfPoint = std::pair<double, double>;

/// x in {0, step, ..., 1}: fraction of evaluable runs with frequency > x.
/// Throws Error("no evaluable runs").
std::vector<CcdfPoint> frequency_ccdf(const std::vector<RunEvaluation>& runs, double grid_step);

enum class SplitKind { temporal, random };

struct RunSplit {
  SplitKind kind = SplitKind::temporal;
  double train_fraction = 6.0 / 7.0;  // six months train, one month test
  std::uint64_t seed = 0;
};

struct StateCounts {
  std::int64_t status_states = 0;
  std::int64_t settings_states = 0;
  std::int64_t composites = 0;
  std::int64_t supported_composites = 0;

  std::int64_t total_states() const { return status_states + settings_states; }
};

struct SweepCell {
  std::string material_type;
  std::int64_t min_leaf_size = 0;
  std::vector<std::string> train_runs;
  std::vector<std::string> test_runs;
  std::int64_t evaluated_snapshots = 0;  // excludes unknown verdicts
  std::int64_t correct_snapshots = 0;
  std::int64_t unknown_snapshots = 0;
  std::optional<double> accuracy;           // pooled over snapshots
  std::optional<double> run_mean_accuracy;  // unweighted mean of run frequencies
  std::vector<RunEvaluation> runs;
  StateCounts states;
  std::vector<CcdfPoint> ccdf;
};

struct SweepOptions {
  double threshold = kDefaultDecisionThreshold;
  double ccdf_step = 0.05;
  Exec exec = Exec::parallel;
};

struct SweepReport {
  std::vector<SweepCell> cells;  // (material type, leaf size) order
  RunSplit split;
  SweepOptions options;
};

inline const std::string kUnspecifiedMaterial = "unspecified";

std::string material_of(const ProductionRun& run);

/// Whole-run train/test assignment for one material type.
std::pair<std::vector<std::string>, std::vector<std::string>> split_runs(
    const std::vector<ProductionRun>& runs, const RunSplit& split);

/// Throws Error("material type has no test runs: <type>").
SweepReport sweep_min_leaf_size(const LabeledDataset& dataset,
                                const std::vector<std::int64_t>& leaf_sizes,
                                const std::vector<std::string>& material_types,
                                const RunSplit& split, const SweepOptions& options = {});

std::string sweep_report_json(const SweepReport& report);
/// material_type,min_leaf_size,accuracy,run_mean_accuracy,... one row per cell.
std::string accuracy_csv(const SweepReport& report);
/// x,fraction columns, one per leaf size, for one material type.
std::string ccdf_csv(const SweepReport& report, const std::string& material_type);
std::string sweep_summary_table(const SweepReport& report);

}  // namespace machstate
