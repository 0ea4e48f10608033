#pragma once

// Loading of manifest / observation / run / quality files and their
// correlation into a labeled training set.

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "machstate/bundle.hpp"
#include "machstate/core.hpp"
#include "machstate/tree.hpp"

namespace machstate {

struct Series {
  std::string id;
  std::vector<Timestamp> t;
  std::vector<double> v;
};

/// Observations of one parameter kind.
struct ObservationTable {
  ParamKind kind = ParamKind::sensor;
  std::vector<Series> series;  // manifest order
  std::int64_t source_rows = 0;   // CSV rows with at least one value of this kind
  std::int64_t dropped_rows = 0;  // rows lacking any value of this kind
};

struct QualitySample {
  std::string batch_id;
  Timestamp t = 0;
  double measurement = 0.0;
};

struct RawDataset {
  Manifest manifest;
  ObservationTable sensors;
  ObservationTable settings;
  std::vector<ProductionRun> runs;  // sorted by start
  std::vector<QualitySample> quality;
  std::vector<std::string> warnings;
};

Manifest parse_manifest(const std::string& json_text);
/// Parses the wide observation CSV and fills observed_min/max in `manifest`.
void parse_observations(const std::string& csv_text, Manifest& manifest, ObservationTable& sensors,
                        ObservationTable& settings);
std::vector<ProductionRun> parse_runs(const std::string& csv_text);
std::vector<QualitySample> parse_quality(const std::string& csv_text);

RawDataset load_dataset(const std::string& manifest_path, const std::string& observations_path,
                        const std::string& runs_path, const std::string& quality_path);

struct AlignmentReport {
  std::int64_t grid_instants = 0;
  std::int64_t aligned = 0;
  std::int64_t dropped = 0;
  std::int64_t dropped_sensor_stale = 0;   // instants where some sensor was stale
  std::int64_t dropped_setting_stale = 0;  // instants where some setting was stale
};

struct AlignOptions {
  double grid_seconds = 10.0;
  int staleness_steps = 5;
};

/// Zero-order hold onto a regular grid anchored at the first observation.
/// new_settings is left equal to settings; see derive_new_settings.
std::vector<MachineSnapshot> align_snapshots(const ObservationTable& sensors,
                                             const ObservationTable& settings,
                                             const AlignOptions& options,
                                             AlignmentReport* report = nullptr);

/// Index into `runs` (sorted by start) of the unique run whose [start, end]
/// contains t; -1 when no run or more than one does.
int run_index_at(const std::vector<ProductionRun>& runs, Timestamp t);

/// h^b(t) = h(next aligned instant of the same run); h^b = h at a run's
/// last instant and outside runs. `snapshots` must be sorted by t.
void derive_new_settings(std::vector<MachineSnapshot>& snapshots,
                         const std::vector<ProductionRun>& runs);

struct RunLabels {
  std::map<std::string, std::string> labels;  // batch id -> label
  std::vector<std::string> excluded;          // batch ids without a usable label
  std::vector<std::string> warnings;
};

std::optional<std::string> aggregate_label(const std::vector<double>& measurements,
                                           const QualityConfig& config);

RunLabels label_runs(const std::vector<ProductionRun>& runs,
                     const std::vector<QualitySample>& samples, const QualityConfig& config);

struct TrainingSample {
  Timestamp t = 0;
  ProcessSnapshot snapshot;
  std::string batch_id;
  std::string label;
};

struct TrainingSet {
  std::vector<TrainingSample> samples;
  Manifest manifest;
  QualityConfig quality;
  TrainingWindow window;
  std::map<std::string, std::string> run_labels;
  std::int64_t discarded_outside_runs = 0;
  std::int64_t discarded_unlabeled_run = 0;
  std::int64_t discarded_outside_window = 0;
};

/// Throws Error("empty training set") when no snapshot survives.
TrainingSet build_training_set(const std::vector<MachineSnapshot>& snapshots,
                               const std::vector<ProductionRun>& runs,
                               const std::map<std::string, std::string>& run_labels,
                               const TrainingWindow& window, const Manifest& manifest,
                               const QualityConfig& quality);

/// Dense matrix for one space: status -> every manifest parameter in
/// manifest order; new_settings -> setting parameters in manifest order.
LabeledMatrix to_matrix(const TrainingSet& set, Space space);
std::vector<std::string> space_columns(const Manifest& manifest, Space space);

struct IngestReport {
  std::int64_t sensor_source_rows = 0;
  std::int64_t setting_source_rows = 0;
  AlignmentReport alignment;
  std::int64_t runs = 0;
  std::int64_t runs_excluded = 0;
  std::int64_t training_samples = 0;
  std::int64_t discarded_outside_runs = 0;
  std::int64_t discarded_unlabeled_run = 0;
  std::int64_t discarded_outside_window = 0;
  std::vector<std::string> warnings;
};

std::string ingest_report_json(const IngestReport& report);

}  // namespace machstate
