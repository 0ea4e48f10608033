#pragma once

// Synthetic production datasets generated from a PlantSpec, written in the
// same file formats the ingest stage reads.

#include <cstdint>
#include <string>
#include <vector>

#include "machstate/core.hpp"
#include "machstate/plant.hpp"

namespace machstate {

struct SettingRange {
  std::string id;
  double min = 0.0;
  double max = 1.0;
};

/// Per-material additive shift on a sensor's offset.
struct MaterialShift {
  std::string material_type;
  std::string sensor_id;
  double offset = 0.0;
};

struct ScenarioSpec {
  PlantSpec plant;
  QualityConfig quality;
  std::int64_t runs = 100;
  std::int64_t ticks_per_run = 60;
  std::int64_t gap_ticks = 5;
  double grid_seconds = 10.0;
  Timestamp start = 1704067200000;  // 2024-01-01T00:00:00Z
  std::vector<std::string> material_types{"type-1"};
  std::vector<MaterialShift> material_shifts;
  std::vector<SettingRange> ranges;  // per-run setting draws
  double setting_resolution = 0.0;   // round draws to this step when > 0
  double change_probability = 0.5;   // chance of one early operator correction
  std::int64_t max_change_tick = 2;
  std::int64_t setting_heartbeat_ticks = 3;
  std::int64_t quality_every_ticks = 15;
  std::uint64_t seed = 7;
};

struct SyntheticDataset {
  std::string manifest_json;
  std::string observations_csv;
  std::string runs_csv;
  std::string quality_csv;
  std::string quality_config_json;
  std::int64_t target_runs = 0;

  /// Writes manifest.json, observations.csv, runs.csv, quality.csv,
  /// quality_config.json under `dir`.
  void write(const std::string& dir) const;
};

SyntheticDataset generate_dataset(const ScenarioSpec& scenario);

/// Target iff h1 in (100, 110] and s1 <= 50; h2 drives s1, q tracks h1.
ScenarioSpec recoverability_scenario(std::uint64_t seed = 7);
/// 23 sensors, 7 settings, three raw-material types.
ScenarioSpec reference_scale_scenario(std::uint64_t seed = 11);

std::string quality_config_json(const QualityConfig& config);
QualityConfig parse_quality_config(const std::string& json_text);

}  // namespace machstate
