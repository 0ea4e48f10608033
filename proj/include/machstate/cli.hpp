#pragma once

// Command implementations behind the `machstate` executable.

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "machstate/analytics.hpp"
#include "machstate/pipeline.hpp"
#include "machstate/session.hpp"

namespace machstate {

struct DataPaths {
  std::string manifest;
  std::string data;
  std::string runs;
  std::string quality;
  std::string quality_config;  // empty: jam-style default bands
};

QualityConfig load_quality_config(const std::string& path);

LabeledDataset load_labeled(const DataPaths& paths, const PrepareOptions& options,
                            IngestReport* report = nullptr);

struct TrainOptions {
  DataPaths paths;
  PrepareOptions prepare;
  std::int64_t min_leaf_size = 30;
  Exec exec = Exec::parallel;
};

/// Ingest, fit both trees, score states, build composites.
ModelBundle run_train(const TrainOptions& options, IngestReport* report = nullptr);

struct ScriptedAction {
  std::int64_t tick = 0;
  std::optional<ValueMap> settings;
  std::optional<double> quality;
};

/// JSON list of {"tick": n, "settings": {...}} / {"tick": n, "quality": x}.
std::vector<ScriptedAction> parse_action_script(const std::string& json_text);

/// Headless session: actions scheduled at tick k are applied before tick k
/// is stepped; returns the JSON-lines log after close.
std::string run_simulation(std::shared_ptr<const CompiledModel> model, const SessionConfig& config,
                           const std::vector<ScriptedAction>& actions);

/// t,likelihood,verdict,composite_id,popularity,matched_count
std::string predictions_csv(const CompiledModel& model, const std::vector<MachineSnapshot>& snapshots,
                            double threshold);
/// t,composite_id,expected_goodness,support,<h>_low,<h>_high,<h>_point...,error
std::string recommendations_csv(const CompiledModel& model, const std::vector<MachineSnapshot>& snapshots);

int cli_main(int argc, char** argv);

}  // namespace machstate
