#pragma once

#include <string>
#include <vector>

#include "machstate/core.hpp"
#include "machstate/tree.hpp"

namespace machstate {

inline constexpr int kBundleFormatVersion = 1;

struct TrainingWindow {
  Timestamp start = 0;
  Timestamp end = 0;

  bool operator==(const TrainingWindow&) const = default;
};

struct ModelBundle {
  int format_version = kBundleFormatVersion;
  Manifest manifest;
  QualityConfig quality;
  TrainingWindow training_window;
  std::int64_t min_leaf_size = 1;
  DecisionTree status_tree;
  DecisionTree settings_tree;
  std::vector<State> status_states;
  std::vector<State> settings_states;
  std::vector<CompositeState> composites;
  std::string dataset_fingerprint;

  bool operator==(const ModelBundle&) const = default;
};

/// Empty iff every type invariant holds; each entry names the offender.
std::vector<std::string> validate_bundle(const ModelBundle& bundle);

/// Canonical JSON text: sorted keys, shortest round-trip floats, two-space
/// indentation, trailing newline.
std::string serialize_bundle(const ModelBundle& bundle);
ModelBundle deserialize_bundle(const std::string& text);

ModelBundle load_bundle(const std::string& path);
void save_bundle(const ModelBundle& bundle, const std::string& path);

}  // namespace machstate
