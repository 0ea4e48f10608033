#pragma once

// Domain types shared by every stage of the engine: parameters, snapshots,
// runs, quality configuration, intervals and the two kinds of states.

#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace machstate {

/// UTC milliseconds since the Unix epoch.
using Timestamp = std::int64_t;

/// parameter-id -> value
using ValueMap = std::map<std::string, double>;

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Serial reference loop or its OpenMP counterpart.
enum class Exec { serial, parallel };

inline constexpr double kInf = std::numeric_limits<double>::infinity();

enum class ParamKind { sensor, setting };

struct ParameterDef {
  std::string id;
  std::string name;
  ParamKind kind = ParamKind::sensor;
  std::string units;
  std::optional<double> observed_min;
  std::optional<double> observed_max;

  bool operator==(const ParameterDef&) const = default;
};

using Manifest = std::vector<ParameterDef>;

std::vector<std::string> sensor_ids(const Manifest& manifest);
std::vector<std::string> setting_ids(const Manifest& manifest);
/// All parameter ids in manifest order.
std::vector<std::string> parameter_ids(const Manifest& manifest);
const ParameterDef* find_parameter(const Manifest& manifest, const std::string& id);
/// Throws on duplicate or empty ids.
void check_manifest(const Manifest& manifest);

/// Half-open (low, high]. Infinite bounds act as absent constraints.
struct Interval {
  double low = -kInf;
  double high = kInf;

  static Interval all() { return {}; }
  bool valid() const { return !std::isnan(low) && !std::isnan(high) && low < high; }
  bool unbounded() const { return std::isinf(low) && std::isinf(high); }
  bool contains(double v) const { return v > low && v <= high; }

  bool operator==(const Interval&) const = default;
};

/// Throws Error("non-finite observation") for NaN.
bool interval_contains(const Interval& iv, double v);

struct MachineStatus {
  ValueMap sensors;
  ValueMap settings;

  bool operator==(const MachineStatus&) const = default;
};

struct ProcessSnapshot {
  MachineStatus status;
  ValueMap new_settings;

  bool operator==(const ProcessSnapshot&) const = default;
};

struct MachineSnapshot {
  Timestamp t = 0;
  ValueMap sensors;
  ValueMap settings;
  ValueMap new_settings;

  MachineStatus status() const { return {sensors, settings}; }
  ProcessSnapshot process() const { return {status(), new_settings}; }

  bool operator==(const MachineSnapshot&) const = default;
};

struct ProductionRun {
  std::string batch_id;
  Timestamp start = 0;
  Timestamp end = 0;
  std::optional<std::string> material_type;

  bool contains(Timestamp t) const { return t >= start && t <= end; }
  bool operator==(const ProductionRun&) const = default;
};

enum class Aggregation { mean, last_sample, majority_in_band };

struct QualityBand {
  std::string label;
  Interval range;

  bool operator==(const QualityBand&) const = default;
};

struct QualityConfig {
  std::vector<std::string> labels;
  std::string target_label;
  std::vector<QualityBand> bands;
  Aggregation aggregation = Aggregation::mean;
  double in_band_threshold = 0.5;

  /// Label whose band contains the measurement, if any.
  std::optional<std::string> band_of(double measurement) const;
  const QualityBand* target_band() const;
  int label_index(const std::string& label) const;
  int target_index() const { return label_index(target_label); }
  /// Throws Error describing the first violated invariant.
  void check() const;

  /// Three bands around a 65-68 % soluble-solids target (jam-style).
  static QualityConfig jam_default();

  bool operator==(const QualityConfig&) const = default;
};

enum class Space { status, new_settings };

const char* to_string(Space space);
Space space_from_string(const std::string& s);
const char* to_string(ParamKind kind);
ParamKind kind_from_string(const std::string& s);
const char* to_string(Aggregation a);
Aggregation aggregation_from_string(const std::string& s);

struct State {
  std::string id;
  Space space = Space::status;
  std::map<std::string, Interval> intervals;
  std::int64_t popularity = 0;
  double goodness = 0.0;

  bool operator==(const State&) const = default;
};

/// True iff every interval of `state` contains the corresponding observation.
/// Throws Error("missing parameter: <id>") when a finitely bounded parameter
/// is absent from `obs`.
bool state_matches(const State& state, const ValueMap& obs);

struct CompositeState {
  std::string id;
  std::string status_state_id;
  std::string settings_state_id;
  std::int64_t popularity = 0;
  double goodness = 0.0;

  bool matchable() const { return popularity > 0; }
  bool operator==(const CompositeState&) const = default;
};

std::string composite_id(const std::string& status_state_id, const std::string& settings_state_id);

/// Observation vector for a space: status -> sensors + applied settings,
/// new_settings -> h^b only.
ValueMap observation_for(const ProcessSnapshot& snapshot, Space space);
ValueMap observation_for(const MachineStatus& status);

}  // namespace machstate
