#pragma once

// Linear-with-lag synthetic plant:
//   s(t+1) = A s(t) + B h_eff(t) + c + noise,   A diagonal, |a_ii| < 1
// where h_eff applies each setting change after that setting's lag.

#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "machstate/core.hpp"
#include "machstate/json.hpp"

namespace machstate {

struct PlantSensor {
  std::string id;
  double decay = 0.0;   // diagonal entry of A
  double offset = 0.0;  // c
  double noise_sigma = 0.0;
  double initial = 0.0;
};

struct PlantSetting {
  std::string id;
  int lag_ticks = 0;
  double initial = 0.0;  // h^b(t0)
};

/// Run quality is forced off-target while `range` does not contain the
/// parameter's value.
struct QualityGate {
  std::string parameter_id;
  Interval range;
};

struct PlantSpec {
  std::vector<PlantSensor> sensors;
  std::vector<PlantSetting> settings;
  std::map<std::string, std::map<std::string, double>> gains;  // sensor -> setting -> B entry
  std::string quality_sensor_id;
  Interval quality_band;
  std::vector<QualityGate> gates;
  double gate_penalty = 0.0;

  /// Throws Error on an invalid spec (unknown ids, |decay| >= 1, lag < 0, ...).
  void check() const;
  Manifest manifest() const;
  ValueMap initial_sensors() const;
  ValueMap initial_settings() const;
  /// Fixed point of the noise-free dynamics under constant `settings`.
  ValueMap steady_state(const ValueMap& settings) const;
  /// Instantaneous quality reading: the quality sensor, plus gate_penalty
  /// while any gate is violated.
  double quality_measurement(const ValueMap& sensors, const ValueMap& settings) const;
  bool in_quality_band(double measurement) const { return quality_band.contains(measurement); }
};

void to_json(Json& j, const PlantSpec& spec);
void from_json(const Json& j, PlantSpec& spec);

/// Seeded generator; std::normal_distribution keeps its own cached state,
/// so both live together.
struct PlantRng {
  explicit PlantRng(std::uint64_t seed) : engine(seed) {}
  double normal(double sigma);
  double uniform(double lo, double hi);

  std::mt19937_64 engine;
  std::normal_distribution<double> gauss{0.0, 1.0};
};

ValueMap synth_step(const PlantSpec& spec, const ValueMap& sensors,
                    const ValueMap& effective_settings, PlantRng& rng);

/// Tracks commanded settings per tick and yields the lagged effective ones.
class SettingsHistory {
 public:
  explicit SettingsHistory(const PlantSpec& spec);
  /// Record the new settings h^b in force from tick `tick` onwards.
  void push(std::int64_t tick, const ValueMap& new_settings);
  /// Effective settings at `tick`: per setting, the value pushed at
  /// tick - lag (or the initial value before that).
  ValueMap effective(std::int64_t tick) const;

 private:
  std::map<std::string, int> lags_;
  ValueMap initial_;
  std::vector<std::pair<std::int64_t, ValueMap>> pushes_;
};

}  // namespace machstate
