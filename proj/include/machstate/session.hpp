#pragma once

// Live production-run sessions: replay of recorded snapshots or a synthetic
// plant, scored tick by tick against a compiled model.
//
// One writer (whoever calls step()) advances the session; operator actions
// are queued and applied at the next tick boundary. All public methods are
// thread-safe.

#include <cstdint>
#include <deque>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "machstate/analytics.hpp"
#include "machstate/json.hpp"
#include "machstate/plant.hpp"

namespace machstate {

enum class SessionMode { replay, synthetic };

struct SessionConfig {
  SessionMode mode = SessionMode::synthetic;
  std::string bundle_path;  // empty: the server's bundle
  std::int64_t tick_interval_ms = 10000;
  double speed_factor = 1.0;
  std::optional<PlantSpec> plant;
  std::optional<std::string> replay_source;  // snapshot CSV path
  std::string batch_id = "live";
  std::optional<std::string> material_type;
  std::uint64_t seed = 1;
  Timestamp start_time = 1704067200000;
  bool recommend_each_tick = false;
  std::optional<std::int64_t> max_ticks;
  double threshold = kDefaultDecisionThreshold;

  /// Throws Error on an invalid combination.
  void check() const;
};

void to_json(Json& j, const SessionConfig& c);
void from_json(const Json& j, SessionConfig& c);

struct TickEvent {
  std::int64_t tick = 0;
  Timestamp t = 0;
  ProcessSnapshot snapshot;
  Prediction prediction;
  std::optional<Recommendation> recommendation;
  std::optional<std::string> recommendation_error;
  ValueMap pending_settings;  // applied by the operator, not yet effective
  ValueMap whatif_settings;   // replay overlay
  std::optional<Prediction> whatif;
  std::optional<std::string> running_label;
};

void to_json(Json& j, const Prediction& p);
void from_json(const Json& j, Prediction& p);
void to_json(Json& j, const Recommendation& r);
void to_json(Json& j, const TickEvent& e);

struct ApplyAck {
  std::int64_t effective_tick = 0;  // first tick whose new settings carry the values
  ValueMap values;
  bool hypothetical = false;        // replay mode overlay
};

/// Prediction for (status, candidate new settings); no session involved.
Prediction whatif(const CompiledModel& model, const MachineStatus& status,
                  const ValueMap& candidate_settings,
                  double threshold = kDefaultDecisionThreshold);

class Session {
 public:
  Session(SessionConfig config, std::shared_ptr<const CompiledModel> model,
          std::vector<MachineSnapshot> replay = {});

  /// Advances one tick. Empty once the replay source or max_ticks is
  /// exhausted, or after close().
  std::optional<TickEvent> step();

  /// Throws Error("unknown setting: <id>") / Error("session closed").
  ApplyAck apply_settings(const ValueMap& values);
  /// Returns the running label after the sample; throws Error("session closed").
  std::optional<std::string> record_quality_sample(double measurement);
  /// Recommendation for the latest tick's status.
  Recommendation recommend() const;
  /// What-if prediction for the latest status under `candidate`.
  Prediction whatif(const ValueMap& candidate) const;

  /// Finalizes the log; further mutations throw.
  void close();
  bool closed() const;
  bool finished() const;

  std::optional<TickEvent> latest() const;
  /// Events with tick >= `from_tick`.
  std::vector<TickEvent> events_since(std::int64_t from_tick) const;
  std::int64_t tick_count() const;
  std::optional<std::string> running_label() const;
  std::optional<std::string> final_label() const;
  const SessionConfig& config() const { return config_; }
  const CompiledModel& model() const { return *model_; }

  /// JSON-lines session log.
  std::string log_jsonl() const;

 private:
  void ensure_open() const;
  std::optional<std::string> running_label_locked() const;

  SessionConfig config_;
  std::shared_ptr<const CompiledModel> model_;
  std::vector<MachineSnapshot> replay_;
  std::vector<std::string> setting_ids_;

  mutable std::mutex mu_;
  std::int64_t tick_ = 0;
  bool closed_ = false;
  bool finished_ = false;
  std::deque<TickEvent> events_;  // deque: appends never move old events
  std::deque<Json> log_;
  std::vector<double> quality_samples_;
  std::vector<double> plant_quality_;
  std::vector<ValueMap> queued_actions_;
  ValueMap overlay_;  // replay what-if settings

  // Synthetic plant state.
  std::optional<PlantRng> rng_;
  std::optional<SettingsHistory> history_;
  ValueMap sensors_;
  ValueMap settings_;
  std::vector<std::pair<std::int64_t, ValueMap>> lagged_;  // (effective tick, values)
  std::optional<std::string> final_label_;
};

/// Snapshot CSV: `timestamp,<param-id>...` with optional `new:<setting-id>`
/// columns. Without them, new settings come from the next row.
std::vector<MachineSnapshot> parse_snapshot_csv(const std::string& csv_text,
                                                const Manifest& manifest);

struct ReplayCheck {
  std::int64_t ticks = 0;
  std::int64_t mismatches = 0;
};

/// Re-scores every logged tick snapshot and compares the logged prediction
/// field by field.
ReplayCheck verify_session_log(const CompiledModel& model, const std::string& jsonl);

}  // namespace machstate
