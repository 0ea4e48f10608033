#include "machstate/session.hpp"

#include <algorithm>
#include <set>
#include <sstream>

#include "machstate/ingest.hpp"
#include "machstate/util.hpp"

namespace machstate {

void SessionConfig::check() const {
  if (tick_interval_ms <= 0) throw Error("tick interval must be positive");
  if (!(speed_factor > 0.0)) throw Error("speed factor must be positive");
  if (plant.has_value() == replay_source.has_value())
    throw Error("exactly one of replay source or plant spec is required");
  if (mode == SessionMode::synthetic && !plant) throw Error("synthetic mode requires a plant spec");
  if (mode == SessionMode::replay && !replay_source) throw Error("replay mode requires a replay source");
  if (max_ticks && *max_ticks < 0) throw Error("max ticks must be non-negative");
  if (plant) plant->check();
}

void to_json(Json& j, const SessionConfig& c) {
  j = Json{{"mode", c.mode == SessionMode::replay ? "replay" : "synthetic"},
           {"bundlePath", c.bundle_path},
           {"tickIntervalMs", c.tick_interval_ms},
           {"speedFactor", c.speed_factor},
           {"batchId", c.batch_id},
           {"seed", c.seed},
           {"startTime", format_rfc3339(c.start_time)},
           {"recommendEachTick", c.recommend_each_tick},
           {"threshold", c.threshold}};
  if (c.plant) j["plantSpec"] = *c.plant;
  if (c.replay_source) j["replaySource"] = *c.replay_source;
  if (c.material_type) j["materialType"] = *c.material_type;
  if (c.max_ticks) j["maxTicks"] = *c.max_ticks;
}

void from_json(const Json& j, SessionConfig& c) {
  c = SessionConfig{};
  auto mode = j.value("mode", std::string("synthetic"));
  if (mode == "replay") {
    c.mode = SessionMode::replay;
  } else if (mode == "synthetic") {
    c.mode = SessionMode::synthetic;
  } else {
    throw Error("unknown session mode: " + mode);
  }
  c.bundle_path = j.value("bundlePath", std::string{});
  c.tick_interval_ms = j.value("tickIntervalMs", c.tick_interval_ms);
  c.speed_factor = j.value("speedFactor", c.speed_factor);
  if (j.contains("plantSpec") && !j["plantSpec"].is_null()) c.plant = j["plantSpec"].get<PlantSpec>();
  if (j.contains("replaySource") && !j["replaySource"].is_null())
    c.replay_source = j["replaySource"].get<std::string>();
  c.batch_id = j.value("batchId", c.batch_id);
  if (j.contains("materialType") && !j["materialType"].is_null())
    c.material_type = j["materialType"].get<std::string>();
  c.seed = j.value("seed", c.seed);
  if (j.contains("startTime")) c.start_time = parse_rfc3339(j["startTime"].get<std::string>());
  c.recommend_each_tick = j.value("recommendEachTick", false);
  if (j.contains("maxTicks") && !j["maxTicks"].is_null()) c.max_ticks = j["maxTicks"].get<std::int64_t>();
  c.threshold = j.value("threshold", c.threshold);
}

void to_json(Json& j, const Prediction& p) {
  j = Json{{"likelihood", p.likelihood ? Json(*p.likelihood) : Json(nullptr)},
           {"compositeId", p.composite_id ? Json(*p.composite_id) : Json(nullptr)},
           {"popularity", p.popularity},
           {"matchedCount", p.matched_count},
           {"verdict", to_string(p.verdict)}};
}

void from_json(const Json& j, Prediction& p) {
  p = Prediction{};
  if (!j.at("likelihood").is_null()) p.likelihood = j["likelihood"].get<double>();
  if (!j.at("compositeId").is_null()) p.composite_id = j["compositeId"].get<std::string>();
  p.popularity = j.at("popularity").get<std::int64_t>();
  p.matched_count = j.at("matchedCount").get<std::int64_t>();
  p.verdict = verdict_from_string(j.at("verdict").get<std::string>());
}

void to_json(Json& j, const Recommendation& r) {
  Json intervals = Json::object();
  for (const auto& [id, iv] : r.settings_intervals) intervals[id] = iv;
  j = Json{{"compositeId", r.composite_id},
           {"settingsIntervals", intervals},
           {"pointSettings", r.point_settings},
           {"expectedGoodness", r.expected_goodness},
           {"support", r.support}};
}

void to_json(Json& j, const TickEvent& e) {
  j = Json{{"tick", e.tick},
           {"t", format_rfc3339(e.t)},
           {"snapshot", e.snapshot},
           {"prediction", e.prediction},
           {"pendingSettings", e.pending_settings},
           {"runningLabel", e.running_label ? Json(*e.running_label) : Json(nullptr)}};
  if (e.recommendation) j["recommendation"] = *e.recommendation;
  if (e.recommendation_error) j["recommendationError"] = *e.recommendation_error;
  if (!e.whatif_settings.empty()) j["whatifSettings"] = e.whatif_settings;
  if (e.whatif) j["whatif"] = *e.whatif;
}

Prediction whatif(const CompiledModel& model, const MachineStatus& status, const ValueMap& candidate_settings,
                  double threshold) {
  return model.predict(ProcessSnapshot{status, candidate_settings}, threshold);
}

namespace {

std::set<std::string> ids_of(const std::vector<std::string>& v) { return {v.begin(), v.end()}; }

}  // namespace

Session::Session(SessionConfig config, std::shared_ptr<const CompiledModel> model,
                 std::vector<MachineSnapshot> replay)
    : config_(std::move(config)), model_(std::move(model)), replay_(std::move(replay)) {
  config_.check();
  if (!model_) throw Error("session requires a model");
  const auto& manifest = model_->bundle().manifest;
  setting_ids_ = setting_ids(manifest);

  if (config_.mode == SessionMode::synthetic) {
    const auto& plant = *config_.plant;
    std::vector<std::string> plant_sensors;
    std::vector<std::string> plant_settings;
    for (const auto& s : plant.sensors) plant_sensors.push_back(s.id);
    for (const auto& h : plant.settings) plant_settings.push_back(h.id);
    if (ids_of(plant_sensors) != ids_of(sensor_ids(manifest)) || ids_of(plant_settings) != ids_of(setting_ids_))
      throw Error("bundle/parameter mismatch");
    rng_.emplace(config_.seed);
    history_.emplace(plant);
    sensors_ = plant.initial_sensors();
    settings_ = plant.initial_settings();
  } else {
    for (const auto& snap : replay_) {
      for (const auto& p : manifest) {
        const auto& source = p.kind == ParamKind::sensor ? snap.sensors : snap.settings;
        if (!source.count(p.id)) throw Error("bundle/parameter mismatch: " + p.id);
      }
    }
  }
  log_.push_back(Json{{"type", "session"}, {"config", config_}, {"bundleFingerprint", model_->bundle().dataset_fingerprint}});
}

void Session::ensure_open() const {
  if (closed_) throw Error("session closed");
}

std::optional<std::string> Session::running_label_locked() const {
  return aggregate_label(quality_samples_, model_->bundle().quality);
}

std::optional<TickEvent> Session::step() {
  std::lock_guard lock(mu_);
  if (closed_ || finished_) return std::nullopt;
  if ((config_.max_ticks && tick_ >= *config_.max_ticks) ||
      (config_.mode == SessionMode::replay && tick_ >= static_cast<std::int64_t>(replay_.size()))) {
    finished_ = true;
    return std::nullopt;
  }

  TickEvent ev;
  ev.tick = tick_;
  if (config_.mode == SessionMode::synthetic) {
    ev.t = config_.start_time + tick_ * config_.tick_interval_ms;
    ValueMap next = settings_;
    for (const auto& action : queued_actions_) {
      for (const auto& [id, v] : action) next[id] = v;
    }
    // Applied values reach the dynamics at tick_ + 1 + lag.
    for (const auto& action : queued_actions_) {
      for (const auto& [id, v] : action) {
        auto it = std::find_if(config_.plant->settings.begin(), config_.plant->settings.end(),
                               [&](const PlantSetting& s) { return s.id == id; });
        lagged_.emplace_back(tick_ + 1 + it->lag_ticks, ValueMap{{id, v}});
      }
    }
    queued_actions_.clear();
    ev.snapshot = ProcessSnapshot{MachineStatus{sensors_, settings_}, next};
    lagged_.erase(std::remove_if(lagged_.begin(), lagged_.end(),
                                 [&](const auto& p) { return p.first <= tick_; }),
                  lagged_.end());
    for (const auto& [when, values] : lagged_) {
      for (const auto& [id, v] : values) ev.pending_settings[id] = v;
    }

    const auto& plant = *config_.plant;
    const ValueMap effective = history_->effective(tick_);
    plant_quality_.push_back(plant.quality_measurement(sensors_, effective));
    history_->push(tick_ + 1, next);
    sensors_ = synth_step(plant, sensors_, effective, *rng_);
    settings_ = next;
  } else {
    const auto& rec = replay_[static_cast<std::size_t>(tick_)];
    ev.t = rec.t;
    ev.snapshot = rec.process();
    for (const auto& action : queued_actions_) {
      for (const auto& [id, v] : action) overlay_[id] = v;
    }
    queued_actions_.clear();
    if (!overlay_.empty()) {
      ev.whatif_settings = ev.snapshot.new_settings;
      for (const auto& [id, v] : overlay_) ev.whatif_settings[id] = v;
      ev.whatif = model_->predict(ProcessSnapshot{ev.snapshot.status, ev.whatif_settings}, config_.threshold);
    }
  }

  ev.prediction = model_->predict(ev.snapshot, config_.threshold);
  if (config_.recommend_each_tick) {
    try {
      ev.recommendation = model_->recommend(ev.snapshot.status);
    } catch (const Error& e) {
      ev.recommendation_error = e.what();
    }
  }
  ev.running_label = running_label_locked();
  log_.push_back(Json{{"type", "tick"}, {"event", ev}});
  events_.push_back(ev);
  ++tick_;
  return ev;
}

ApplyAck Session::apply_settings(const ValueMap& values) {
  std::lock_guard lock(mu_);
  ensure_open();
  if (values.empty()) throw Error("no settings given");
  for (const auto& [id, v] : values) {
    if (std::find(setting_ids_.begin(), setting_ids_.end(), id) == setting_ids_.end())
      throw Error("unknown setting: " + id);
    if (!std::isfinite(v)) throw Error("non-finite observation: " + id);
  }
  queued_actions_.push_back(values);
  ApplyAck ack{tick_, values, config_.mode == SessionMode::replay};
  log_.push_back(Json{{"type", "action"},
                      {"tick", tick_},
                      {"t", format_rfc3339(config_.start_time + tick_ * config_.tick_interval_ms)},
                      {"settings", values},
                      {"hypothetical", ack.hypothetical}});
  return ack;
}

std::optional<std::string> Session::record_quality_sample(double measurement) {
  std::lock_guard lock(mu_);
  ensure_open();
  if (!std::isfinite(measurement)) throw Error("non-finite observation");
  quality_samples_.push_back(measurement);
  auto label = running_label_locked();
  log_.push_back(Json{{"type", "quality"},
                      {"tick", tick_},
                      {"measurement", measurement},
                      {"runningLabel", label ? Json(*label) : Json(nullptr)}});
  return label;
}

Recommendation Session::recommend() const {
  std::lock_guard lock(mu_);
  if (events_.empty()) throw Error("no ticks yet");
  return model_->recommend(events_.back().snapshot.status);
}

Prediction Session::whatif(const ValueMap& candidate) const {
  std::lock_guard lock(mu_);
  if (events_.empty()) throw Error("no ticks yet");
  const auto& last = events_.back().snapshot;
  ValueMap settings = last.new_settings;
  for (const auto& [id, v] : candidate) {
    if (std::find(setting_ids_.begin(), setting_ids_.end(), id) == setting_ids_.end())
      throw Error("unknown setting: " + id);
    settings[id] = v;
  }
  return machstate::whatif(*model_, last.status, settings, config_.threshold);
}

void Session::close() {
  std::lock_guard lock(mu_);
  if (closed_) return;
  closed_ = true;
  const auto& samples = quality_samples_.empty() ? plant_quality_ : quality_samples_;
  final_label_ = aggregate_label(samples, model_->bundle().quality);
  log_.push_back(Json{{"type", "close"},
                      {"ticks", tick_},
                      {"qualitySource", quality_samples_.empty() ? "plant" : "operator"},
                      {"finalLabel", final_label_ ? Json(*final_label_) : Json(nullptr)}});
}

bool Session::closed() const {
  std::lock_guard lock(mu_);
  return closed_;
}

bool Session::finished() const {
  std::lock_guard lock(mu_);
  return finished_ || closed_;
}

std::optional<TickEvent> Session::latest() const {
  std::lock_guard lock(mu_);
  if (events_.empty()) return std::nullopt;
  return events_.back();
}

std::vector<TickEvent> Session::events_since(std::int64_t from_tick) const {
  std::lock_guard lock(mu_);
  std::vector<TickEvent> out;
  auto begin = static_cast<std::size_t>(std::clamp<std::int64_t>(from_tick, 0, static_cast<std::int64_t>(events_.size())));
  out.assign(events_.begin() + static_cast<std::ptrdiff_t>(begin), events_.end());
  return out;
}

std::int64_t Session::tick_count() const {
  std::lock_guard lock(mu_);
  return tick_;
}

std::optional<std::string> Session::running_label() const {
  std::lock_guard lock(mu_);
  return running_label_locked();
}

std::optional<std::string> Session::final_label() const {
  std::lock_guard lock(mu_);
  return final_label_;
}

std::string Session::log_jsonl() const {
  std::lock_guard lock(mu_);
  std::string out;
  for (const auto& line : log_) {
    out += line.dump();
    out += "\n";
  }
  return out;
}

std::vector<MachineSnapshot> parse_snapshot_csv(const std::string& csv_text, const Manifest& manifest) {
  auto rows = parse_csv(csv_text);
  if (rows.empty() || rows[0].empty() || rows[0][0] != "timestamp")
    throw Error("snapshots: expected column 'timestamp'");
  const auto& header = rows[0];
  struct Column {
    std::string id;
    int target;  // 0 sensor, 1 setting, 2 new setting
  };
  std::vector<Column> columns;
  bool has_new = false;
  for (std::size_t c = 1; c < header.size(); ++c) {
    std::string id = header[c];
    bool is_new = id.rfind("new:", 0) == 0;
    if (is_new) id = id.substr(4);
    const auto* p = find_parameter(manifest, id);
    if (p == nullptr) throw Error("unknown parameter column: " + header[c]);
    if (is_new && p->kind != ParamKind::setting) throw Error("new-settings column for a sensor: " + id);
    has_new = has_new || is_new;
    columns.push_back({id, is_new ? 2 : (p->kind == ParamKind::sensor ? 0 : 1)});
  }
  std::vector<MachineSnapshot> out;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& row = rows[r];
    if (row.size() == 1 && row[0].empty()) continue;
    MachineSnapshot s;
    s.t = parse_rfc3339(row.at(0));
    for (std::size_t c = 0; c < columns.size() && c + 1 < row.size(); ++c) {
      if (row[c + 1].empty()) continue;
      double v = parse_double(row[c + 1]);
      if (std::isnan(v)) throw Error("non-finite observation at row " + std::to_string(r + 1));
      auto& target = columns[c].target == 0 ? s.sensors : (columns[c].target == 1 ? s.settings : s.new_settings);
      target[columns[c].id] = v;
    }
    out.push_back(std::move(s));
  }
  if (!has_new) {
    for (std::size_t i = 0; i < out.size(); ++i)
      out[i].new_settings = i + 1 < out.size() ? out[i + 1].settings : out[i].settings;
  } else {
    for (auto& s : out) {
      for (const auto& [id, v] : s.settings) s.new_settings.try_emplace(id, v);
    }
  }
  return out;
}

ReplayCheck verify_session_log(const CompiledModel& model, const std::string& jsonl) {
  ReplayCheck check;
  double threshold = kDefaultDecisionThreshold;
  std::istringstream in(jsonl);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto j = Json::parse(line);
    auto type = j.at("type").get<std::string>();
    if (type == "session") {
      threshold = j.at("config").value("threshold", kDefaultDecisionThreshold);
      continue;
    }
    if (type != "tick") continue;
    ++check.ticks;
    const auto& ev = j.at("event");
    auto snap = ev.at("snapshot").get<ProcessSnapshot>();
    bool same = Json(model.predict(snap, threshold)) == ev.at("prediction");
    if (same && ev.contains("whatif")) {
      ProcessSnapshot alt{snap.status, ev.at("whatifSettings").get<ValueMap>()};
      same = Json(model.predict(alt, threshold)) == ev.at("whatif");
    }
    if (!same) ++check.mismatches;
  }
  return check;
}

}  // namespace machstate
