#include "machstate/plant.hpp"

#include <set>

namespace machstate {

void PlantSpec::check() const {
  if (sensors.empty()) throw Error("plant: no sensors");
  if (settings.empty()) throw Error("plant: no settings");
  std::set<std::string> sensor_set;
  std::set<std::string> all;
  for (const auto& s : sensors) {
    if (s.id.empty() || !all.insert(s.id).second) throw Error("plant: duplicate or empty id: " + s.id);
    sensor_set.insert(s.id);
    if (!(std::abs(s.decay) < 1.0)) throw Error("plant: decay must satisfy |a| < 1: " + s.id);
    if (!(s.noise_sigma >= 0.0)) throw Error("plant: negative noise sigma: " + s.id);
  }
  for (const auto& h : settings) {
    if (h.id.empty() || !all.insert(h.id).second) throw Error("plant: duplicate or empty id: " + h.id);
    if (h.lag_ticks < 0) throw Error("plant: negative lag: " + h.id);
  }
  for (const auto& [sensor, row] : gains) {
    if (!sensor_set.count(sensor)) throw Error("plant: gain for unknown sensor: " + sensor);
    for (const auto& [setting, g] : row) {
      if (!all.count(setting) || sensor_set.count(setting))
        throw Error("plant: gain for unknown setting: " + setting);
      if (!std::isfinite(g)) throw Error("plant: non-finite gain");
    }
  }
  if (!sensor_set.count(quality_sensor_id)) throw Error("plant: unknown quality sensor: " + quality_sensor_id);
  if (!quality_band.valid()) throw Error("plant: invalid quality band");
  for (const auto& g : gates) {
    if (!all.count(g.parameter_id)) throw Error("plant: gate on unknown parameter: " + g.parameter_id);
    if (!g.range.valid()) throw Error("plant: invalid gate range: " + g.parameter_id);
  }
}

Manifest PlantSpec::manifest() const {
  Manifest m;
  for (const auto& s : sensors) m.push_back({s.id, s.id, ParamKind::sensor, "", {}, {}});
  for (const auto& h : settings) m.push_back({h.id, h.id, ParamKind::setting, "", {}, {}});
  return m;
}

ValueMap PlantSpec::initial_sensors() const {
  ValueMap m;
  for (const auto& s : sensors) m[s.id] = s.initial;
  return m;
}

ValueMap PlantSpec::initial_settings() const {
  ValueMap m;
  for (const auto& h : settings) m[h.id] = h.initial;
  return m;
}

namespace {

double drive(const PlantSpec& spec, const std::string& sensor, const ValueMap& settings) {
  double sum = 0.0;
  auto row = spec.gains.find(sensor);
  if (row == spec.gains.end()) return sum;
  for (const auto& [setting, g] : row->second) {
    auto it = settings.find(setting);
    if (it == settings.end()) throw Error("plant: missing setting: " + setting);
    sum += g * it->second;
  }
  return sum;
}

}  // namespace

ValueMap PlantSpec::steady_state(const ValueMap& settings_values) const {
  ValueMap out;
  for (const auto& s : sensors) out[s.id] = (drive(*this, s.id, settings_values) + s.offset) / (1.0 - s.decay);
  return out;
}

double PlantSpec::quality_measurement(const ValueMap& sensor_values, const ValueMap& settings_values) const {
  double q = sensor_values.at(quality_sensor_id);
  for (const auto& g : gates) {
    const ValueMap& source = sensor_values.count(g.parameter_id) ? sensor_values : settings_values;
    auto it = source.find(g.parameter_id);
    if (it == source.end()) throw Error("plant: missing gate parameter: " + g.parameter_id);
    if (!g.range.contains(it->second)) return q + gate_penalty;
  }
  return q;
}

void to_json(Json& j, const PlantSpec& spec) {
  Json sensors = Json::array();
  for (const auto& s : spec.sensors) {
    sensors.push_back({{"id", s.id},
                       {"decay", s.decay},
                       {"offset", s.offset},
                       {"noiseSigma", s.noise_sigma},
                       {"initial", s.initial}});
  }
  Json settings = Json::array();
  for (const auto& h : spec.settings) {
    settings.push_back({{"id", h.id}, {"lagTicks", h.lag_ticks}, {"initial", h.initial}});
  }
  Json gates = Json::array();
  for (const auto& g : spec.gates) gates.push_back({{"parameter", g.parameter_id}, {"range", g.range}});
  j = Json{{"sensors", sensors},
           {"settings", settings},
           {"gains", spec.gains},
           {"qualitySensorId", spec.quality_sensor_id},
           {"qualityBand", spec.quality_band},
           {"gates", gates},
           {"gatePenalty", spec.gate_penalty}};
}

void from_json(const Json& j, PlantSpec& spec) {
  spec = PlantSpec{};
  for (const auto& s : j.at("sensors")) {
    spec.sensors.push_back({s.at("id").get<std::string>(), s.value("decay", 0.0), s.value("offset", 0.0),
                            s.value("noiseSigma", 0.0), s.value("initial", 0.0)});
  }
  for (const auto& h : j.at("settings")) {
    spec.settings.push_back({h.at("id").get<std::string>(), h.value("lagTicks", 0), h.value("initial", 0.0)});
  }
  if (j.contains("gains")) spec.gains = j["gains"].get<std::map<std::string, std::map<std::string, double>>>();
  spec.quality_sensor_id = j.at("qualitySensorId").get<std::string>();
  spec.quality_band = j.at("qualityBand").get<Interval>();
  if (j.contains("gates")) {
    for (const auto& g : j["gates"]) {
      spec.gates.push_back({g.at("parameter").get<std::string>(), g.at("range").get<Interval>()});
    }
  }
  spec.gate_penalty = j.value("gatePenalty", 0.0);
}

double PlantRng::normal(double sigma) {
  if (sigma == 0.0) return 0.0;
  return sigma * gauss(engine);
}

double PlantRng::uniform(double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(engine);
}

ValueMap synth_step(const PlantSpec& spec, const ValueMap& sensors, const ValueMap& effective_settings,
                    PlantRng& rng) {
  ValueMap next;
  for (const auto& s : spec.sensors) {
    auto it = sensors.find(s.id);
    double current = it == sensors.end() ? s.initial : it->second;
    next[s.id] = s.decay * current + drive(spec, s.id, effective_settings) + s.offset + rng.normal(s.noise_sigma);
  }
  return next;
}

SettingsHistory::SettingsHistory(const PlantSpec& spec) : initial_(spec.initial_settings()) {
  for (const auto& h : spec.settings) lags_[h.id] = h.lag_ticks;
}

void SettingsHistory::push(std::int64_t tick, const ValueMap& new_settings) {
  if (!pushes_.empty() && tick < pushes_.back().first) throw Error("settings history must advance in time");
  if (!pushes_.empty() && tick == pushes_.back().first) {
    pushes_.back().second = new_settings;
  } else {
    pushes_.emplace_back(tick, new_settings);
  }
}

ValueMap SettingsHistory::effective(std::int64_t tick) const {
  ValueMap out = initial_;
  for (const auto& [id, lag] : lags_) {
    std::int64_t cutoff = tick - lag;
    auto it = std::upper_bound(pushes_.begin(), pushes_.end(), cutoff,
                               [](std::int64_t v, const auto& p) { return v < p.first; });
    if (it == pushes_.begin()) continue;
    auto v = std::prev(it)->second.find(id);
    if (v != std::prev(it)->second.end()) out[id] = v->second;
  }
  return out;
}

}  // namespace machstate
