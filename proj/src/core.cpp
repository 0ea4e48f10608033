#include "machstate/core.hpp"

#include <algorithm>
#include <set>

namespace machstate {

std::vector<std::string> sensor_ids(const Manifest& manifest) {
  std::vector<std::string> ids;
  for (const auto& p : manifest) {
    if (p.kind == ParamKind::sensor) ids.push_back(p.id);
  }
  return ids;
}

std::vector<std::string> setting_ids(const Manifest& manifest) {
  std::vector<std::string> ids;
  for (const auto& p : manifest) {
    if (p.kind == ParamKind::setting) ids.push_back(p.id);
  }
  return ids;
}

std::vector<std::string> parameter_ids(const Manifest& manifest) {
  std::vector<std::string> ids;
  ids.reserve(manifest.size());
  for (const auto& p : manifest) ids.push_back(p.id);
  return ids;
}

const ParameterDef* find_parameter(const Manifest& manifest, const std::string& id) {
  auto it = std::find_if(manifest.begin(), manifest.end(),
                         [&](const ParameterDef& p) { return p.id == id; });
  return it == manifest.end() ? nullptr : &*it;
}

void check_manifest(const Manifest& manifest) {
  std::set<std::string> seen;
  for (const auto& p : manifest) {
    if (p.id.empty()) throw Error("manifest: empty parameter id");
    if (!seen.insert(p.id).second) throw Error("manifest: duplicate parameter id: " + p.id);
  }
  if (sensor_ids(manifest).empty()) throw Error("manifest: no sensor parameters");
  if (setting_ids(manifest).empty()) throw Error("manifest: no setting parameters");
}

bool interval_contains(const Interval& iv, double v) {
  if (std::isnan(v)) throw Error("non-finite observation");
  return iv.contains(v);
}

std::optional<std::string> QualityConfig::band_of(double measurement) const {
  for (const auto& band : bands) {
    if (band.range.contains(measurement)) return band.label;
  }
  return std::nullopt;
}

const QualityBand* QualityConfig::target_band() const {
  for (const auto& band : bands) {
    if (band.label == target_label) return &band;
  }
  return nullptr;
}

int QualityConfig::label_index(const std::string& label) const {
  auto it = std::find(labels.begin(), labels.end(), label);
  return it == labels.end() ? -1 : static_cast<int>(it - labels.begin());
}

void QualityConfig::check() const {
  if (labels.empty()) throw Error("quality config: no labels");
  std::set<std::string> unique(labels.begin(), labels.end());
  if (unique.size() != labels.size()) throw Error("quality config: duplicate label");
  if (label_index(target_label) < 0)
    throw Error("quality config: target label not in labels: " + target_label);
  if (in_band_threshold < 0.0 || in_band_threshold > 1.0)
    throw Error("quality config: in-band threshold outside [0,1]");
  for (const auto& band : bands) {
    if (label_index(band.label) < 0) throw Error("quality config: band for unknown label: " + band.label);
    if (!band.range.valid()) throw Error("quality config: invalid band for " + band.label);
  }
  auto sorted = bands;
  std::sort(sorted.begin(), sorted.end(),
            [](const QualityBand& a, const QualityBand& b) { return a.range.low < b.range.low; });
  for (std::size_t i = 1; i < sorted.size(); ++i) {
    if (sorted[i].range.low < sorted[i - 1].range.high)
      throw Error("quality config: overlapping bands " + sorted[i - 1].label + " and " + sorted[i].label);
  }
  if (target_band() == nullptr) throw Error("quality config: no band for target label");
}

QualityConfig QualityConfig::jam_default() {
  QualityConfig q;
  q.labels = {"low", "target", "high"};
  q.target_label = "target";
  q.bands = {{"low", {-kInf, 65.0}}, {"target", {65.0, 68.0}}, {"high", {68.0, kInf}}};
  q.aggregation = Aggregation::mean;
  q.in_band_threshold = 0.5;
  return q;
}

const char* to_string(Space space) {
  return space == Space::status ? "status" : "newSettings";
}

Space space_from_string(const std::string& s) {
  if (s == "status") return Space::status;
  if (s == "newSettings") return Space::new_settings;
  throw Error("unknown space: " + s);
}

const char* to_string(ParamKind kind) { return kind == ParamKind::sensor ? "sensor" : "setting"; }

ParamKind kind_from_string(const std::string& s) {
  if (s == "sensor") return ParamKind::sensor;
  if (s == "setting") return ParamKind::setting;
  throw Error("unknown parameter kind: " + s);
}

const char* to_string(Aggregation a) {
  switch (a) {
    case Aggregation::mean: return "mean";
    case Aggregation::last_sample: return "lastSample";
    case Aggregation::majority_in_band: return "majorityInBand";
  }
  return "mean";
}

Aggregation aggregation_from_string(const std::string& s) {
  if (s == "mean") return Aggregation::mean;
  if (s == "lastSample") return Aggregation::last_sample;
  if (s == "majorityInBand") return Aggregation::majority_in_band;
  throw Error("unknown aggregation: " + s);
}

bool state_matches(const State& state, const ValueMap& obs) {
  bool all = true;
  for (const auto& [id, iv] : state.intervals) {
    auto it = obs.find(id);
    if (it == obs.end()) {
      if (iv.unbounded()) continue;
      throw Error("missing parameter: " + id);
    }
    if (!interval_contains(iv, it->second)) all = false;
  }
  return all;
}

std::string composite_id(const std::string& status_state_id, const std::string& settings_state_id) {
  return status_state_id + "+" + settings_state_id;
}

ValueMap observation_for(const MachineStatus& status) {
  ValueMap obs = status.sensors;
  obs.insert(status.settings.begin(), status.settings.end());
  return obs;
}

ValueMap observation_for(const ProcessSnapshot& snapshot, Space space) {
  return space == Space::status ? observation_for(snapshot.status) : snapshot.new_settings;
}

}  // namespace machstate
