#include "machstate/synth.hpp"

#include <cstdio>
#include <filesystem>
#include <sstream>

#include "machstate/ingest.hpp"
#include "machstate/util.hpp"

namespace machstate {
namespace {

double draw(PlantRng& rng, const SettingRange& r, double resolution) {
  double v = rng.uniform(r.min, r.max);
  if (resolution > 0.0) v = std::round(v / resolution) * resolution;
  return v;
}

ValueMap draw_settings(PlantRng& rng, const ScenarioSpec& sc) {
  ValueMap out = sc.plant.initial_settings();
  for (const auto& r : sc.ranges) out[r.id] = draw(rng, r, sc.setting_resolution);
  return out;
}

PlantSpec for_material(const ScenarioSpec& sc, const std::string& material, const ValueMap& settings) {
  PlantSpec spec = sc.plant;
  for (const auto& shift : sc.material_shifts) {
    if (shift.material_type != material) continue;
    for (auto& s : spec.sensors) {
      if (s.id == shift.sensor_id) s.offset += shift.offset;
    }
  }
  for (auto& h : spec.settings) h.initial = settings.at(h.id);
  return spec;
}

std::string batch_name(std::int64_t r) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "R%04lld", static_cast<long long>(r + 1));
  return buf;
}

}  // namespace

SyntheticDataset generate_dataset(const ScenarioSpec& sc) {
  sc.plant.check();
  sc.quality.check();
  if (sc.runs < 1 || sc.ticks_per_run < 1 || sc.gap_ticks < 0) throw Error("scenario: bad run layout");
  if (sc.material_types.empty()) throw Error("scenario: no material types");
  if (sc.quality_every_ticks < 1 || sc.setting_heartbeat_ticks < 1) throw Error("scenario: bad cadence");
  const auto grid_ms = static_cast<Timestamp>(std::llround(sc.grid_seconds * 1000.0));
  if (grid_ms <= 0) throw Error("sampling interval must be positive");

  const Manifest manifest = sc.plant.manifest();
  Json manifest_json = Json::array();
  for (const auto& p : manifest)
    manifest_json.push_back({{"id", p.id}, {"name", p.name}, {"kind", to_string(p.kind)}, {"units", p.units}});

  std::ostringstream obs;
  obs << "timestamp";
  for (const auto& p : manifest) obs << "," << csv_escape(p.id);
  obs << "\n";
  std::ostringstream runs;
  runs << "batch_id,start,end,material_type\n";
  std::ostringstream quality;
  quality << "batch_id,timestamp,measurement\n";

  SyntheticDataset out;
  PlantRng rng(sc.seed);
  std::int64_t global_tick = 0;
  for (std::int64_t r = 0; r < sc.runs; ++r) {
    const auto& material = sc.material_types[static_cast<std::size_t>(r) % sc.material_types.size()];
    const auto batch = batch_name(r);
    ValueMap settings = draw_settings(rng, sc);
    const PlantSpec spec = for_material(sc, material, settings);
    ValueMap sensors = spec.steady_state(settings);
    SettingsHistory history(spec);

    std::int64_t change_tick = -1;
    ValueMap changed;
    if (rng.uniform(0.0, 1.0) < sc.change_probability && sc.max_change_tick >= 1) {
      change_tick = 1 + static_cast<std::int64_t>(rng.engine() % static_cast<std::uint64_t>(sc.max_change_tick));
      changed = draw_settings(rng, sc);
    }

    std::vector<double> measurements;
    const Timestamp run_start = sc.start + global_tick * grid_ms;
    for (std::int64_t k = 0; k < sc.ticks_per_run; ++k) {
      const Timestamp t = sc.start + (global_tick + k) * grid_ms;
      if (k == change_tick) {
        settings = changed;
        history.push(k, settings);
      }
      const bool record_settings = k == 0 || k == change_tick || k % sc.setting_heartbeat_ticks == 0;
      obs << format_rfc3339(t);
      for (const auto& p : manifest) {
        obs << ",";
        if (p.kind == ParamKind::sensor) {
          obs << format_double(sensors.at(p.id));
        } else if (record_settings) {
          obs << format_double(settings.at(p.id));
        }
      }
      obs << "\n";

      const ValueMap effective = history.effective(k);
      if ((k + 1) % sc.quality_every_ticks == 0) {
        double m = spec.quality_measurement(sensors, effective);
        measurements.push_back(m);
        quality << batch << "," << format_rfc3339(t) << "," << format_double(m) << "\n";
      }
      sensors = synth_step(spec, sensors, effective, rng);
    }
    const Timestamp run_end = sc.start + (global_tick + sc.ticks_per_run - 1) * grid_ms;
    runs << batch << "," << format_rfc3339(run_start) << "," << format_rfc3339(run_end) << ","
         << csv_escape(material) << "\n";
    auto label = aggregate_label(measurements, sc.quality);
    if (label && *label == sc.quality.target_label) ++out.target_runs;
    global_tick += sc.ticks_per_run + sc.gap_ticks;
  }

  out.manifest_json = dump_canonical(manifest_json);
  out.observations_csv = obs.str();
  out.runs_csv = runs.str();
  out.quality_csv = quality.str();
  out.quality_config_json = quality_config_json(sc.quality);
  return out;
}

void SyntheticDataset::write(const std::string& dir) const {
  std::filesystem::create_directories(dir);
  const std::filesystem::path base(dir);
  write_file((base / "manifest.json").string(), manifest_json);
  write_file((base / "observations.csv").string(), observations_csv);
  write_file((base / "runs.csv").string(), runs_csv);
  write_file((base / "quality.csv").string(), quality_csv);
  write_file((base / "quality_config.json").string(), quality_config_json);
}

namespace {

QualityConfig three_band(double low, double high) {
  QualityConfig q;
  q.labels = {"low", "target", "high"};
  q.target_label = "target";
  q.bands = {{"low", {-kInf, low}}, {"target", {low, high}}, {"high", {high, kInf}}};
  q.aggregation = Aggregation::mean;
  return q;
}

}  // namespace

ScenarioSpec recoverability_scenario(std::uint64_t seed) {
  ScenarioSpec sc;
  auto& p = sc.plant;
  p.sensors = {
      {"s1", 0.5, 0.0, 0.05, 45.0},  // follows h2
      {"q", 0.2, 0.0, 0.05, 105.0},  // follows h1
      {"s2", 0.0, 20.0, 1.0, 20.0},  // unrelated
  };
  p.settings = {{"h1", 0, 105.0}, {"h2", 1, 45.0}};
  p.gains = {{"s1", {{"h2", 0.5}}}, {"q", {{"h1", 0.8}}}};
  p.quality_sensor_id = "q";
  p.quality_band = {100.0, 110.0};
  p.gates = {{"s1", {-kInf, 50.0}}};
  p.gate_penalty = -1000.0;
  sc.quality = three_band(100.0, 110.0);
  sc.runs = 200;
  sc.ticks_per_run = 60;
  sc.ranges = {{"h1", 90.0, 120.0}, {"h2", 35.0, 62.0}};
  sc.material_types = {"type-1"};
  sc.max_change_tick = 1;
  sc.seed = seed;
  return sc;
}

ScenarioSpec reference_scale_scenario(std::uint64_t seed) {
  ScenarioSpec sc;
  auto& p = sc.plant;
  std::mt19937_64 gen(seed);
  auto u = [&](double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(gen); };

  p.settings = {{"h1", 0, 105.0}, {"h2", 1, 45.0}};
  for (int i = 3; i <= 7; ++i) p.settings.push_back({"h" + std::to_string(i), static_cast<int>(i % 3), 50.0});
  p.sensors.push_back({"s01", 0.3, 0.0, 0.2, 105.0});
  p.gains["s01"] = {{"h1", 0.7}};
  p.sensors.push_back({"s02", 0.5, 0.0, 0.1, 45.0});
  p.gains["s02"] = {{"h2", 0.5}};
  for (int i = 3; i <= 23; ++i) {
    char id[8];
    std::snprintf(id, sizeof id, "s%02d", i);
    double decay = u(0.0, 0.8);
    p.sensors.push_back({id, decay, u(0.0, 50.0), 0.5, 0.0});
    auto a = "h" + std::to_string(3 + static_cast<int>(gen() % 5));
    auto b = "h" + std::to_string(1 + static_cast<int>(gen() % 7));
    p.gains[id][a] += u(-1.0, 1.0) * (1.0 - decay);
    p.gains[id][b] += u(-0.5, 0.5) * (1.0 - decay);
  }
  p.quality_sensor_id = "s01";
  p.quality_band = {100.0, 110.0};
  p.gates = {{"s02", {-kInf, 50.0}}};
  p.gate_penalty = -1000.0;

  sc.quality = three_band(100.0, 110.0);
  sc.runs = 210;
  sc.ticks_per_run = 60;
  sc.ranges = {{"h1", 90.0, 120.0}, {"h2", 35.0, 62.0}};
  for (int i = 3; i <= 7; ++i) sc.ranges.push_back({"h" + std::to_string(i), 0.0, 100.0});
  sc.material_types = {"type-1", "type-2", "type-3"};
  sc.material_shifts = {{"type-2", "s01", 1.05}, {"type-3", "s01", -1.05}};
  sc.seed = seed;
  return sc;
}

std::string quality_config_json(const QualityConfig& config) { return dump_canonical(Json(config)); }

QualityConfig parse_quality_config(const std::string& json_text) {
  QualityConfig q;
  try {
    q = Json::parse(json_text).get<QualityConfig>();
  } catch (const Json::exception& e) {
    throw Error(std::string("malformed quality config: ") + e.what());
  }
  q.check();
  return q;
}

}  // namespace machstate
