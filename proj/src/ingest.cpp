#include "machstate/ingest.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "machstate/json.hpp"
#include "machstate/util.hpp"

namespace machstate {
namespace {

std::string trim(std::string s) {
  auto not_space = [](unsigned char c) { return !std::isspace(c); };
  s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
  s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
  return s;
}

std::vector<std::vector<std::string>> csv_with_header(const std::string& text,
                                                      const std::vector<std::string>& required,
                                                      const char* what) {
  auto rows = parse_csv(text);
  if (rows.empty()) throw Error(std::string(what) + ": empty file");
  for (auto& cell : rows[0]) cell = trim(cell);
  for (std::size_t i = 0; i < required.size(); ++i) {
    if (i >= rows[0].size() || rows[0][i] != required[i])
      throw Error(std::string(what) + ": expected column '" + required[i] + "'");
  }
  return rows;
}

}  // namespace

// Index of the unique run containing t, or -1 when none or several do.
int run_index_at(const std::vector<ProductionRun>& runs, Timestamp t) {
  auto it = std::upper_bound(runs.begin(), runs.end(), t,
                             [](Timestamp v, const ProductionRun& r) { return v < r.start; });
  int found = -1;
  int hits = 0;
  // Runs are sorted and non-overlapping, so only the two nearest can contain t.
  for (int back = 1; back <= 2 && it - runs.begin() - back >= 0; ++back) {
    const auto& run = *(it - back);
    if (run.contains(t)) {
      found = static_cast<int>(it - runs.begin() - back);
      ++hits;
    }
  }
  return hits == 1 ? found : -1;
}

Manifest parse_manifest(const std::string& json_text) {
  Manifest manifest;
  try {
    manifest = Json::parse(json_text).get<Manifest>();
  } catch (const Json::exception& e) {
    throw Error(std::string("malformed manifest: ") + e.what());
  }
  check_manifest(manifest);
  return manifest;
}

void parse_observations(const std::string& csv_text, Manifest& manifest, ObservationTable& sensors,
                        ObservationTable& settings) {
  auto rows = csv_with_header(csv_text, {"timestamp"}, "observations");
  const auto& header = rows[0];

  sensors = ObservationTable{ParamKind::sensor, {}, 0, 0};
  settings = ObservationTable{ParamKind::setting, {}, 0, 0};
  std::map<std::string, std::size_t> column_of;
  for (std::size_t c = 1; c < header.size(); ++c) {
    if (!find_parameter(manifest, header[c])) throw Error("unknown parameter column: " + header[c]);
    if (!column_of.emplace(header[c], c).second) throw Error("duplicate parameter column: " + header[c]);
  }
  // Series in manifest order; parameters absent from the file get empty series.
  struct Slot {
    ObservationTable* table;
    std::size_t index;
    std::size_t column;  // 0 when absent
  };
  std::vector<Slot> slots;
  for (const auto& p : manifest) {
    auto* table = p.kind == ParamKind::sensor ? &sensors : &settings;
    table->series.push_back({p.id, {}, {}});
    auto it = column_of.find(p.id);
    slots.push_back({table, table->series.size() - 1, it == column_of.end() ? 0 : it->second});
  }

  Timestamp previous = std::numeric_limits<Timestamp>::min();
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& row = rows[r];
    if (row.size() == 1 && trim(row[0]).empty()) continue;
    Timestamp t = parse_rfc3339(trim(row.at(0)));
    if (t <= previous) throw Error("non-monotone timestamps at row " + std::to_string(r + 1));
    previous = t;
    bool any_sensor = false;
    bool any_setting = false;
    for (const auto& slot : slots) {
      if (slot.column == 0 || slot.column >= row.size()) continue;
      auto cell = trim(row[slot.column]);
      if (cell.empty()) continue;
      double v = parse_double(cell);
      if (!std::isfinite(v)) throw Error("non-finite observation at row " + std::to_string(r + 1));
      auto& series = slot.table->series[slot.index];
      series.t.push_back(t);
      series.v.push_back(v);
      (slot.table == &sensors ? any_sensor : any_setting) = true;
    }
    (any_sensor ? sensors.source_rows : sensors.dropped_rows)++;
    (any_setting ? settings.source_rows : settings.dropped_rows)++;
  }

  for (auto& p : manifest) {
    const auto& table = p.kind == ParamKind::sensor ? sensors : settings;
    auto it = std::find_if(table.series.begin(), table.series.end(),
                           [&](const Series& s) { return s.id == p.id; });
    if (it == table.series.end() || it->v.empty()) {
      p.observed_min.reset();
      p.observed_max.reset();
      continue;
    }
    auto [lo, hi] = std::minmax_element(it->v.begin(), it->v.end());
    p.observed_min = *lo;
    p.observed_max = *hi;
  }
}

std::vector<ProductionRun> parse_runs(const std::string& csv_text) {
  auto rows = csv_with_header(csv_text, {"batch_id", "start", "end"}, "runs");
  std::vector<ProductionRun> runs;
  std::set<std::string> ids;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& row = rows[r];
    if (row.size() == 1 && trim(row[0]).empty()) continue;
    if (row.size() < 3) throw Error("runs: short row " + std::to_string(r + 1));
    ProductionRun run;
    run.batch_id = trim(row[0]);
    run.start = parse_rfc3339(trim(row[1]));
    run.end = parse_rfc3339(trim(row[2]));
    if (row.size() > 3 && !trim(row[3]).empty()) run.material_type = trim(row[3]);
    if (run.batch_id.empty()) throw Error("runs: empty batch id at row " + std::to_string(r + 1));
    if (!(run.start < run.end)) throw Error("run start must precede end: " + run.batch_id);
    if (!ids.insert(run.batch_id).second) throw Error("duplicate batch id: " + run.batch_id);
    runs.push_back(std::move(run));
  }
  std::sort(runs.begin(), runs.end(), [](const ProductionRun& a, const ProductionRun& b) {
    return a.start != b.start ? a.start < b.start : a.batch_id < b.batch_id;
  });
  for (std::size_t i = 1; i < runs.size(); ++i) {
    if (runs[i].start < runs[i - 1].end)
      throw Error("overlapping runs: " + runs[i - 1].batch_id + ", " + runs[i].batch_id);
  }
  return runs;
}

std::vector<QualitySample> parse_quality(const std::string& csv_text) {
  auto rows = csv_with_header(csv_text, {"batch_id", "timestamp", "measurement"}, "quality");
  std::vector<QualitySample> samples;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& row = rows[r];
    if (row.size() == 1 && trim(row[0]).empty()) continue;
    if (row.size() < 3) throw Error("quality: short row " + std::to_string(r + 1));
    samples.push_back({trim(row[0]), parse_rfc3339(trim(row[1])), parse_double(trim(row[2]))});
  }
  return samples;
}

RawDataset load_dataset(const std::string& manifest_path, const std::string& observations_path,
                        const std::string& runs_path, const std::string& quality_path) {
  RawDataset raw;
  raw.manifest = parse_manifest(read_file(manifest_path));
  parse_observations(read_file(observations_path), raw.manifest, raw.sensors, raw.settings);
  raw.runs = parse_runs(read_file(runs_path));
  raw.quality = parse_quality(read_file(quality_path));

  std::map<std::string, const ProductionRun*> by_id;
  for (const auto& run : raw.runs) by_id[run.batch_id] = &run;
  for (const auto& q : raw.quality) {
    auto it = by_id.find(q.batch_id);
    if (it == by_id.end()) {
      raw.warnings.push_back("quality sample for unknown run: " + q.batch_id);
    } else if (!it->second->contains(q.t)) {
      raw.warnings.push_back("quality sample outside run window: " + q.batch_id + " at " +
                             format_rfc3339(q.t));
    }
  }
  return raw;
}

std::vector<MachineSnapshot> align_snapshots(const ObservationTable& sensors,
                                             const ObservationTable& settings,
                                             const AlignOptions& options,
                                             AlignmentReport* report) {
  if (!(options.grid_seconds > 0.0)) throw Error("sampling interval must be positive");
  if (options.staleness_steps < 0) throw Error("staleness horizon must be non-negative");
  const auto grid_ms = static_cast<Timestamp>(std::llround(options.grid_seconds * 1000.0));
  if (grid_ms <= 0) throw Error("sampling interval must be positive");
  const Timestamp horizon = grid_ms * options.staleness_steps;

  Timestamp first = std::numeric_limits<Timestamp>::max();
  Timestamp last = std::numeric_limits<Timestamp>::min();
  for (const auto* table : {&sensors, &settings}) {
    for (const auto& s : table->series) {
      if (s.t.empty()) continue;
      first = std::min(first, s.t.front());
      last = std::max(last, s.t.back());
    }
  }
  AlignmentReport rep;
  std::vector<MachineSnapshot> out;
  if (first > last) throw Error("empty after alignment");

  struct Cursor {
    const Series* series;
    std::size_t next = 0;
    bool sensor;
  };
  std::vector<Cursor> cursors;
  for (const auto& s : sensors.series) cursors.push_back({&s, 0, true});
  for (const auto& s : settings.series) cursors.push_back({&s, 0, false});

  for (Timestamp g = first; g <= last; g += grid_ms) {
    ++rep.grid_instants;
    MachineSnapshot snap;
    snap.t = g;
    bool sensor_stale = false;
    bool setting_stale = false;
    for (auto& c : cursors) {
      const auto& s = *c.series;
      while (c.next < s.t.size() && s.t[c.next] <= g) ++c.next;
      if (c.next == 0 || g - s.t[c.next - 1] > horizon) {
        (c.sensor ? sensor_stale : setting_stale) = true;
        continue;
      }
      (c.sensor ? snap.sensors : snap.settings)[s.id] = s.v[c.next - 1];
    }
    if (sensor_stale || setting_stale) {
      ++rep.dropped;
      if (sensor_stale) ++rep.dropped_sensor_stale;
      if (setting_stale) ++rep.dropped_setting_stale;
      continue;
    }
    snap.new_settings = snap.settings;
    out.push_back(std::move(snap));
    ++rep.aligned;
  }
  if (report) *report = rep;
  if (out.empty()) throw Error("empty after alignment");
  return out;
}

void derive_new_settings(std::vector<MachineSnapshot>& snapshots,
                         const std::vector<ProductionRun>& runs) {
  std::vector<int> run_of(snapshots.size());
  for (std::size_t i = 0; i < snapshots.size(); ++i) run_of[i] = run_index_at(runs, snapshots[i].t);
  for (std::size_t i = 0; i < snapshots.size(); ++i) {
    bool has_next = i + 1 < snapshots.size() && run_of[i] >= 0 && run_of[i + 1] == run_of[i];
    snapshots[i].new_settings = has_next ? snapshots[i + 1].settings : snapshots[i].settings;
  }
}

std::optional<std::string> aggregate_label(const std::vector<double>& measurements,
                                           const QualityConfig& config) {
  if (measurements.empty()) return std::nullopt;
  // summed in sorted order so the mean does not depend on sample order
  std::vector<double> sorted = measurements;
  std::sort(sorted.begin(), sorted.end());
  double mean = std::accumulate(sorted.begin(), sorted.end(), 0.0) / static_cast<double>(sorted.size());
  switch (config.aggregation) {
    case Aggregation::mean:
      return config.band_of(mean);
    case Aggregation::last_sample:
      return config.band_of(measurements.back());
    case Aggregation::majority_in_band: {
      const QualityBand* band = config.target_band();
      if (band == nullptr) throw Error("quality config: no band for target label");
      auto inside = std::count_if(measurements.begin(), measurements.end(),
                                  [&](double m) { return band->range.contains(m); });
      double fraction = static_cast<double>(inside) / static_cast<double>(measurements.size());
      if (fraction >= config.in_band_threshold) return config.target_label;
      return config.band_of(mean);
    }
  }
  return std::nullopt;
}

RunLabels label_runs(const std::vector<ProductionRun>& runs,
                     const std::vector<QualitySample>& samples, const QualityConfig& config) {
  config.check();
  std::map<std::string, std::vector<QualitySample>> by_run;
  for (const auto& s : samples) by_run[s.batch_id].push_back(s);
  RunLabels out;
  for (const auto& run : runs) {
    auto it = by_run.find(run.batch_id);
    if (it == by_run.end() || it->second.empty()) {
      out.warnings.push_back("no quality samples for run: " + run.batch_id);
      out.excluded.push_back(run.batch_id);
      continue;
    }
    auto list = it->second;
    std::stable_sort(list.begin(), list.end(),
                     [](const QualitySample& a, const QualitySample& b) { return a.t < b.t; });
    std::vector<double> values;
    values.reserve(list.size());
    for (const auto& s : list) values.push_back(s.measurement);
    auto label = aggregate_label(values, config);
    if (!label) {
      out.warnings.push_back("quality measurement outside all bands for run: " + run.batch_id);
      out.excluded.push_back(run.batch_id);
      continue;
    }
    out.labels[run.batch_id] = *label;
  }
  return out;
}

TrainingSet build_training_set(const std::vector<MachineSnapshot>& snapshots,
                               const std::vector<ProductionRun>& runs,
                               const std::map<std::string, std::string>& run_labels,
                               const TrainingWindow& window, const Manifest& manifest,
                               const QualityConfig& quality) {
  TrainingSet set;
  set.manifest = manifest;
  set.quality = quality;
  set.window = window;
  for (const auto& run : runs) {
    if (run.start < window.start || run.end > window.end) continue;
    auto it = run_labels.find(run.batch_id);
    if (it != run_labels.end()) set.run_labels[run.batch_id] = it->second;
  }
  for (const auto& snap : snapshots) {
    if (snap.t < window.start || snap.t > window.end) {
      ++set.discarded_outside_window;
      continue;
    }
    int r = run_index_at(runs, snap.t);
    if (r < 0) {
      ++set.discarded_outside_runs;
      continue;
    }
    const auto& run = runs[static_cast<std::size_t>(r)];
    auto label = set.run_labels.find(run.batch_id);
    if (label == set.run_labels.end()) {
      if (run.start < window.start || run.end > window.end) {
        ++set.discarded_outside_runs;
      } else {
        ++set.discarded_unlabeled_run;
      }
      continue;
    }
    set.samples.push_back({snap.t, snap.process(), run.batch_id, label->second});
  }
  if (set.samples.empty()) throw Error("empty training set");
  return set;
}

std::vector<std::string> space_columns(const Manifest& manifest, Space space) {
  return space == Space::status ? parameter_ids(manifest) : setting_ids(manifest);
}

LabeledMatrix to_matrix(const TrainingSet& set, Space space) {
  LabeledMatrix m;
  m.columns = space_columns(set.manifest, space);
  m.rows = set.samples.size();
  m.values.resize(m.rows * m.columns.size());
  m.labels.resize(m.rows);
  std::vector<const ParameterDef*> defs;
  for (const auto& c : m.columns) defs.push_back(find_parameter(set.manifest, c));
  for (std::size_t r = 0; r < m.rows; ++r) {
    const auto& s = set.samples[r];
    for (std::size_t c = 0; c < m.columns.size(); ++c) {
      const ValueMap* source = nullptr;
      if (space == Space::new_settings) {
        source = &s.snapshot.new_settings;
      } else {
        source = defs[c]->kind == ParamKind::sensor ? &s.snapshot.status.sensors
                                                    : &s.snapshot.status.settings;
      }
      auto it = source->find(m.columns[c]);
      if (it == source->end()) throw Error("missing parameter: " + m.columns[c]);
      m.values[r * m.columns.size() + c] = it->second;
    }
    int label = set.quality.label_index(s.label);
    if (label < 0) throw Error("sample label not in quality labels: " + s.label);
    m.labels[r] = label;
  }
  return m;
}

std::string ingest_report_json(const IngestReport& report) {
  Json j{{"sensorSourceRows", report.sensor_source_rows},
         {"settingSourceRows", report.setting_source_rows},
         {"gridInstants", report.alignment.grid_instants},
         {"alignedInstants", report.alignment.aligned},
         {"droppedInstants", report.alignment.dropped},
         {"droppedSensorStale", report.alignment.dropped_sensor_stale},
         {"droppedSettingStale", report.alignment.dropped_setting_stale},
         {"runs", report.runs},
         {"runsExcluded", report.runs_excluded},
         {"trainingSamples", report.training_samples},
         {"discardedOutsideRuns", report.discarded_outside_runs},
         {"discardedUnlabeledRun", report.discarded_unlabeled_run},
         {"discardedOutsideWindow", report.discarded_outside_window},
         {"warnings", report.warnings}};
  return dump_canonical(j);
}

}  // namespace machstate
