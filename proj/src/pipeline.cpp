#include "machstate/pipeline.hpp"

#include <algorithm>
#include <bit>
#include <cstring>

#include "machstate/analytics.hpp"
#include "machstate/json.hpp"
#include "machstate/states.hpp"
#include "machstate/util.hpp"

namespace machstate {
namespace {

// Length-prefixed binary encoding; fixed-width little-endian integers and
// IEEE bit patterns for doubles.
class Encoder {
 public:
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }
  void i64(std::int64_t v) { u64(static_cast<std::uint64_t>(v)); }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void str(const std::string& s) {
    u64(s.size());
    buf_ += s;
  }
  void values(const ValueMap& m, const std::vector<std::string>& order) {
    for (const auto& id : order) {
      auto it = m.find(id);
      if (it == m.end()) {
        buf_.push_back(0);
      } else {
        buf_.push_back(1);
        f64(it->second);
      }
    }
  }
  const std::string& bytes() const { return buf_; }

 private:
  std::string buf_;
};

}  // namespace

LabeledDataset prepare_dataset(const RawDataset& raw, const QualityConfig& quality,
                               const PrepareOptions& options, IngestReport* report) {
  quality.check();
  AlignmentReport alignment;
  LabeledDataset out;
  out.manifest = raw.manifest;
  out.quality = quality;
  out.runs = raw.runs;
  out.snapshots = align_snapshots(raw.sensors, raw.settings, options.align, &alignment);
  derive_new_settings(out.snapshots, out.runs);
  auto labels = label_runs(out.runs, raw.quality, quality);
  out.run_labels = labels.labels;

  if (options.window) {
    out.window = *options.window;
  } else {
    out.window = {out.snapshots.front().t, out.snapshots.back().t};
    for (const auto& run : out.runs) {
      out.window.start = std::min(out.window.start, run.start);
      out.window.end = std::max(out.window.end, run.end);
    }
  }
  if (out.window.start > out.window.end) throw Error("training window start after end");

  if (report) {
    report->sensor_source_rows = raw.sensors.source_rows;
    report->setting_source_rows = raw.settings.source_rows;
    report->alignment = alignment;
    report->runs = static_cast<std::int64_t>(raw.runs.size());
    report->runs_excluded = static_cast<std::int64_t>(labels.excluded.size());
    report->warnings = raw.warnings;
    report->warnings.insert(report->warnings.end(), labels.warnings.begin(), labels.warnings.end());
  }
  return out;
}

std::string dataset_fingerprint(const TrainingSet& training) {
  Encoder e;
  const auto sensors = sensor_ids(training.manifest);
  const auto settings = setting_ids(training.manifest);
  e.str(Json(training.manifest).dump());
  e.str(Json(training.quality).dump());
  e.i64(training.window.start);
  e.i64(training.window.end);
  e.u64(training.samples.size());
  for (const auto& s : training.samples) {
    e.i64(s.t);
    e.str(s.batch_id);
    e.str(s.label);
    e.values(s.snapshot.status.sensors, sensors);
    e.values(s.snapshot.status.settings, settings);
    e.values(s.snapshot.new_settings, settings);
  }
  return sha256_hex(e.bytes());
}

ModelBundle train_bundle(const TrainingSet& training, std::int64_t min_leaf_size, Exec exec) {
  training.quality.check();
  if (training.samples.empty()) throw Error("empty training set");
  const auto& labels = training.quality.labels;
  const auto& target = training.quality.target_label;

  auto status_data = to_matrix(training, Space::status);
  auto settings_data = to_matrix(training, Space::new_settings);

  ModelBundle b;
  b.manifest = training.manifest;
  b.quality = training.quality;
  b.training_window = training.window;
  b.min_leaf_size = min_leaf_size;
  b.status_tree = fit_tree(status_data, labels, Space::status, min_leaf_size, exec);
  b.settings_tree = fit_tree(settings_data, labels, Space::new_settings, min_leaf_size, exec);

  auto status_states = rules_to_states(extract_rules(b.status_tree), status_data.columns, Space::status);
  auto settings_states =
      rules_to_states(extract_rules(b.settings_tree), settings_data.columns, Space::new_settings);
  b.status_states =
      score_states(std::move(status_states), status_data, labels, target, Space::status, exec).states;
  b.settings_states = score_states(std::move(settings_states), settings_data, labels, target,
                                   Space::new_settings, exec)
                          .states;
  b.composites = build_composites(b.status_states, b.settings_states, training, exec);
  b.dataset_fingerprint = dataset_fingerprint(training);

  auto violations = validate_bundle(b);
  if (!violations.empty()) throw Error("trained bundle is invalid: " + violations.front());
  return b;
}

}  // namespace machstate
