#pragma once

// Shared fixtures and brute-force oracles for the test suites.

#include <algorithm>
#include <filesystem>
#include <random>
#include <string>
#include <tuple>
#include <vector>

#include <unistd.h>

#include "machstate/analytics.hpp"
#include "machstate/core.hpp"
#include "machstate/ingest.hpp"
#include "machstate/pipeline.hpp"
#include "machstate/synth.hpp"
#include "machstate/util.hpp"

namespace testsupport {

using namespace machstate;

inline QualityConfig labels_config(int n_labels) {
  QualityConfig q;
  if (n_labels == 2) {
    q.labels = {"off", "target"};
    q.bands = {{"off", {-kInf, 0.0}}, {"target", {0.0, kInf}}};
  } else {
    q.labels = {"low", "target", "high"};
    q.bands = {{"low", {-kInf, 0.0}}, {"target", {0.0, 1.0}}, {"high", {1.0, kInf}}};
  }
  q.target_label = "target";
  return q;
}

inline Manifest small_manifest(int sensors, int settings) {
  Manifest m;
  for (int i = 0; i < sensors; ++i) m.push_back({"s" + std::to_string(i), "", ParamKind::sensor, "", {}, {}});
  for (int i = 0; i < settings; ++i) m.push_back({"h" + std::to_string(i), "", ParamKind::setting, "", {}, {}});
  return m;
}

struct RandomDataset {
  int sensors = 1;
  int settings = 1;
  int labels = 2;
  int samples = 50;
};

/// Random training set; every sample is its own run so labels can depend on
/// the values. Half the columns are drawn from a coarse grid to force ties.
inline TrainingSet random_training_set(std::mt19937_64& gen, const RandomDataset& spec) {
  TrainingSet ts;
  ts.manifest = small_manifest(spec.sensors, spec.settings);
  ts.quality = labels_config(spec.labels);
  std::uniform_real_distribution<double> u(0.0, 10.0);
  std::uniform_int_distribution<int> grid(0, 9);
  std::bernoulli_distribution flip(0.2);
  const int cols = spec.sensors + 2 * spec.settings;
  std::vector<bool> coarse(cols);
  for (int c = 0; c < cols; ++c) coarse[c] = gen() % 2 == 0;
  auto draw = [&](int c) { return coarse[c] ? static_cast<double>(grid(gen)) : u(gen); };
  for (int i = 0; i < spec.samples; ++i) {
    TrainingSample s;
    s.t = 1000 * i;
    s.batch_id = "b" + std::to_string(i);
    int c = 0;
    double score = 0.0;
    for (int k = 0; k < spec.sensors; ++k, ++c) {
      double v = draw(c);
      s.snapshot.status.sensors["s" + std::to_string(k)] = v;
      if (k == 0) score += v;
    }
    for (int k = 0; k < spec.settings; ++k, ++c) s.snapshot.status.settings["h" + std::to_string(k)] = draw(c);
    for (int k = 0; k < spec.settings; ++k, ++c) {
      double v = draw(c);
      s.snapshot.new_settings["h" + std::to_string(k)] = v;
      if (k == 0) score += v;
    }
    int label = spec.labels == 2 ? (score > 10.0) : (score <= 7.0 ? 0 : score <= 13.0 ? 1 : 2);
    if (flip(gen)) label = static_cast<int>(gen() % static_cast<std::uint64_t>(spec.labels));
    s.label = ts.quality.labels[static_cast<std::size_t>(label)];
    ts.run_labels[s.batch_id] = s.label;
    ts.samples.push_back(std::move(s));
  }
  ts.window = {0, 1000 * static_cast<Timestamp>(spec.samples)};
  return ts;
}

inline RandomDataset random_shape(std::mt19937_64& gen) {
  RandomDataset d;
  // at most five parameters overall
  d.sensors = 1 + static_cast<int>(gen() % 3);
  d.settings = 1 + static_cast<int>(gen() % 2);
  d.labels = 2 + static_cast<int>(gen() % 2);
  d.samples = 20 + static_cast<int>(gen() % 481);
  return d;
}

struct OracleScore {
  std::int64_t popularity = 0;
  double goodness = 0.0;
};

/// Popularity / goodness by direct rescan with state_matches.
inline OracleScore brute_score(const State& state, const TrainingSet& ts) {
  std::int64_t pop = 0, hit = 0;
  for (const auto& s : ts.samples) {
    if (!state_matches(state, observation_for(s.snapshot, state.space))) continue;
    ++pop;
    if (s.label == ts.quality.target_label) ++hit;
  }
  return {pop, pop > 0 ? static_cast<double>(hit) / static_cast<double>(pop) : 0.0};
}

inline OracleScore brute_score(const CompositeState& c, const State& u, const State& w, const TrainingSet& ts) {
  std::int64_t pop = 0, hit = 0;
  for (const auto& s : ts.samples) {
    if (!state_matches(u, observation_for(s.snapshot, Space::status))) continue;
    if (!state_matches(w, observation_for(s.snapshot, Space::new_settings))) continue;
    ++pop;
    if (s.label == ts.quality.target_label) ++hit;
  }
  (void)c;
  return {pop, pop > 0 ? static_cast<double>(hit) / static_cast<double>(pop) : 0.0};
}

inline const State& state_by_id(const std::vector<State>& states, const std::string& id) {
  return *std::find_if(states.begin(), states.end(), [&](const State& s) { return s.id == id; });
}

/// Linear scan over every composite; empty string when nothing matches.
inline std::string oracle_predict(const ModelBundle& b, const ProcessSnapshot& a) {
  const CompositeState* best = nullptr;
  for (const auto& c : b.composites) {
    if (c.popularity <= 0) continue;
    if (!state_matches(state_by_id(b.status_states, c.status_state_id), observation_for(a.status))) continue;
    if (!state_matches(state_by_id(b.settings_states, c.settings_state_id), a.new_settings)) continue;
    auto key = [](const CompositeState* x) { return std::make_tuple(-x->popularity, -x->goodness, x->id); };
    if (best == nullptr || key(&c) < key(best)) best = &c;
  }
  return best ? best->id : "";
}

inline std::string oracle_recommend(const ModelBundle& b, const MachineStatus& m) {
  const CompositeState* best = nullptr;
  for (const auto& c : b.composites) {
    if (c.popularity <= 0) continue;
    if (!state_matches(state_by_id(b.status_states, c.status_state_id), observation_for(m))) continue;
    auto key = [](const CompositeState* x) { return std::make_tuple(-x->goodness, -x->popularity, x->id); };
    if (best == nullptr || key(&c) < key(best)) best = &c;
  }
  return best ? best->id : "";
}

/// Adds overlapping states and reassigns composite scores from a small
/// value set so that argmax ties are frequent.
inline ModelBundle with_overlaps_and_ties(ModelBundle b, std::mt19937_64& gen) {
  auto widen = [&](State s, const std::string& id) {
    s.id = id;
    for (auto& [p, iv] : s.intervals) {
      if (gen() % 2 == 0) iv = Interval::all();
    }
    return s;
  };
  const std::size_t nu = b.status_states.size(), nw = b.settings_states.size();
  for (int i = 0; i < 3; ++i) {
    b.status_states.push_back(widen(b.status_states[gen() % nu], "ux" + std::to_string(i)));
    b.settings_states.push_back(widen(b.settings_states[gen() % nw], "wx" + std::to_string(i)));
  }
  b.composites.clear();
  const double goodness[] = {0.0, 0.5, 1.0};
  for (const auto& u : b.status_states) {
    for (const auto& w : b.settings_states) {
      b.composites.push_back(CompositeState{composite_id(u.id, w.id), u.id, w.id, static_cast<std::int64_t>(gen() % 4), goodness[gen() % 3]});
    }
  }
  return b;
}

inline ProcessSnapshot random_probe(const TrainingSet& ts, std::mt19937_64& gen) {
  // mostly training points (they sit on split boundaries), sometimes mixed
  auto a = ts.samples[gen() % ts.samples.size()].snapshot;
  const auto& b = ts.samples[gen() % ts.samples.size()].snapshot;
  if (gen() % 3 == 0) a.new_settings = b.new_settings;
  if (gen() % 5 == 0) {
    for (auto& [k, v] : a.status.sensors) v += static_cast<double>(gen() % 3) - 1.0;
  }
  return a;
}

/// Fresh directory under the system temp dir.
inline std::filesystem::path temp_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("machstate_test_" + name + "_" + std::to_string(::getpid()));
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

/// Recoverability dataset prepared and trained once per process.
struct Recoverability {
  LabeledDataset dataset;
  TrainingSet training;
  ModelBundle bundle;
};

inline const Recoverability& recoverability(std::int64_t min_leaf_size = 30) {
  static Recoverability r = [&] {
    Recoverability out;
    auto dir = temp_dir("recoverability");
    generate_dataset(recoverability_scenario(7)).write(dir.string());
    auto raw = load_dataset((dir / "manifest.json").string(), (dir / "observations.csv").string(),
                            (dir / "runs.csv").string(), (dir / "quality.csv").string());
    auto q = parse_quality_config(read_file((dir / "quality_config.json").string()));
    out.dataset = prepare_dataset(raw, q, {});
    out.training = build_training_set(out.dataset.snapshots, out.dataset.runs, out.dataset.run_labels,
                                      out.dataset.window, out.dataset.manifest, out.dataset.quality);
    out.bundle = train_bundle(out.training, min_leaf_size);
    std::filesystem::remove_all(dir);
    return out;
  }();
  return r;
}

}  // namespace testsupport
