// Acceptance suite: one PASS/FAIL line per criterion. Exit status is the
// number of failed criteria.

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <ctime>
#include <functional>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

#include "machstate/cli.hpp"
#include "machstate/evaluation.hpp"
#include "machstate/session.hpp"
#include "support.hpp"

using namespace machstate;
using Clock = std::chrono::steady_clock;

namespace {

// Pinned tolerances.
constexpr int kOracleDatasets = 120;
constexpr double kOracleBudgetSeconds = 30.0;
constexpr int kArgmaxPairs = 1000;
constexpr double kPooledAccuracy = 0.95;
constexpr double kRunsAboveHalf = 0.90;
constexpr double kRecoverabilityBudgetSeconds = 120.0;
constexpr std::int64_t kRecoverabilityLeaf = 30;
constexpr std::int64_t kRealtimeTicks = 10000;
constexpr double kTickBudgetMs = 10.0;
constexpr std::size_t kMaxSupportedComposites = 5000;

struct Outcome {
  bool pass = false;
  std::string detail;
};

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

// Partition checks accumulate over every bundle the suite builds.
struct PartitionTally {
  int bundles = 0;
  int violations = 0;
  std::string first;

  void check(const ModelBundle& b, const TrainingSet& ts) {
    ++bundles;
    const auto n = static_cast<std::int64_t>(ts.samples.size());
    std::int64_t su = 0, sw = 0, sd = 0;
    for (const auto& s : b.status_states) su += s.popularity;
    for (const auto& s : b.settings_states) sw += s.popularity;
    for (const auto& c : b.composites) sd += c.popularity;
    auto fail = [&](const std::string& why) {
      if (violations++ == 0) first = why;
    };
    if (su != n || sw != n || sd != n)
      fail("sums " + std::to_string(su) + "/" + std::to_string(sw) + "/" + std::to_string(sd) + " vs " +
           std::to_string(n));
    for (const auto& s : ts.samples) {
      int u = 0, w = 0;
      const auto ou = observation_for(s.snapshot, Space::status);
      const auto ow = observation_for(s.snapshot, Space::new_settings);
      for (const auto& st : b.status_states) u += state_matches(st, ou);
      for (const auto& st : b.settings_states) w += state_matches(st, ow);
      if (u != 1 || w != 1) {
        fail("sample matched " + std::to_string(u) + " status / " + std::to_string(w) + " settings states");
        break;
      }
    }
  }
};

PartitionTally g_partition;

Outcome scoring_oracle() {
  auto t0 = Clock::now();
  std::mt19937_64 gen(20240601);
  std::int64_t mismatches = 0, states = 0;
  for (int trial = 0; trial < kOracleDatasets; ++trial) {
    auto ts = testsupport::random_training_set(gen, testsupport::random_shape(gen));
    auto b = train_bundle(ts, 1 + static_cast<std::int64_t>(gen() % 25));
    g_partition.check(b, ts);
    for (const auto* list : {&b.status_states, &b.settings_states}) {
      for (const auto& s : *list) {
        auto o = testsupport::brute_score(s, ts);
        ++states;
        mismatches += s.popularity != o.popularity || s.goodness != o.goodness;
      }
    }
    // composites: every (matching u, matching w) pair of each sample, by rescan
    std::map<std::pair<std::string, std::string>, std::pair<std::int64_t, std::int64_t>> pairs;
    for (const auto& smp : ts.samples) {
      const auto ou = observation_for(smp.snapshot, Space::status);
      const auto ow = observation_for(smp.snapshot, Space::new_settings);
      for (const auto& u : b.status_states) {
        if (!state_matches(u, ou)) continue;
        for (const auto& w : b.settings_states) {
          if (!state_matches(w, ow)) continue;
          auto& [pop, hit] = pairs[{u.id, w.id}];
          ++pop;
          hit += smp.label == ts.quality.target_label;
        }
      }
    }
    for (const auto& c : b.composites) {
      auto it = pairs.find({c.status_state_id, c.settings_state_id});
      const std::int64_t pop = it == pairs.end() ? 0 : it->second.first;
      const double good = pop > 0 ? static_cast<double>(it->second.second) / static_cast<double>(pop) : 0.0;
      ++states;
      mismatches += c.popularity != pop || c.goodness != good;
    }
  }
  double secs = seconds_since(t0);
  return {mismatches == 0 && secs < kOracleBudgetSeconds,
          std::to_string(kOracleDatasets) + " datasets, " + std::to_string(states) + " scored states, " +
              std::to_string(mismatches) + " mismatches, " + fmt("%.1f s", secs)};
}

Outcome argmax_oracle() {
  std::mt19937_64 gen(4242);
  int pairs = 0, mismatches = 0, ties = 0;
  for (int trial = 0; pairs < kArgmaxPairs || trial < 40; ++trial) {
    auto ts = testsupport::random_training_set(gen, testsupport::random_shape(gen));
    auto trained = train_bundle(ts, 1 + static_cast<std::int64_t>(gen() % 10));
    auto b = trial % 2 ? testsupport::with_overlaps_and_ties(trained, gen) : trained;
    CompiledModel m(b);
    for (int k = 0; k < 25; ++k, ++pairs) {
      auto a = testsupport::random_probe(ts, gen);
      auto p = m.predict(a);
      mismatches += p.composite_id.value_or("") != testsupport::oracle_predict(b, a);
      auto expect = testsupport::oracle_recommend(b, a.status);
      std::string got;
      try {
        got = m.recommend(a.status).composite_id;
      } catch (const Error&) {
      }
      mismatches += got != expect;
      ties += p.matched_count > 1;
    }
  }
  return {mismatches == 0 && ties > 0 && pairs >= kArgmaxPairs,
          std::to_string(pairs) + " pairs, " + std::to_string(ties) + " with several matches, " +
              std::to_string(mismatches) + " mismatches"};
}

struct Recoverability {
  LabeledDataset dataset;
  RunSplit split{SplitKind::temporal, 0.75, 0};
  std::filesystem::path dir;
};

Recoverability& recoverability() {
  static Recoverability r = [] {
    Recoverability out;
    out.dir = testsupport::temp_dir("acceptance_recoverability");
    generate_dataset(recoverability_scenario(7)).write(out.dir.string());
    DataPaths paths{(out.dir / "manifest.json").string(), (out.dir / "observations.csv").string(),
                    (out.dir / "runs.csv").string(), (out.dir / "quality.csv").string(),
                    (out.dir / "quality_config.json").string()};
    out.dataset = load_labeled(paths, {});
    return out;
  }();
  return r;
}

// Leaf state containing `status` has a supported composite with nonzero goodness.
bool in_regime(const ModelBundle& b, const MachineStatus& status) {
  const auto obs = observation_for(status);
  for (const auto& u : b.status_states) {
    if (!state_matches(u, obs)) continue;
    for (const auto& c : b.composites) {
      if (c.status_state_id == u.id && c.popularity > 0 && c.goodness > 0.0) return true;
    }
  }
  return false;
}

std::vector<Outcome> synthetic_recoverability() {
  auto t0 = Clock::now();
  auto& rec = recoverability();
  const auto& ds = rec.dataset;
  auto report = sweep_min_leaf_size(ds, {kRecoverabilityLeaf}, {}, rec.split);
  const auto& cell = report.cells.at(0);

  Outcome a;
  a.pass = cell.accuracy && *cell.accuracy >= kPooledAccuracy;
  a.detail = "pooled accuracy " + (cell.accuracy ? fmt("%.4f", *cell.accuracy) : std::string("n/a")) + " on " +
             std::to_string(cell.test_runs.size()) + " test runs (" + std::to_string(cell.train_runs.size()) +
             " train), run-mean " + (cell.run_mean_accuracy ? fmt("%.4f", *cell.run_mean_accuracy) : "n/a");

  std::size_t above = 0;
  for (const auto& r : cell.runs) above += r.frequency && *r.frequency > 0.5;
  const double share = cell.runs.empty() ? 0.0 : static_cast<double>(above) / static_cast<double>(cell.runs.size());
  Outcome b{share >= kRunsAboveHalf, std::to_string(above) + "/" + std::to_string(cell.runs.size()) +
                                         " test runs with frequency > 0.5 (" + fmt("%.3f", share) + ")"};

  // (c) retrain on the same training runs and inspect recommendations
  std::set<std::string> train_ids(cell.train_runs.begin(), cell.train_runs.end());
  std::vector<ProductionRun> train_runs, test_runs;
  for (const auto& r : ds.runs) (train_ids.count(r.batch_id) ? train_runs : test_runs).push_back(r);
  auto ts = build_training_set(ds.snapshots, train_runs, ds.run_labels, ds.window, ds.manifest, ds.quality);
  auto bundle = train_bundle(ts, kRecoverabilityLeaf);
  g_partition.check(bundle, ts);
  CompiledModel model(bundle);

  std::vector<double> h1_values;
  for (const auto& s : ts.samples) h1_values.push_back(s.snapshot.new_settings.at("h1"));
  std::sort(h1_values.begin(), h1_values.end());
  auto max_at_most = [&](double x) { return *std::prev(std::upper_bound(h1_values.begin(), h1_values.end(), x)); };
  auto min_above = [&](double x) { return *std::upper_bound(h1_values.begin(), h1_values.end(), x); };
  const double low_floor = max_at_most(100.0), high_ceiling = min_above(110.0);
  const auto plant = recoverability_scenario(7).plant;

  std::int64_t statuses = 0, regime = 0, bad = 0;
  std::string first_bad;
  for (const auto& snap : ds.snapshots) {
    if (!std::any_of(test_runs.begin(), test_runs.end(), [&](const ProductionRun& r) { return r.contains(snap.t); }))
      continue;
    ++statuses;
    const auto status = snap.status();
    // model-supported regime, or the plant's target regime now and at the
    // steady state of the current settings
    const double h1 = status.settings.at("h1");
    const bool target_regime = h1 > 100.0 && h1 <= 110.0 && status.sensors.at("s1") <= 50.0 &&
                               plant.steady_state(status.settings).at("s1") <= 50.0;
    if (!in_regime(bundle, status) && !target_regime) continue;
    ++regime;
    auto r = model.recommend(status);
    const auto& iv = r.settings_intervals.at("h1");
    bool ok = iv.low < 110.0 && iv.high > 100.0 && iv.low >= low_floor && iv.high <= high_ceiling;
    if (!ok && bad++ == 0) {
      std::ostringstream os;
      os << "(" << iv.low << ", " << iv.high << "]";
      first_bad = os.str();
    }
  }
  const double secs = seconds_since(t0);
  Outcome c;
  c.pass = regime > 0 && bad == 0 && secs < kRecoverabilityBudgetSeconds;
  c.detail = std::to_string(regime) + "/" + std::to_string(statuses) + " test statuses in regime, " +
             std::to_string(bad) + " h1 intervals outside (100, 110] resolution [" + fmt("%g", low_floor) + ", " +
             fmt("%g", high_ceiling) + "]" + (bad ? ", first " + first_bad : std::string()) + ", " +
             fmt("%.1f s", secs);
  return {a, b, c};
}

Outcome leaf_sweep() {
  auto& rec = recoverability();
  const std::vector<std::int64_t> leaves{1, 10, 30, 90};
  auto report = sweep_min_leaf_size(rec.dataset, leaves, {}, rec.split);
  bool ok = report.cells.size() == leaves.size();
  std::string counts;
  for (std::size_t i = 0; i < report.cells.size(); ++i) {
    const auto& c = report.cells[i];
    counts += (i ? "/" : "") + std::to_string(c.states.total_states());
    if (i > 0) {
      const auto& p = report.cells[i - 1].states;
      ok = ok && c.states.status_states <= p.status_states && c.states.settings_states <= p.settings_states;
    }
    for (std::size_t k = 1; k < c.ccdf.size(); ++k) ok = ok && c.ccdf[k].second <= c.ccdf[k - 1].second;
    ok = ok && !c.ccdf.empty() && c.ccdf.back().first == 1.0;
  }
  // accuracy table: header plus one row per cell, equal field counts
  auto table = parse_csv(accuracy_csv(report));
  ok = ok && table.size() == leaves.size() + 1;
  for (const auto& row : table) ok = ok && row.size() == table[0].size();
  auto curves = parse_csv(ccdf_csv(report, "type-1"));
  ok = ok && !curves.empty() && curves[0].size() == leaves.size() + 1;
  auto json = Json::parse(sweep_report_json(report));
  ok = ok && json.at("cells").size() == leaves.size();
  return {ok, "leaf sizes 1/10/30/90 give " + counts + " states, CCDF monotone, " + std::to_string(table.size() - 1) +
                  "-row accuracy table"};
}

Outcome determinism() {
  auto& rec = recoverability();
  const auto& dir = rec.dir;
  TrainOptions opts;
  opts.paths = {(dir / "manifest.json").string(), (dir / "observations.csv").string(), (dir / "runs.csv").string(),
                (dir / "quality.csv").string(), (dir / "quality_config.json").string()};
  save_bundle(run_train(opts), (dir / "a.json").string());
  save_bundle(run_train(opts), (dir / "b.json").string());
  const auto a = read_file((dir / "a.json").string());
  const bool bundles_same = a == read_file((dir / "b.json").string());

  auto model = std::make_shared<const CompiledModel>(load_bundle((dir / "a.json").string()));
  SessionConfig cfg;
  cfg.plant = recoverability_scenario(7).plant;
  cfg.max_ticks = 200;
  cfg.seed = 99;
  cfg.recommend_each_tick = true;
  auto actions = parse_action_script(R"([{"tick": 10, "settings": {"h1": 104}}, {"tick": 50, "quality": 103}])");
  const auto log1 = run_simulation(model, cfg, actions);
  const auto log2 = run_simulation(model, cfg, actions);
  const bool logs_same = log1 == log2;
  return {bundles_same && logs_same, std::string("bundles ") + (bundles_same ? "identical" : "differ") + " (" +
                                         std::to_string(a.size()) + " bytes), session logs " +
                                         (logs_same ? "identical" : "differ") + " (" +
                                         std::to_string(log1.size()) + " bytes)"};
}

Outcome realtime() {
  auto dir = testsupport::temp_dir("acceptance_reference");
  auto sc = reference_scale_scenario(11);
  generate_dataset(sc).write(dir.string());
  TrainOptions opts;
  opts.paths = {(dir / "manifest.json").string(), (dir / "observations.csv").string(), (dir / "runs.csv").string(),
                (dir / "quality.csv").string(), (dir / "quality_config.json").string()};
  auto bundle = run_train(opts);
  std::filesystem::remove_all(dir);
  std::int64_t sensors = 0, settings = 0;
  for (const auto& p : bundle.manifest) (p.kind == ParamKind::sensor ? sensors : settings) += 1;
  auto model = std::make_shared<const CompiledModel>(bundle);

  SessionConfig cfg;
  cfg.plant = sc.plant;
  cfg.max_ticks = kRealtimeTicks;
  cfg.recommend_each_tick = true;
  Session session(cfg, model);
  const auto thread_ms = [] {
    timespec ts{};
    clock_gettime(CLOCK_THREAD_CPUTIME_ID, &ts);
    return static_cast<double>(ts.tv_sec) * 1e3 + static_cast<double>(ts.tv_nsec) / 1e6;
  };
  std::vector<double> ms;
  ms.reserve(kRealtimeTicks);
  double worst_cpu = 0.0;
  while (true) {
    auto t0 = Clock::now();
    const double c0 = thread_ms();
    auto ev = session.step();
    const double cpu = thread_ms() - c0;
    const double elapsed = std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
    if (!ev) break;
    ms.push_back(elapsed);
    worst_cpu = std::max(worst_cpu, cpu);
  }
  std::vector<double> sorted = ms;
  std::sort(sorted.begin(), sorted.end());
  double mean = 0.0;
  for (double v : ms) mean += v;
  mean /= static_cast<double>(std::max<std::size_t>(ms.size(), 1));
  const double worst = sorted.empty() ? 0.0 : sorted.back();
  const double p99 = sorted.empty() ? 0.0 : sorted[sorted.size() * 99 / 100];
  const bool ok = sensors == 23 && settings == 7 && model->supported_composites() <= kMaxSupportedComposites &&
                  static_cast<std::int64_t>(ms.size()) == kRealtimeTicks && worst < kTickBudgetMs;
  return {ok, std::to_string(sensors) + "+" + std::to_string(settings) + " parameters, " +
                  std::to_string(model->supported_composites()) + " supported composites, " +
                  std::to_string(ms.size()) + " ticks: mean " + fmt("%.3f", mean) + " ms, p99 " +
                  fmt("%.3f", p99) + " ms, max " + fmt("%.3f", worst) + " ms (thread cpu max " + fmt("%.3f", worst_cpu) + " ms)"};
}

}  // namespace

int main() {
  int failed = 0;
  auto report = [&](const std::string& name, const Outcome& o) {
    std::cout << (o.pass ? "PASS " : "FAIL ") << name << ": " << o.detail << std::endl;
    failed += !o.pass;
  };
  auto guarded = [&](const std::string& name, const std::function<Outcome()>& fn) {
    try {
      report(name, fn());
    } catch (const std::exception& e) {
      report(name, {false, std::string("error: ") + e.what()});
    }
  };

  guarded("scoring oracle equivalence", scoring_oracle);
  guarded("argmax oracle", argmax_oracle);
  try {
    auto r = synthetic_recoverability();
    report("synthetic recoverability (a) pooled accuracy >= 0.95", r[0]);
    report("synthetic recoverability (b) >= 90% of runs above 0.5", r[1]);
    report("synthetic recoverability (c) recommended h1 interval", r[2]);
  } catch (const std::exception& e) {
    report("synthetic recoverability", {false, std::string("error: ") + e.what()});
  }
  guarded("leaf-size sweep behavior", leaf_sweep);
  guarded("determinism", determinism);
  guarded("real-time budget", realtime);
  report("partition conservation",
         {g_partition.bundles > 0 && g_partition.violations == 0,
          std::to_string(g_partition.bundles) + " bundles, " + std::to_string(g_partition.violations) +
              " violations" + (g_partition.first.empty() ? "" : ", first: " + g_partition.first)});

  std::filesystem::remove_all(recoverability().dir);
  return failed;
}
