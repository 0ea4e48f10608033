#include "machstate/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <random>
#include <set>
#include <sstream>

#include "machstate/json.hpp"
#include "machstate/util.hpp"

namespace machstate {

RunEvaluation evaluate_run(const CompiledModel& model, const std::vector<ProcessSnapshot>& snapshots,
                           const std::string& batch_id, const std::string& actual_label,
                           double threshold, Exec exec) {
  RunEvaluation ev;
  ev.batch_id = batch_id;
  ev.actual_label = actual_label;
  ev.snapshot_count = static_cast<std::int64_t>(snapshots.size());
  const bool actual_target = actual_label == model.bundle().quality.target_label;
  for (const auto& p : model.predict_batch(snapshots, threshold, exec)) {
    if (p.verdict == Verdict::unknown) {
      ++ev.unknown_count;
    } else if ((p.verdict == Verdict::target) == actual_target) {
      ++ev.correct_count;
    }
  }
  auto evaluated = ev.snapshot_count - ev.unknown_count;
  if (evaluated > 0)
    ev.frequency = static_cast<double>(ev.correct_count) / static_cast<double>(evaluated);
  return ev;
}

std::vector<CcdfPoint> frequency_ccdf(const std::vector<RunEvaluation>& runs, double grid_step) {
  if (!(grid_step > 0.0 && grid_step <= 1.0)) throw Error("ccdf grid step must be in (0, 1]");
  std::vector<double> freqs;
  for (const auto& r : runs) {
    if (r.frequency) freqs.push_back(*r.frequency);
  }
  if (freqs.empty()) throw Error("no evaluable runs");
  const auto steps = static_cast<std::int64_t>(std::ceil(1.0 / grid_step - 1e-9));
  std::vector<CcdfPoint> out;
  for (std::int64_t i = 0; i <= steps; ++i) {
    double x = std::min(1.0, static_cast<double>(i) * grid_step);
    auto above = std::count_if(freqs.begin(), freqs.end(), [&](double f) { return f > x; });
    out.emplace_back(x, static_cast<double>(above) / static_cast<double>(freqs.size()));
  }
  return out;
}

std::string material_of(const ProductionRun& run) {
  return run.material_type.value_or(kUnspecifiedMaterial);
}

std::pair<std::vector<std::string>, std::vector<std::string>> split_runs(
    const std::vector<ProductionRun>& runs, const RunSplit& split) {
  if (!(split.train_fraction > 0.0 && split.train_fraction < 1.0))
    throw Error("train fraction must be in (0, 1)");
  std::vector<const ProductionRun*> order;
  for (const auto& r : runs) order.push_back(&r);
  std::sort(order.begin(), order.end(), [](const ProductionRun* a, const ProductionRun* b) {
    return a->start != b->start ? a->start < b->start : a->batch_id < b->batch_id;
  });
  if (split.kind == SplitKind::random) {
    std::mt19937_64 rng(split.seed);
    // Fisher-Yates with an explicit draw so the permutation does not depend
    // on the standard library's shuffle.
    for (std::size_t i = order.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(rng() % i);
      std::swap(order[i - 1], order[j]);
    }
  }
  auto n = order.size();
  auto n_train = static_cast<std::size_t>(std::floor(split.train_fraction * static_cast<double>(n) + 1e-9));
  if (n >= 2) n_train = std::clamp<std::size_t>(n_train, 1, n - 1);
  std::pair<std::vector<std::string>, std::vector<std::string>> out;
  for (std::size_t i = 0; i < n; ++i) (i < n_train ? out.first : out.second).push_back(order[i]->batch_id);
  return out;
}

SweepReport sweep_min_leaf_size(const LabeledDataset& dataset, const std::vector<std::int64_t>& leaf_sizes,
                                const std::vector<std::string>& material_types, const RunSplit& split,
                                const SweepOptions& options) {
  if (leaf_sizes.empty()) throw Error("no leaf sizes to sweep");
  SweepReport report;
  report.split = split;
  report.options = options;

  std::vector<std::string> materials = material_types;
  if (materials.empty()) {
    std::set<std::string> seen;
    for (const auto& r : dataset.runs) {
      if (dataset.run_labels.count(r.batch_id)) seen.insert(material_of(r));
    }
    materials.assign(seen.begin(), seen.end());
  }

  // Snapshots grouped by the unique run containing them.
  std::map<std::string, std::vector<ProcessSnapshot>> by_run;
  for (const auto& snap : dataset.snapshots) {
    int r = run_index_at(dataset.runs, snap.t);
    if (r >= 0) by_run[dataset.runs[static_cast<std::size_t>(r)].batch_id].push_back(snap.process());
  }

  for (const auto& material : materials) {
    std::vector<ProductionRun> labeled;
    for (const auto& r : dataset.runs) {
      if (material_of(r) == material && dataset.run_labels.count(r.batch_id)) labeled.push_back(r);
    }
    auto [train_ids, test_ids] = split_runs(labeled, split);
    if (test_ids.empty()) throw Error("material type has no test runs: " + material);
    if (train_ids.empty()) throw Error("material type has no training runs: " + material);

    std::map<std::string, std::string> train_labels;
    for (const auto& id : train_ids) train_labels[id] = dataset.run_labels.at(id);
    std::vector<ProductionRun> train_runs;
    for (const auto& r : dataset.runs) {
      if (train_labels.count(r.batch_id)) train_runs.push_back(r);
    }
    auto training = build_training_set(dataset.snapshots, train_runs, train_labels, dataset.window,
                                       dataset.manifest, dataset.quality);

    for (auto leaf : leaf_sizes) {
      auto model = CompiledModel(train_bundle(training, leaf, options.exec));
      SweepCell cell;
      cell.material_type = material;
      cell.min_leaf_size = leaf;
      cell.train_runs = train_ids;
      cell.test_runs = test_ids;
      const auto& b = model.bundle();
      cell.states.status_states = static_cast<std::int64_t>(b.status_states.size());
      cell.states.settings_states = static_cast<std::int64_t>(b.settings_states.size());
      cell.states.composites = static_cast<std::int64_t>(b.composites.size());
      cell.states.supported_composites = static_cast<std::int64_t>(model.supported_composites());

      double freq_sum = 0.0;
      std::int64_t freq_runs = 0;
      for (const auto& id : test_ids) {
        auto it = by_run.find(id);
        static const std::vector<ProcessSnapshot> none;
        const auto& snaps = it == by_run.end() ? none : it->second;
        auto ev = evaluate_run(model, snaps, id, dataset.run_labels.at(id), options.threshold, options.exec);
        cell.evaluated_snapshots += ev.snapshot_count - ev.unknown_count;
        cell.correct_snapshots += ev.correct_count;
        cell.unknown_snapshots += ev.unknown_count;
        if (ev.frequency) {
          freq_sum += *ev.frequency;
          ++freq_runs;
        }
        cell.runs.push_back(std::move(ev));
      }
      if (cell.evaluated_snapshots > 0)
        cell.accuracy = static_cast<double>(cell.correct_snapshots) / static_cast<double>(cell.evaluated_snapshots);
      if (freq_runs > 0) {
        cell.run_mean_accuracy = freq_sum / static_cast<double>(freq_runs);
        cell.ccdf = frequency_ccdf(cell.runs, options.ccdf_step);
      }
      report.cells.push_back(std::move(cell));
    }
  }
  return report;
}

namespace {

Json optional_json(const std::optional<double>& v) { return v ? Json(*v) : Json(nullptr); }

std::string optional_csv(const std::optional<double>& v) { return v ? format_double(*v) : ""; }

}  // namespace

std::string sweep_report_json(const SweepReport& report) {
  Json cells = Json::array();
  for (const auto& c : report.cells) {
    Json runs = Json::array();
    for (const auto& r : c.runs) {
      runs.push_back({{"batchId", r.batch_id},
                      {"actualLabel", r.actual_label},
                      {"snapshotCount", r.snapshot_count},
                      {"correctCount", r.correct_count},
                      {"unknownCount", r.unknown_count},
                      {"correctPredictionFrequency", optional_json(r.frequency)}});
    }
    Json ccdf = Json::array();
    for (const auto& [x, f] : c.ccdf) ccdf.push_back({{"x", x}, {"fraction", f}});
    cells.push_back({{"materialType", c.material_type},
                     {"minLeafSize", c.min_leaf_size},
                     {"trainRuns", c.train_runs},
                     {"testRuns", c.test_runs},
                     {"evaluatedSnapshots", c.evaluated_snapshots},
                     {"correctSnapshots", c.correct_snapshots},
                     {"unknownSnapshots", c.unknown_snapshots},
                     {"accuracy", optional_json(c.accuracy)},
                     {"runMeanAccuracy", optional_json(c.run_mean_accuracy)},
                     {"stateCounts",
                      {{"statusStates", c.states.status_states},
                       {"settingsStates", c.states.settings_states},
                       {"composites", c.states.composites},
                       {"supportedComposites", c.states.supported_composites}}},
                     {"runEvaluations", runs},
                     {"ccdf", ccdf}});
  }
  Json j{{"split",
          {{"kind", report.split.kind == SplitKind::temporal ? "temporal" : "random"},
           {"trainFraction", report.split.train_fraction},
           {"seed", report.split.seed}}},
         {"threshold", report.options.threshold},
         {"ccdfStep", report.options.ccdf_step},
         {"cells", cells}};
  return dump_canonical(j);
}

std::string accuracy_csv(const SweepReport& report) {
  std::ostringstream out;
  out << "material_type,min_leaf_size,accuracy,run_mean_accuracy,evaluated_snapshots,correct_snapshots,"
         "unknown_snapshots,test_runs,status_states,settings_states,composites,supported_composites\n";
  for (const auto& c : report.cells) {
    out << csv_escape(c.material_type) << "," << c.min_leaf_size << "," << optional_csv(c.accuracy) << ","
        << optional_csv(c.run_mean_accuracy) << "," << c.evaluated_snapshots << "," << c.correct_snapshots
        << "," << c.unknown_snapshots << "," << c.test_runs.size() << "," << c.states.status_states << ","
        << c.states.settings_states << "," << c.states.composites << "," << c.states.supported_composites
        << "\n";
  }
  return out.str();
}

std::string ccdf_csv(const SweepReport& report, const std::string& material_type) {
  std::vector<const SweepCell*> cells;
  for (const auto& c : report.cells) {
    if (c.material_type == material_type) cells.push_back(&c);
  }
  std::ostringstream out;
  out << "x";
  for (const auto* c : cells) out << ",leaf_" << c->min_leaf_size;
  out << "\n";
  std::size_t rows = 0;
  for (const auto* c : cells) rows = std::max(rows, c->ccdf.size());
  for (std::size_t i = 0; i < rows; ++i) {
    std::optional<double> x;
    for (const auto* c : cells) {
      if (i < c->ccdf.size()) x = c->ccdf[i].first;
    }
    out << format_double(*x);
    for (const auto* c : cells) {
      out << ",";
      if (i < c->ccdf.size()) out << format_double(c->ccdf[i].second);
    }
    out << "\n";
  }
  return out.str();
}

std::string sweep_summary_table(const SweepReport& report) {
  std::ostringstream out;
  auto pct = [](const std::optional<double>& v) {
    if (!v) return std::string("-");
    std::ostringstream s;
    s << std::fixed << std::setprecision(1) << *v * 100.0 << "%";
    return s.str();
  };
  out << std::left << std::setw(16) << "material" << std::right << std::setw(6) << "leaf" << std::setw(10)
      << "accuracy" << std::setw(10) << "run-mean" << std::setw(10) << ">0.5" << std::setw(8) << "states"
      << std::setw(12) << "composites" << std::setw(9) << "unknown" << "\n";
  out << std::string(81, '-') << "\n";
  for (const auto& c : report.cells) {
    std::optional<double> above_half;
    std::int64_t evaluable = 0;
    std::int64_t above = 0;
    for (const auto& r : c.runs) {
      if (!r.frequency) continue;
      ++evaluable;
      if (*r.frequency > 0.5) ++above;
    }
    if (evaluable > 0) above_half = static_cast<double>(above) / static_cast<double>(evaluable);
    out << std::left << std::setw(16) << c.material_type << std::right << std::setw(6) << c.min_leaf_size
        << std::setw(10) << pct(c.accuracy) << std::setw(10) << pct(c.run_mean_accuracy) << std::setw(10)
        << pct(above_half) << std::setw(8) << c.states.total_states() << std::setw(12)
        << c.states.supported_composites << std::setw(9) << c.unknown_snapshots << "\n";
  }
  return out.str();
}

}  // namespace machstate
