#include "machstate/cli.hpp"

#include <CLI11.hpp>

#include <atomic>
#include <chrono>
#include <csignal>
#include <filesystem>
#include <iostream>
#include <sstream>
#include <thread>

#include "machstate/evaluation.hpp"
#include "machstate/server.hpp"
#include "machstate/states.hpp"
#include "machstate/synth.hpp"
#include "machstate/util.hpp"

namespace machstate {

QualityConfig load_quality_config(const std::string& path) {
  if (path.empty()) return QualityConfig::jam_default();
  return parse_quality_config(read_file(path));
}

LabeledDataset load_labeled(const DataPaths& paths, const PrepareOptions& options, IngestReport* report) {
  auto raw = load_dataset(paths.manifest, paths.data, paths.runs, paths.quality);
  return prepare_dataset(raw, load_quality_config(paths.quality_config), options, report);
}

namespace {

TrainingSet training_set_of(const LabeledDataset& ds, IngestReport* report) {
  auto training = build_training_set(ds.snapshots, ds.runs, ds.run_labels, ds.window, ds.manifest, ds.quality);
  if (report != nullptr) {
    report->training_samples = static_cast<std::int64_t>(training.samples.size());
    report->discarded_outside_runs = training.discarded_outside_runs;
    report->discarded_unlabeled_run = training.discarded_unlabeled_run;
    report->discarded_outside_window = training.discarded_outside_window;
  }
  return training;
}

}  // namespace

ModelBundle run_train(const TrainOptions& options, IngestReport* report) {
  auto ds = load_labeled(options.paths, options.prepare, report);
  auto training = training_set_of(ds, report);
  return train_bundle(training, options.min_leaf_size, options.exec);
}

std::vector<ScriptedAction> parse_action_script(const std::string& json_text) {
  std::vector<ScriptedAction> out;
  try {
    auto j = Json::parse(json_text);
    if (!j.is_array()) throw Error("action script must be a JSON array");
    for (const auto& a : j) {
      ScriptedAction act;
      act.tick = a.at("tick").get<std::int64_t>();
      if (act.tick < 0) throw Error("action script: negative tick");
      if (a.contains("settings")) act.settings = a["settings"].get<ValueMap>();
      if (a.contains("quality")) act.quality = a["quality"].get<double>();
      if (!act.settings && !act.quality) throw Error("action script: entry without settings or quality");
      out.push_back(std::move(act));
    }
  } catch (const Json::exception& e) {
    throw Error(std::string("malformed action script: ") + e.what());
  }
  std::stable_sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.tick < b.tick; });
  return out;
}

std::string run_simulation(std::shared_ptr<const CompiledModel> model, const SessionConfig& config,
                           const std::vector<ScriptedAction>& actions) {
  config.check();
  if (config.mode == SessionMode::synthetic && !config.max_ticks)
    throw Error("headless synthetic session requires max ticks");
  std::vector<MachineSnapshot> replay;
  if (config.replay_source) replay = parse_snapshot_csv(read_file(*config.replay_source), model->bundle().manifest);
  Session session(config, std::move(model), std::move(replay));
  std::size_t next = 0;
  for (std::int64_t k = 0;; ++k) {
    for (; next < actions.size() && actions[next].tick <= k; ++next) {
      if (actions[next].settings) session.apply_settings(*actions[next].settings);
      if (actions[next].quality) session.record_quality_sample(*actions[next].quality);
    }
    if (!session.step()) break;
  }
  session.close();
  return session.log_jsonl();
}

std::string predictions_csv(const CompiledModel& model, const std::vector<MachineSnapshot>& snapshots,
                            double threshold) {
  std::vector<ProcessSnapshot> process;
  process.reserve(snapshots.size());
  for (const auto& s : snapshots) process.push_back(s.process());
  auto preds = model.predict_batch(process, threshold, Exec::parallel);
  std::ostringstream out;
  out << "t,likelihood,verdict,composite_id,popularity,matched_count\n";
  for (std::size_t i = 0; i < snapshots.size(); ++i) {
    const auto& p = preds[i];
    out << format_rfc3339(snapshots[i].t) << "," << (p.likelihood ? format_double(*p.likelihood) : "") << ","
        << to_string(p.verdict) << "," << p.composite_id.value_or("") << "," << p.popularity << ","
        << p.matched_count << "\n";
  }
  return out.str();
}

std::string recommendations_csv(const CompiledModel& model, const std::vector<MachineSnapshot>& snapshots) {
  const auto& cols = model.settings_columns();
  std::ostringstream out;
  out << "t,composite_id,expected_goodness,support";
  for (const auto& c : cols) out << "," << csv_escape(c + "_low") << "," << csv_escape(c + "_high") << ","
                                 << csv_escape(c + "_point");
  out << ",error\n";
  auto bound = [](double v) { return std::isinf(v) ? std::string() : format_double(v); };
  for (const auto& s : snapshots) {
    out << format_rfc3339(s.t);
    try {
      auto r = model.recommend(s.status());
      out << "," << r.composite_id << "," << format_double(r.expected_goodness) << "," << r.support;
      for (const auto& c : cols) {
        const auto& iv = r.settings_intervals.at(c);
        out << "," << bound(iv.low) << "," << bound(iv.high) << "," << format_double(r.point_settings.at(c));
      }
      out << ",\n";
    } catch (const Error& e) {
      out << ",,,";
      for (std::size_t i = 0; i < cols.size(); ++i) out << ",,,";
      out << "," << csv_escape(e.what()) << "\n";
    }
  }
  return out.str();
}

namespace {

std::atomic<bool> g_interrupted{false};

void on_signal(int) { g_interrupted = true; }

ScenarioSpec scenario_named(const std::string& name, std::uint64_t seed) {
  if (name == "recoverability") return recoverability_scenario(seed);
  if (name == "reference") return reference_scale_scenario(seed);
  throw Error("unknown scenario: " + name);
}

void emit(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
  } else {
    write_file(path, text);
  }
}

std::shared_ptr<const CompiledModel> open_model(const std::string& path) {
  return std::make_shared<const CompiledModel>(load_bundle(path));
}

void add_data_flags(CLI::App* cmd, DataPaths& p) {
  cmd->add_option("--manifest", p.manifest, "parameter manifest JSON")->required();
  cmd->add_option("--data", p.data, "wide observation CSV")->required();
  cmd->add_option("--runs", p.runs, "production runs CSV")->required();
  cmd->add_option("--quality", p.quality, "quality samples CSV")->required();
  cmd->add_option("--quality-config", p.quality_config, "quality bands JSON (default: jam-style bands)");
}

void add_prepare_flags(CLI::App* cmd, PrepareOptions& p, std::string& window_start, std::string& window_end) {
  cmd->add_option("--grid-seconds", p.align.grid_seconds, "alignment grid step")->capture_default_str();
  cmd->add_option("--staleness-steps", p.align.staleness_steps, "zero-order hold horizon in grid steps")
      ->capture_default_str();
  cmd->add_option("--window-start", window_start, "training window start (RFC 3339)");
  cmd->add_option("--window-end", window_end, "training window end (RFC 3339)");
}

void resolve_window(PrepareOptions& p, const std::string& start, const std::string& end) {
  if (start.empty() && end.empty()) return;
  if (start.empty() || end.empty()) throw Error("--window-start and --window-end go together");
  p.window = TrainingWindow{parse_rfc3339(start), parse_rfc3339(end)};
}

void print_warnings(const IngestReport& report) {
  for (const auto& w : report.warnings) std::cerr << "warning: " << w << "\n";
}

}  // namespace

int cli_main(int argc, char** argv) {
  CLI::App app{"machstate: composite sensor-setting states for process quality"};
  app.require_subcommand(1);

  // generate
  std::string scenario = "recoverability";
  std::uint64_t gen_seed = 7;
  std::int64_t gen_runs = 0;
  std::string gen_out;
  auto* generate = app.add_subcommand("generate", "write a synthetic dataset");
  generate->add_option("--scenario", scenario, "recoverability | reference")->capture_default_str();
  generate->add_option("--seed", gen_seed)->capture_default_str();
  generate->add_option("--num-runs", gen_runs, "override the scenario's run count");
  generate->add_option("--out", gen_out, "output directory")->required();

  // train
  TrainOptions train_opts;
  std::string train_ws, train_we, train_bundle_out, train_report;
  auto* train = app.add_subcommand("train", "ingest, fit trees, score states, write a bundle");
  add_data_flags(train, train_opts.paths);
  add_prepare_flags(train, train_opts.prepare, train_ws, train_we);
  train->add_option("--min-leaf-size", train_opts.min_leaf_size)->capture_default_str();
  train->add_option("--bundle", train_bundle_out, "bundle output path")->required();
  train->add_option("--report", train_report, "ingest report JSON output");

  // evaluate
  DataPaths eval_paths;
  PrepareOptions eval_prepare;
  std::string eval_ws, eval_we, eval_out = ".", split_kind = "temporal";
  std::vector<std::int64_t> leaf_sizes{10, 30, 50, 70, 90};
  std::vector<std::string> materials;
  RunSplit split;
  SweepOptions sweep_opts;
  auto* evaluate = app.add_subcommand("evaluate", "minimum-leaf-size sweep on held-out runs");
  add_data_flags(evaluate, eval_paths);
  add_prepare_flags(evaluate, eval_prepare, eval_ws, eval_we);
  evaluate->add_option("--leaf-sizes", leaf_sizes)->delimiter(',')->capture_default_str();
  evaluate->add_option("--materials", materials, "material types (default: all)")->delimiter(',');
  evaluate->add_option("--split", split_kind, "temporal | random")->capture_default_str();
  evaluate->add_option("--train-fraction", split.train_fraction)->capture_default_str();
  evaluate->add_option("--seed", split.seed, "random split seed")->capture_default_str();
  evaluate->add_option("--threshold", sweep_opts.threshold)->capture_default_str();
  evaluate->add_option("--ccdf-step", sweep_opts.ccdf_step)->capture_default_str();
  evaluate->add_option("--out", eval_out, "output directory")->capture_default_str();

  // export-states
  std::string es_bundle, es_space = "status", es_out;
  auto* export_states = app.add_subcommand("export-states", "state table CSV");
  export_states->add_option("--bundle", es_bundle)->required();
  export_states->add_option("--space", es_space, "status | newSettings")->capture_default_str();
  export_states->add_option("--out", es_out, "output path (default: stdout)");

  // dump-tree
  std::string dt_bundle, dt_space = "status";
  auto* dump = app.add_subcommand("dump-tree", "print a fitted tree's rules");
  dump->add_option("--bundle", dt_bundle)->required();
  dump->add_option("--space", dt_space, "status | newSettings")->capture_default_str();

  // predict / recommend
  std::string pr_bundle, pr_data, pr_out;
  double pr_threshold = kDefaultDecisionThreshold;
  auto* predict = app.add_subcommand("predict", "batch prediction over a snapshot CSV");
  predict->add_option("--bundle", pr_bundle)->required();
  predict->add_option("--data", pr_data, "snapshot CSV")->required();
  predict->add_option("--threshold", pr_threshold)->capture_default_str();
  predict->add_option("--out", pr_out, "output path (default: stdout)");
  auto* recommend = app.add_subcommand("recommend", "batch settings recommendation over a snapshot CSV");
  recommend->add_option("--bundle", pr_bundle)->required();
  recommend->add_option("--data", pr_data, "snapshot CSV")->required();
  recommend->add_option("--out", pr_out, "output path (default: stdout)");

  // serve
  std::string sv_bundle;
  ServerOptions sv_opts;
  auto* serve = app.add_subcommand("serve", "start the HTTP / event-stream API");
  serve->add_option("--bundle", sv_bundle)->required();
  serve->add_option("--host", sv_opts.host)->capture_default_str();
  serve->add_option("--port", sv_opts.port)->capture_default_str();
  serve->add_option("--static", sv_opts.static_dir, "console asset directory");
  serve->add_option("--log-dir", sv_opts.log_dir, "session logs are written here on close");

  // simulate
  std::string sm_bundle, sm_config, sm_actions, sm_out, sm_scenario = "recoverability", sm_replay;
  SessionConfig sm;
  std::int64_t sm_ticks = 60;
  std::optional<std::uint64_t> sm_plant_seed;
  auto* simulate = app.add_subcommand("simulate", "headless session, writes the JSON-lines log");
  simulate->add_option("--bundle", sm_bundle)->required();
  simulate->add_option("--config", sm_config, "session config JSON (overrides the flags below)");
  simulate->add_option("--scenario", sm_scenario, "plant: recoverability | reference")->capture_default_str();
  simulate->add_option("--plant-seed", sm_plant_seed, "scenario seed the plant was generated with");
  simulate->add_option("--replay", sm_replay, "snapshot CSV to replay instead of a plant");
  simulate->add_option("--seed", sm.seed)->capture_default_str();
  simulate->add_option("--ticks", sm_ticks)->capture_default_str();
  simulate->add_option("--threshold", sm.threshold)->capture_default_str();
  simulate->add_flag("--recommend-each-tick", sm.recommend_each_tick);
  simulate->add_option("--actions", sm_actions, "JSON action script");
  simulate->add_option("--out", sm_out, "log path (default: stdout)");

  // verify-log
  std::string vl_bundle, vl_log;
  auto* verify = app.add_subcommand("verify-log", "re-score a session log against a bundle");
  verify->add_option("--bundle", vl_bundle)->required();
  verify->add_option("--log", vl_log)->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*generate) {
      auto sc = scenario_named(scenario, gen_seed);
      if (gen_runs > 0) sc.runs = gen_runs;
      auto ds = generate_dataset(sc);
      ds.write(gen_out);
      std::cout << "runs: " << sc.runs << " (target: " << ds.target_runs << ")\n";
    } else if (*train) {
      resolve_window(train_opts.prepare, train_ws, train_we);
      IngestReport report;
      auto bundle = run_train(train_opts, &report);
      save_bundle(bundle, train_bundle_out);
      print_warnings(report);
      if (!train_report.empty()) write_file(train_report, ingest_report_json(report));
      std::cout << "training samples: " << report.training_samples
                << "  status states: " << bundle.status_states.size()
                << "  settings states: " << bundle.settings_states.size()
                << "  composites: " << bundle.composites.size() << "\n";
    } else if (*evaluate) {
      resolve_window(eval_prepare, eval_ws, eval_we);
      if (split_kind == "temporal") {
        split.kind = SplitKind::temporal;
      } else if (split_kind == "random") {
        split.kind = SplitKind::random;
      } else {
        throw Error("unknown split: " + split_kind);
      }
      IngestReport report;
      auto ds = load_labeled(eval_paths, eval_prepare, &report);
      print_warnings(report);
      auto sweep = sweep_min_leaf_size(ds, leaf_sizes, materials, split, sweep_opts);
      std::filesystem::create_directories(eval_out);
      const std::filesystem::path base(eval_out);
      write_file((base / "sweep.json").string(), sweep_report_json(sweep));
      write_file((base / "fig5_accuracy.csv").string(), accuracy_csv(sweep));
      std::vector<std::string> seen;
      for (const auto& c : sweep.cells) {
        if (std::find(seen.begin(), seen.end(), c.material_type) != seen.end()) continue;
        seen.push_back(c.material_type);
        write_file((base / ("ccdf_" + c.material_type + ".csv")).string(), ccdf_csv(sweep, c.material_type));
      }
      std::cout << sweep_summary_table(sweep);
    } else if (*export_states) {
      auto bundle = load_bundle(es_bundle);
      auto space = space_from_string(es_space);
      const auto& states = space == Space::status ? bundle.status_states : bundle.settings_states;
      emit(es_out, export_states_csv(states, space_columns(bundle.manifest, space)));
    } else if (*dump) {
      auto bundle = load_bundle(dt_bundle);
      auto space = space_from_string(dt_space);
      std::cout << dump_tree(space == Space::status ? bundle.status_tree : bundle.settings_tree);
    } else if (*predict) {
      auto model = open_model(pr_bundle);
      auto snaps = parse_snapshot_csv(read_file(pr_data), model->bundle().manifest);
      emit(pr_out, predictions_csv(*model, snaps, pr_threshold));
    } else if (*recommend) {
      auto model = open_model(pr_bundle);
      auto snaps = parse_snapshot_csv(read_file(pr_data), model->bundle().manifest);
      emit(pr_out, recommendations_csv(*model, snaps));
    } else if (*serve) {
      ApiServer server(open_model(sv_bundle), sv_opts);
      int port = server.start();
      std::cerr << "listening on " << sv_opts.host << ":" << port << "\n";
      std::signal(SIGINT, on_signal);
      std::signal(SIGTERM, on_signal);
      while (!g_interrupted) std::this_thread::sleep_for(std::chrono::milliseconds(100));
      server.stop();
    } else if (*simulate) {
      auto model = open_model(sm_bundle);
      SessionConfig config = sm;
      if (!sm_config.empty()) {
        try {
          config = Json::parse(read_file(sm_config)).get<SessionConfig>();
        } catch (const Json::exception& e) {
          throw Error(std::string("malformed session config: ") + e.what());
        }
      } else {
        config.max_ticks = sm_ticks;
        if (!sm_replay.empty()) {
          config.mode = SessionMode::replay;
          config.replay_source = sm_replay;
        } else {
          config.plant =
              scenario_named(sm_scenario, sm_plant_seed.value_or(sm_scenario == "reference" ? 11 : 7)).plant;
        }
      }
      std::vector<ScriptedAction> actions;
      if (!sm_actions.empty()) actions = parse_action_script(read_file(sm_actions));
      emit(sm_out, run_simulation(model, config, actions));
    } else if (*verify) {
      auto model = open_model(vl_bundle);
      auto check = verify_session_log(*model, read_file(vl_log));
      std::cout << "ticks: " << check.ticks << "  mismatches: " << check.mismatches << "\n";
      return check.mismatches == 0 ? 0 : 1;
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

}  // namespace machstate
