#include <doctest.h>

#include "machstate/cli.hpp"
#include "machstate/session.hpp"
#include "support.hpp"

using namespace machstate;

namespace {

PlantSpec one_sensor(double decay, double gain, int lag) {
  PlantSpec p;
  p.sensors = {{"s", decay, 0.0, 0.0, 8.0}};
  p.settings = {{"h", lag, 0.0}};
  if (gain != 0.0) p.gains = {{"s", {{"h", gain}}}};
  p.quality_sensor_id = "s";
  p.quality_band = {0.0, 10.0};
  return p;
}

std::shared_ptr<const CompiledModel> rec_model() {
  static auto m = std::make_shared<const CompiledModel>(testsupport::recoverability().bundle);
  return m;
}

SessionConfig synthetic(std::int64_t ticks, double h1 = 105.0, double h2 = 45.0) {
  SessionConfig c;
  c.mode = SessionMode::synthetic;
  c.plant = recoverability_scenario(7).plant;
  for (auto& h : c.plant->settings) h.initial = h.id == "h1" ? h1 : h2;
  for (auto& s : c.plant->sensors) {
    if (s.id == "q") s.initial = h1;
    if (s.id == "s1") s.initial = h2;
  }
  c.max_ticks = ticks;
  c.seed = 3;
  return c;
}

std::vector<MachineSnapshot> recorded(std::size_t n) {
  const auto& samples = testsupport::recoverability().training.samples;
  std::vector<MachineSnapshot> out;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& s = samples[i];
    out.push_back({s.t, s.snapshot.status.sensors, s.snapshot.status.settings, s.snapshot.new_settings});
  }
  return out;
}

SessionConfig replay_config() {
  SessionConfig c;
  c.mode = SessionMode::replay;
  c.replay_source = "recorded.csv";
  return c;
}

}  // namespace

TEST_CASE("synth_step examples") {
  PlantRng rng(1);
  auto follow = one_sensor(0.0, 1.0, 0);
  CHECK(synth_step(follow, {{"s", 3.0}}, {{"h", 42.0}}, rng).at("s") == 42.0);

  auto decay = one_sensor(0.5, 0.0, 0);
  ValueMap s{{"s", 8.0}};
  s = synth_step(decay, s, {{"h", 0.0}}, rng);
  CHECK(s.at("s") == 4.0);
  s = synth_step(decay, s, {{"h", 0.0}}, rng);
  CHECK(s.at("s") == 2.0);

  auto noisy = recoverability_scenario(7).plant;
  PlantRng a(5), b(5);
  auto x = noisy.initial_sensors(), y = x;
  for (int i = 0; i < 20; ++i) {
    x = synth_step(noisy, x, noisy.initial_settings(), a);
    y = synth_step(noisy, y, noisy.initial_settings(), b);
  }
  CHECK(x == y);
}

TEST_CASE("steady state is the fixed point of the noise-free dynamics") {
  auto p = recoverability_scenario(7).plant;
  for (auto& s : p.sensors) s.noise_sigma = 0.0;
  ValueMap h{{"h1", 103.0}, {"h2", 40.0}};
  PlantRng rng(1);
  auto s = p.initial_sensors();
  for (int i = 0; i < 200; ++i) s = synth_step(p, s, h, rng);
  for (const auto& [id, v] : p.steady_state(h)) CHECK(s.at(id) == doctest::Approx(v));
  CHECK(p.steady_state(h).at("q") == doctest::Approx(103.0));
}

TEST_CASE("quality gates") {
  auto p = recoverability_scenario(7).plant;
  CHECK(p.quality_measurement({{"s1", 45.0}, {"q", 105.0}, {"s2", 0.0}}, {}) == 105.0);
  CHECK(p.quality_measurement({{"s1", 51.0}, {"q", 105.0}, {"s2", 0.0}}, {}) == -895.0);
  auto bad = p;
  bad.sensors[0].decay = 1.0;
  CHECK_THROWS_AS(bad.check(), Error);
}

TEST_CASE("settings history applies each setting after its lag") {
  auto p = one_sensor(0.0, 1.0, 2);
  SettingsHistory h(p);
  h.push(0, {{"h", 1.0}});
  h.push(3, {{"h", 5.0}});
  CHECK(h.effective(1).at("h") == 0.0);
  CHECK(h.effective(2).at("h") == 1.0);
  CHECK(h.effective(4).at("h") == 1.0);
  CHECK(h.effective(5).at("h") == 5.0);
  CHECK_THROWS_AS(h.push(2, {{"h", 0.0}}), Error);
}

TEST_CASE("session config checks") {
  SessionConfig c;
  CHECK_THROWS_AS(c.check(), Error);
  auto ok = synthetic(5);
  CHECK_NOTHROW(ok.check());
  auto both = ok;
  both.replay_source = "x.csv";
  CHECK_THROWS_AS(both.check(), Error);
  auto round = Json(ok).get<SessionConfig>();
  CHECK(Json(round) == Json(ok));
  CHECK_THROWS_WITH_AS(Json::parse(R"({"mode":"dream"})").get<SessionConfig>(), "unknown session mode: dream", Error);
}

TEST_CASE("replay emits one tick per recorded snapshot") {
  auto snaps = recorded(25);
  Session s(replay_config(), rec_model(), snaps);
  std::int64_t n = 0;
  while (auto ev = s.step()) {
    CHECK(ev->tick == n);
    CHECK(ev->snapshot == snaps[static_cast<std::size_t>(n)].process());
    CHECK(Json(ev->prediction) == Json(rec_model()->predict(ev->snapshot)));
    ++n;
  }
  CHECK(n == 25);
  CHECK(s.finished());
  CHECK_FALSE(s.step());
}

TEST_CASE("replay actions are what-if overlays over the recorded data") {
  auto snaps = recorded(6);
  Session s(replay_config(), rec_model(), snaps);
  s.step();
  auto ack = s.apply_settings({{"h1", 130.0}});
  CHECK(ack.hypothetical);
  CHECK(ack.effective_tick == 1);
  auto ev = s.step();
  REQUIRE(ev);
  CHECK(ev->snapshot == snaps[1].process());
  CHECK(ev->whatif_settings.at("h1") == 130.0);
  REQUIRE(ev->whatif);
  ProcessSnapshot alt{snaps[1].status(), snaps[1].new_settings};
  alt.new_settings["h1"] = 130.0;
  CHECK(Json(*ev->whatif) == Json(rec_model()->predict(alt)));
  // the overlay persists
  auto later = s.step();
  CHECK(later->whatif_settings.at("h1") == 130.0);
}

TEST_CASE("synthetic apply latency") {
  Session s(synthetic(12), rec_model());
  for (int i = 0; i < 3; ++i) s.step();
  auto ack = s.apply_settings({{"h2", 60.0}});
  CHECK_FALSE(ack.hypothetical);
  CHECK(ack.effective_tick == 3);

  auto e3 = s.step();
  CHECK(e3->snapshot.new_settings.at("h2") == 60.0);
  CHECK(e3->snapshot.status.settings.at("h2") == 45.0);
  CHECK(e3->pending_settings.at("h2") == 60.0);
  auto e4 = s.step();
  CHECK(e4->snapshot.status.settings.at("h2") == 60.0);
  CHECK(e4->pending_settings.count("h2") == 1);  // lag 1
  auto e5 = s.step();
  CHECK(e5->pending_settings.empty());
  CHECK(e5->snapshot.status.sensors.at("s1") < 46.0);
  // the new setting reaches the sensor one tick after it becomes effective
  auto e6 = s.step();
  CHECK(e6->snapshot.status.sensors.at("s1") > 50.0);
}

TEST_CASE("operator errors and closed sessions") {
  Session s(synthetic(4), rec_model());
  CHECK_THROWS_WITH_AS(s.recommend(), "no ticks yet", Error);
  CHECK_THROWS_WITH_AS(s.apply_settings({{"s1", 1.0}}), "unknown setting: s1", Error);
  CHECK_THROWS_WITH_AS(s.apply_settings({}), "no settings given", Error);
  s.step();
  CHECK_THROWS_WITH_AS(s.whatif({{"nope", 1.0}}), "unknown setting: nope", Error);
  s.close();
  CHECK(s.closed());
  CHECK(s.finished());
  CHECK_FALSE(s.step());
  CHECK_THROWS_WITH_AS(s.apply_settings({{"h1", 1.0}}), "session closed", Error);
  CHECK_THROWS_WITH_AS(s.record_quality_sample(1.0), "session closed", Error);
}

TEST_CASE("running label from operator quality samples") {
  Session s(synthetic(4), rec_model());
  CHECK_FALSE(s.running_label());
  CHECK(s.record_quality_sample(105.0) == std::optional<std::string>("target"));
  CHECK(s.record_quality_sample(50.0) == std::optional<std::string>("low"));
  auto ev = s.step();
  CHECK(ev->running_label == std::optional<std::string>("low"));
  s.close();
  CHECK(s.final_label() == std::optional<std::string>("low"));
}

TEST_CASE("whatif with no changes equals the tick prediction") {
  Session s(synthetic(3), rec_model());
  auto ev = s.step();
  CHECK(Json(s.whatif({})) == Json(ev->prediction));
  auto rec = s.recommend();
  CHECK(rec.composite_id == rec_model()->recommend(ev->snapshot.status).composite_id);
  CHECK(Json(s.whatif(rec.point_settings)) ==
        Json(whatif(*rec_model(), ev->snapshot.status, rec.point_settings)));
}

TEST_CASE("closed loop: following the recommendation reaches the target regime") {
  Session s(synthetic(60, 115.0, 45.0), rec_model());
  auto first = s.step();
  CHECK(first->prediction.verdict != Verdict::target);
  auto rec = s.recommend();
  CHECK(rec.expected_goodness >= 0.5);
  const double h1 = rec.point_settings.at("h1");
  CHECK(h1 > 100.0);
  CHECK(h1 <= 110.0);
  s.apply_settings(rec.point_settings);
  std::optional<TickEvent> last;
  while (auto ev = s.step()) last = ev;
  REQUIRE(last);
  CHECK(last->prediction.verdict == Verdict::target);
  s.close();
  CHECK(s.final_label() == std::optional<std::string>("target"));
}

TEST_CASE("events_since and latest") {
  Session s(synthetic(10), rec_model());
  CHECK_FALSE(s.latest());
  for (int i = 0; i < 6; ++i) s.step();
  CHECK(s.latest()->tick == 5);
  CHECK(s.events_since(4).size() == 2);
  CHECK(s.events_since(-3).size() == 6);
  CHECK(s.events_since(99).empty());
  CHECK(s.tick_count() == 6);
}

TEST_CASE("session logs are deterministic and verifiable") {
  auto actions = parse_action_script(R"([{"tick": 5, "quality": 104.0},
                                         {"tick": 2, "settings": {"h1": 107.0}}])");
  REQUIRE(actions.size() == 2);
  CHECK(actions[0].tick == 2);
  auto cfg = synthetic(30);
  cfg.recommend_each_tick = true;
  auto a = run_simulation(rec_model(), cfg, actions);
  auto b = run_simulation(rec_model(), cfg, actions);
  CHECK(a == b);
  auto check = verify_session_log(*rec_model(), a);
  CHECK(check.ticks == 30);
  CHECK(check.mismatches == 0);

  std::istringstream in(a);
  std::string line;
  std::vector<Json> lines;
  while (std::getline(in, line)) lines.push_back(Json::parse(line));
  CHECK(lines.front().at("type") == "session");
  CHECK(lines.back().at("type") == "close");
  CHECK(lines.back().at("qualitySource") == "operator");

  // tamper with one logged verdict
  std::string tampered;
  bool done = false;
  for (auto& j : lines) {
    if (!done && j.at("type") == "tick") {
      auto& v = j["event"]["prediction"]["verdict"];
      v = v == "target" ? "off-target" : "target";
      done = true;
    }
    tampered += j.dump() + "\n";
  }
  CHECK(verify_session_log(*rec_model(), tampered).mismatches == 1);

  auto other = cfg;
  other.seed = 4;
  CHECK(run_simulation(rec_model(), other, actions) != a);
  auto open_ended = cfg;
  open_ended.max_ticks.reset();
  CHECK_THROWS_WITH_AS(run_simulation(rec_model(), open_ended, {}), "headless synthetic session requires max ticks",
                       Error);
}

TEST_CASE("action script errors") {
  CHECK_THROWS_WITH_AS(parse_action_script("{"), doctest::Contains("malformed action script"), Error);
  CHECK_THROWS_AS(parse_action_script(R"({"tick": 1})"), Error);
  CHECK_THROWS_WITH_AS(parse_action_script(R"([{"tick": 1}])"), doctest::Contains("action script:"), Error);
  CHECK_THROWS_WITH_AS(parse_action_script(R"([{"tick": -1, "quality": 1}])"), doctest::Contains("negative tick"),
                       Error);
}

TEST_CASE("parse_snapshot_csv") {
  auto manifest = testsupport::recoverability().bundle.manifest;
  auto rows = parse_snapshot_csv(
      "timestamp,s1,q,s2,h1,h2\n"
      "2024-01-01T00:00:00Z,45,105,20,105,45\n"
      "2024-01-01T00:00:10Z,45,105,20,108,45\n",
      manifest);
  REQUIRE(rows.size() == 2);
  CHECK(rows[0].new_settings.at("h1") == 108.0);
  CHECK(rows[1].new_settings.at("h1") == 108.0);
  CHECK(rows[1].t - rows[0].t == 10000);

  auto explicit_new = parse_snapshot_csv(
      "timestamp,s1,q,s2,h1,h2,new:h1\n"
      "2024-01-01T00:00:00Z,45,105,20,105,45,101\n",
      manifest);
  CHECK(explicit_new[0].new_settings.at("h1") == 101.0);
  CHECK(explicit_new[0].new_settings.at("h2") == 45.0);

  CHECK_THROWS_WITH_AS(parse_snapshot_csv("t,s1\n", manifest), "snapshots: expected column 'timestamp'", Error);
  CHECK_THROWS_WITH_AS(parse_snapshot_csv("timestamp,zz\n", manifest), "unknown parameter column: zz", Error);
  CHECK_THROWS_AS(parse_snapshot_csv("timestamp,new:s1\n", manifest), Error);

  // a replay over a snapshot lacking a bundle parameter is refused
  auto partial = parse_snapshot_csv("timestamp,s1\n2024-01-01T00:00:00Z,45\n", manifest);
  CHECK_THROWS_WITH_AS(Session(replay_config(), rec_model(), partial), doctest::Contains("bundle/parameter mismatch"),
                       Error);
}

TEST_CASE("prediction and recommendation csv") {
  auto snaps = recorded(8);
  auto pred = predictions_csv(*rec_model(), snaps, 0.5);
  CHECK(pred.rfind("t,likelihood,verdict,composite_id,popularity,matched_count\n", 0) == 0);
  CHECK(std::count(pred.begin(), pred.end(), '\n') == 9);
  CHECK(pred.find(format_rfc3339(snaps[0].t)) != std::string::npos);

  auto rec = recommendations_csv(*rec_model(), snaps);
  CHECK(rec.rfind("t,composite_id,expected_goodness,support,h1_low,h1_high,h1_point,h2_low,h2_high,h2_point,error\n",
                  0) == 0);
  auto lines = parse_csv(rec);
  for (std::size_t i = 1; i < lines.size(); ++i) {
    if (lines[i].size() == 1) continue;
    CHECK(lines[i].size() == 11);
  }
}
