#include <doctest.h>

#include <random>

#include "machstate/states.hpp"
#include "support.hpp"

using namespace machstate;
using testsupport::oracle_predict;
using testsupport::oracle_recommend;
using testsupport::random_probe;
using testsupport::with_overlaps_and_ties;

namespace {

// Sensors Temperature 2 / Density, settings Pressure 1 / Production solids.
ModelBundle plant_base() {
  TrainingSet ts;
  ts.manifest = {{"T2", "Temperature 2", ParamKind::sensor, "C", 10.0, 90.0},
                 {"D", "Density", ParamKind::sensor, "g/ml", 1.0, 2.0},
                 {"P1", "Pressure 1", ParamKind::setting, "kPa", 90.0, 120.0},
                 {"PS", "Production solids", ParamKind::setting, "%", 38.0, 45.0}};
  ts.quality = testsupport::labels_config(2);
  for (int i = 0; i < 4; ++i) {
    TrainingSample s;
    s.t = i;
    s.batch_id = "b" + std::to_string(i);
    s.label = i % 2 ? "target" : "off";
    s.snapshot.status = {{{"T2", 20.0 + i}, {"D", 1.3}}, {{"P1", 100.0}, {"PS", 41.0}}};
    s.snapshot.new_settings = {{"P1", 100.0 + i}, {"PS", 41.0}};
    ts.run_labels[s.batch_id] = s.label;
    ts.samples.push_back(s);
  }
  ts.window = {0, 3};
  return train_bundle(ts, 1);
}

State status_state(const std::string& id, Interval t2, Interval d) {
  return {id, Space::status, {{"T2", t2}, {"D", d}, {"P1", Interval::all()}, {"PS", Interval::all()}}, 1, 0.0};
}

State settings_state(const std::string& id, Interval p1, Interval ps) {
  return {id, Space::new_settings, {{"P1", p1}, {"PS", ps}}, 1, 0.0};
}

CompositeState comp(const std::string& u, const std::string& w, std::int64_t pop, double g) {
  return {composite_id(u, w), u, w, pop, g};
}

ModelBundle plant_bundle() {
  auto b = plant_base();
  b.status_states = {status_state("u0", {19.1, 66.5}, {1.225, 1.53}), status_state("u1", {66.5, kInf}, Interval::all())};
  b.settings_states = {settings_state("w0", {104.5, 112.5}, {40.81, 43.0}),
                       settings_state("w1", {95.06, 104.5}, Interval::all())};
  b.composites = {comp("u0", "w0", 40, 0.9), comp("u0", "w1", 60, 0.2), comp("u1", "w0", 0, 0.0),
                  comp("u1", "w1", 5, 0.0)};
  return b;
}

ProcessSnapshot snapshot(double t2, double d, double p1, double ps) {
  return {{{{"T2", t2}, {"D", d}}, {{"P1", 100.0}, {"PS", 41.0}}}, {{"P1", p1}, {"PS", ps}}};
}

}  // namespace

TEST_CASE("build_composites examples") {
  std::mt19937_64 gen(5);
  auto ts = testsupport::random_training_set(gen, {2, 2, 2, 300});
  auto b = train_bundle(ts, 3);
  CHECK(b.composites.size() == b.status_states.size() * b.settings_states.size());
  std::int64_t total = 0;
  for (const auto& c : b.composites) {
    auto o = testsupport::brute_score(c, testsupport::state_by_id(b.status_states, c.status_state_id),
                                      testsupport::state_by_id(b.settings_states, c.settings_state_id), ts);
    CHECK(c.popularity == o.popularity);
    CHECK(c.goodness == o.goodness);
    CHECK(c.matchable() == (c.popularity > 0));
    total += c.popularity;
  }
  CHECK(total == static_cast<std::int64_t>(ts.samples.size()));

  // a status box and a settings box with no sample in common
  auto u = b.status_states;
  auto w = b.settings_states;
  u.push_back({"u99", Space::status, {{"s0", {1000.0, 2000.0}}}, 1, 0.0});
  auto more = build_composites(u, w, ts);
  CHECK(more.size() == u.size() * w.size());
  for (const auto& c : more)
    if (c.status_state_id == "u99") CHECK_FALSE(c.matchable());

  CHECK(build_composites(std::vector<State>(4, u[0]), std::vector<State>(3, w[0]), ts).size() == 12);
}

TEST_CASE("prediction examples") {
  CompiledModel m(plant_bundle());
  auto p = m.predict(snapshot(40.0, 1.3, 108.0, 42.0));
  CHECK(p.composite_id == "u0+w0");
  CHECK(p.likelihood == 0.9);
  CHECK(p.verdict == Verdict::target);
  CHECK(p.popularity == 40);
  CHECK(p.matched_count == 1);

  auto low = m.predict(snapshot(40.0, 1.3, 100.0, 42.0));
  CHECK(low.composite_id == "u0+w1");
  CHECK(low.verdict == Verdict::off_target);

  // (u1, w0) has zero support
  auto none = m.predict(snapshot(70.0, 1.3, 108.0, 42.0));
  CHECK(none.verdict == Verdict::unknown);
  CHECK_FALSE(none.likelihood.has_value());
  CHECK(none.matched_count == 0);

  CHECK_THROWS_WITH_AS(m.predict(ProcessSnapshot{{{{"D", 1.3}}, {}}, {{"P1", 108.0}, {"PS", 42.0}}}),
                       "missing parameter: T2", Error);
}

TEST_CASE("prediction picks the most popular of several matches") {
  auto b = plant_bundle();
  b.status_states.push_back(status_state("u2", {0.0, 100.0}, Interval::all()));
  b.composites = {comp("u0", "w0", 30, 0.8), comp("u2", "w0", 10, 0.2)};
  CompiledModel m(b);
  auto p = m.predict(snapshot(40.0, 1.3, 108.0, 42.0));
  CHECK(p.composite_id == "u0+w0");
  CHECK(p.likelihood == 0.8);
  CHECK(p.matched_count == 2);
}

TEST_CASE("recommendation follows goodness, not popularity") {
  auto b = plant_bundle();
  CompiledModel m(b);
  MachineStatus status{{{"T2", 40.0}, {"D", 1.3}}, {{"P1", 100.0}, {"PS", 41.0}}};
  auto r = m.recommend(status);
  CHECK(r.composite_id == "u0+w0");
  CHECK(r.settings_intervals.at("P1") == Interval{104.5, 112.5});
  CHECK(r.settings_intervals.at("PS") == Interval{40.81, 43.0});
  CHECK(r.expected_goodness == 0.9);
  CHECK(r.support == 40);
  CHECK(r.point_settings.at("P1") == 108.5);
  for (const auto& [k, v] : r.point_settings) CHECK(r.settings_intervals.at(k).contains(v));

  MachineStatus outside{{{"T2", 5.0}, {"D", 1.3}}, {{"P1", 100.0}, {"PS", 41.0}}};
  CHECK_THROWS_WITH_AS(m.recommend(outside), "no matching status state", Error);

  b.composites = {comp("u0", "w1", 3, 0.1)};
  CompiledModel single(b);
  CHECK(single.recommend(status).composite_id == "u0+w1");
}

TEST_CASE("interval_point stays inside the interval") {
  CHECK(interval_point({-kInf, 5.0}, 0.0, 10.0) == 2.5);
  CHECK(interval_point({5.0, kInf}, 0.0, 10.0) == 7.5);
  CHECK(interval_point(Interval::all(), 0.0, 10.0) == 5.0);
  std::mt19937_64 gen(6);
  std::uniform_real_distribution<double> u(-100.0, 100.0);
  for (int i = 0; i < 5000; ++i) {
    double a = u(gen), b = u(gen), lo = u(gen), hi = u(gen);
    Interval iv{std::min(a, b), std::max(a, b)};
    if (gen() % 3 == 0) iv.low = -kInf;
    if (gen() % 3 == 0) iv.high = kInf;
    if (!iv.valid()) continue;
    double obs_lo = gen() % 7 == 0 ? std::nan("") : std::min(lo, hi);
    double obs_hi = gen() % 7 == 0 ? std::nan("") : std::max(lo, hi);
    CHECK(iv.contains(interval_point(iv, obs_lo, obs_hi)));
  }
}

TEST_CASE("argmax agrees with the linear-scan oracle") {
  std::mt19937_64 gen(31337);
  int pairs = 0, ties_seen = 0;
  for (int trial = 0; trial < 60; ++trial) {
    auto ts = testsupport::random_training_set(gen, testsupport::random_shape(gen));
    auto trained = train_bundle(ts, 1 + static_cast<std::int64_t>(gen() % 8));
    auto b = trial % 2 ? with_overlaps_and_ties(trained, gen) : trained;
    CompiledModel m(b);
    for (int k = 0; k < 25; ++k, ++pairs) {
      auto a = random_probe(ts, gen);
      auto p = m.predict(a);
      CHECK(p.composite_id.value_or("") == oracle_predict(b, a));
      auto expect = oracle_recommend(b, a.status);
      if (expect.empty()) {
        CHECK_THROWS_AS(m.recommend(a.status), Error);
      } else {
        CHECK(m.recommend(a.status).composite_id == expect);
      }
      if (p.matched_count > 1) ++ties_seen;
    }
  }
  CHECK(pairs >= 1000);
  CHECK(ties_seen > 0);
}

TEST_CASE("composite order does not change the chosen composite") {
  std::mt19937_64 gen(8);
  for (int trial = 0; trial < 20; ++trial) {
    auto ts = testsupport::random_training_set(gen, testsupport::random_shape(gen));
    auto b = with_overlaps_and_ties(train_bundle(ts, 2), gen);
    auto shuffled = b;
    std::shuffle(shuffled.composites.begin(), shuffled.composites.end(), gen);
    std::shuffle(shuffled.status_states.begin(), shuffled.status_states.end(), gen);
    CompiledModel m1(b), m2(shuffled);
    for (int k = 0; k < 20; ++k) {
      auto a = random_probe(ts, gen);
      CHECK(m1.predict(a) == m2.predict(a));
      try {
        CHECK(m1.recommend(a.status).composite_id == m2.recommend(a.status).composite_id);
      } catch (const Error&) {
        CHECK_THROWS_AS(m2.recommend(a.status), Error);
      }
    }
  }
}

TEST_CASE("recommended point settings reproduce the recommended goodness") {
  std::mt19937_64 gen(99);
  for (int trial = 0; trial < 30; ++trial) {
    auto ts = testsupport::random_training_set(gen, testsupport::random_shape(gen));
    CompiledModel m(train_bundle(ts, 1 + static_cast<std::int64_t>(gen() % 10)));
    for (int k = 0; k < 10; ++k) {
      const auto& status = ts.samples[gen() % ts.samples.size()].snapshot.status;
      auto r = m.recommend(status);
      REQUIRE(r.support > 0);
      for (const auto& [id, v] : r.point_settings) CHECK(r.settings_intervals.at(id).contains(v));
      auto p = m.predict(ProcessSnapshot{status, r.point_settings});
      CHECK(p.composite_id == r.composite_id);
      CHECK(p.likelihood == r.expected_goodness);
    }
  }
}

TEST_CASE("batch prediction: serial and OpenMP agree and keep order") {
  const auto& rec = testsupport::recoverability();
  CompiledModel m(rec.bundle);
  std::vector<ProcessSnapshot> batch;
  for (const auto& s : rec.training.samples) batch.push_back(s.snapshot);
  auto serial = m.predict_batch(batch, 0.5, Exec::serial);
  auto parallel = m.predict_batch(batch, 0.5, Exec::parallel);
  CHECK(serial == parallel);
  for (std::size_t i = 0; i < batch.size(); i += 97) CHECK(serial[i] == m.predict(batch[i]));
}

TEST_CASE("threshold sets the verdict") {
  CompiledModel m(plant_bundle());
  auto a = snapshot(40.0, 1.3, 108.0, 42.0);
  CHECK(m.predict(a, 0.9).verdict == Verdict::target);
  CHECK(m.predict(a, 0.95).verdict == Verdict::off_target);
  CHECK(std::string(to_string(Verdict::off_target)) == "offTarget");
  CHECK(verdict_from_string("unknown") == Verdict::unknown);
}
