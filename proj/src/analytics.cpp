#include "machstate/analytics.hpp"

#include <algorithm>
#include <numeric>

#include "machstate/states.hpp"

namespace machstate {

std::vector<CompositeState> build_composites(const std::vector<State>& status_states,
                                             const std::vector<State>& settings_states,
                                             const TrainingSet& training, Exec exec) {
  auto status = to_matrix(training, Space::status);
  auto settings = to_matrix(training, Space::new_settings);
  auto counts = kernels::count_pair_matches(to_boxes(status_states, status.columns), status,
                                            to_boxes(settings_states, settings.columns), settings,
                                            training.quality.target_index(), exec);
  std::vector<CompositeState> out;
  out.reserve(status_states.size() * settings_states.size());
  std::size_t i = 0;
  for (const auto& u : status_states) {
    for (const auto& w : settings_states) {
      CompositeState c;
      c.id = composite_id(u.id, w.id);
      c.status_state_id = u.id;
      c.settings_state_id = w.id;
      c.popularity = counts.popularity[i];
      c.goodness = c.popularity > 0 ? static_cast<double>(counts.target[i]) /
                                          static_cast<double>(c.popularity)
                                    : 0.0;
      out.push_back(std::move(c));
      ++i;
    }
  }
  return out;
}

const char* to_string(Verdict v) {
  switch (v) {
    case Verdict::target: return "target";
    case Verdict::off_target: return "offTarget";
    case Verdict::unknown: return "unknown";
  }
  return "unknown";
}

Verdict verdict_from_string(const std::string& s) {
  if (s == "target") return Verdict::target;
  if (s == "offTarget") return Verdict::off_target;
  if (s == "unknown") return Verdict::unknown;
  throw Error("unknown verdict: " + s);
}

bool prediction_precedes(const CompositeState& a, const CompositeState& b) {
  if (a.popularity != b.popularity) return a.popularity > b.popularity;
  if (a.goodness != b.goodness) return a.goodness > b.goodness;
  return a.id < b.id;
}

bool recommendation_precedes(const CompositeState& a, const CompositeState& b) {
  if (a.goodness != b.goodness) return a.goodness > b.goodness;
  if (a.popularity != b.popularity) return a.popularity > b.popularity;
  return a.id < b.id;
}

double interval_point(const Interval& iv, double observed_min, double observed_max) {
  const bool low_inf = std::isinf(iv.low);
  const bool high_inf = std::isinf(iv.high);
  double lo = iv.low;
  double hi = iv.high;
  if (low_inf) {
    lo = std::isfinite(observed_min) ? observed_min : (high_inf ? 0.0 : iv.high);
    if (!high_inf) lo = std::min(lo, iv.high);
  }
  if (high_inf) {
    hi = std::isfinite(observed_max) ? observed_max : (low_inf ? lo : iv.low);
    if (!low_inf) hi = std::max(hi, iv.low);
  }
  if (low_inf && high_inf && hi < lo) hi = lo;
  if (!(lo < hi)) {
    if (!high_inf) return iv.high;
    if (low_inf) return lo;
    return iv.low + std::max(1.0, std::abs(iv.low));
  }
  double m = std::midpoint(lo, hi);
  if (!iv.contains(m)) m = high_inf ? hi : iv.high;
  return m;
}

CompiledModel::CompiledModel(ModelBundle bundle) : bundle_(std::move(bundle)) {
  auto violations = validate_bundle(bundle_);
  if (!violations.empty()) throw Error("invalid bundle: " + violations.front());

  status_columns_ = space_columns(bundle_.manifest, Space::status);
  settings_columns_ = space_columns(bundle_.manifest, Space::new_settings);
  status_boxes_ = to_boxes(bundle_.status_states, status_columns_);
  settings_boxes_ = to_boxes(bundle_.settings_states, settings_columns_);

  auto used = [](const BoxSet& boxes) {
    std::vector<bool> out(boxes.dims, false);
    for (std::size_t b = 0; b < boxes.size(); ++b) {
      for (std::size_t c = 0; c < boxes.dims; ++c) {
        if (!boxes.interval(b, c).unbounded()) out[c] = true;
      }
    }
    return out;
  };
  status_used_ = used(status_boxes_);
  settings_used_ = used(settings_boxes_);

  std::map<std::string, std::uint32_t> u_index;
  std::map<std::string, std::uint32_t> w_index;
  for (std::uint32_t i = 0; i < bundle_.status_states.size(); ++i) u_index[bundle_.status_states[i].id] = i;
  for (std::uint32_t i = 0; i < bundle_.settings_states.size(); ++i) w_index[bundle_.settings_states[i].id] = i;

  const std::size_t nu = bundle_.status_states.size();
  const std::size_t nw = bundle_.settings_states.size();
  const auto& comps = bundle_.composites;
  std::vector<std::uint32_t> comp_u(comps.size());
  composite_settings_.resize(comps.size());
  for (std::size_t k = 0; k < comps.size(); ++k) {
    comp_u[k] = u_index.at(comps[k].status_state_id);
    composite_settings_[k] = w_index.at(comps[k].settings_state_id);
  }

  // Counting sort into the two CSR indexes; only supported composites.
  pair_offsets_.assign(nu * nw + 1, 0);
  status_offsets_.assign(nu + 1, 0);
  for (std::size_t k = 0; k < comps.size(); ++k) {
    if (!comps[k].matchable()) continue;
    ++supported_;
    ++pair_offsets_[comp_u[k] * nw + composite_settings_[k] + 1];
    ++status_offsets_[comp_u[k] + 1];
  }
  std::partial_sum(pair_offsets_.begin(), pair_offsets_.end(), pair_offsets_.begin());
  std::partial_sum(status_offsets_.begin(), status_offsets_.end(), status_offsets_.begin());
  pair_members_.resize(supported_);
  status_members_.resize(supported_);
  auto pair_fill = pair_offsets_;
  auto status_fill = status_offsets_;
  for (std::size_t k = 0; k < comps.size(); ++k) {
    if (!comps[k].matchable()) continue;
    auto k32 = static_cast<std::uint32_t>(k);
    pair_members_[pair_fill[comp_u[k] * nw + composite_settings_[k]]++] = k32;
    status_members_[status_fill[comp_u[k]]++] = k32;
  }

  for (const auto& id : settings_columns_) {
    const auto* p = find_parameter(bundle_.manifest, id);
    settings_min_.push_back(p->observed_min.value_or(std::numeric_limits<double>::quiet_NaN()));
    settings_max_.push_back(p->observed_max.value_or(std::numeric_limits<double>::quiet_NaN()));
  }
}

namespace {

std::vector<double> dense(const std::vector<std::string>& columns, const std::vector<bool>& used,
                          const ValueMap& a, const ValueMap* b = nullptr) {
  std::vector<double> out(columns.size(), 0.0);
  for (std::size_t c = 0; c < columns.size(); ++c) {
    auto it = a.find(columns[c]);
    bool found = it != a.end();
    if (!found && b != nullptr) {
      it = b->find(columns[c]);
      found = it != b->end();
    }
    if (!found) {
      if (used[c]) throw Error("missing parameter: " + columns[c]);
      continue;
    }
    if (std::isnan(it->second)) throw Error("non-finite observation: " + columns[c]);
    out[c] = it->second;
  }
  return out;
}

}  // namespace

std::vector<double> CompiledModel::status_vector(const MachineStatus& status) const {
  return dense(status_columns_, status_used_, status.sensors, &status.settings);
}

std::vector<double> CompiledModel::settings_vector(const ValueMap& new_settings) const {
  return dense(settings_columns_, settings_used_, new_settings);
}

std::vector<double> CompiledModel::checked(std::span<const double> values,
                                           const std::vector<std::string>& columns,
                                           const std::vector<bool>& used) const {
  if (values.size() != columns.size()) throw Error("observation dimension mismatch");
  std::vector<double> out(values.begin(), values.end());
  for (std::size_t c = 0; c < out.size(); ++c) {
    if (!std::isnan(out[c])) continue;
    if (used[c]) throw Error("missing parameter: " + columns[c]);
    out[c] = 0.0;
  }
  return out;
}

std::vector<std::size_t> CompiledModel::matching(const BoxSet& boxes, std::span<const double> x) const {
  std::vector<std::size_t> out;
  for (std::size_t b = 0; b < boxes.size(); ++b) {
    if (boxes.contains(b, x)) out.push_back(b);
  }
  return out;
}

Prediction CompiledModel::make_prediction(std::optional<std::size_t> composite, std::int64_t matched,
                                          double threshold) const {
  Prediction p;
  p.matched_count = matched;
  if (!composite) return p;
  const auto& c = bundle_.composites[*composite];
  p.likelihood = c.goodness;
  p.composite_id = c.id;
  p.popularity = c.popularity;
  p.verdict = c.goodness >= threshold ? Verdict::target : Verdict::off_target;
  return p;
}

Prediction CompiledModel::predict(std::span<const double> status, std::span<const double> new_settings,
                                  double threshold) const {
  auto s = checked(status, status_columns_, status_used_);
  auto h = checked(new_settings, settings_columns_, settings_used_);
  const std::size_t nw = bundle_.settings_states.size();
  const auto& comps = bundle_.composites;
  std::optional<std::size_t> best;
  std::int64_t matched = 0;
  auto ws = matching(settings_boxes_, h);
  if (!ws.empty()) {
    for (auto u : matching(status_boxes_, s)) {
      for (auto w : ws) {
        for (auto k = pair_offsets_[u * nw + w]; k < pair_offsets_[u * nw + w + 1]; ++k) {
          auto idx = pair_members_[k];
          ++matched;
          if (!best || prediction_precedes(comps[idx], comps[*best])) best = idx;
        }
      }
    }
  }
  return make_prediction(best, matched, threshold);
}

Prediction CompiledModel::predict(const ProcessSnapshot& snapshot, double threshold) const {
  auto s = status_vector(snapshot.status);
  auto h = settings_vector(snapshot.new_settings);
  return predict(s, h, threshold);
}

Recommendation CompiledModel::recommend(std::span<const double> status) const {
  auto s = checked(status, status_columns_, status_used_);
  const auto& comps = bundle_.composites;
  std::optional<std::size_t> best;
  for (auto u : matching(status_boxes_, s)) {
    for (auto k = status_offsets_[u]; k < status_offsets_[u + 1]; ++k) {
      auto idx = status_members_[k];
      if (!best || recommendation_precedes(comps[idx], comps[*best])) best = idx;
    }
  }
  if (!best) throw Error("no matching status state");

  const auto& c = comps[*best];
  const auto& w = bundle_.settings_states[composite_settings_[*best]];
  Recommendation r;
  r.composite_id = c.id;
  r.expected_goodness = c.goodness;
  r.support = c.popularity;
  for (std::size_t i = 0; i < settings_columns_.size(); ++i) {
    const auto& id = settings_columns_[i];
    auto it = w.intervals.find(id);
    Interval iv = it == w.intervals.end() ? Interval::all() : it->second;
    r.settings_intervals[id] = iv;
    r.point_settings[id] = interval_point(iv, settings_min_[i], settings_max_[i]);
  }
  return r;
}

Recommendation CompiledModel::recommend(const MachineStatus& status) const {
  return recommend(status_vector(status));
}

std::vector<Prediction> CompiledModel::predict_batch(const std::vector<ProcessSnapshot>& snapshots,
                                                     double threshold, Exec exec) const {
  std::vector<Prediction> out(snapshots.size());
  const auto n = static_cast<std::int64_t>(snapshots.size());
  if (exec == Exec::serial) {
    for (std::int64_t i = 0; i < n; ++i) out[static_cast<std::size_t>(i)] = predict(snapshots[static_cast<std::size_t>(i)], threshold);
    return out;
  }
  std::optional<std::string> failure;
#pragma omp parallel for schedule(dynamic, 64)
  for (std::int64_t i = 0; i < n; ++i) {
    try {
      out[static_cast<std::size_t>(i)] = predict(snapshots[static_cast<std::size_t>(i)], threshold);
    } catch (const std::exception& e) {
#pragma omp critical(machstate_batch_error)
      if (!failure) failure = e.what();
    }
  }
  if (failure) throw Error(*failure);
  return out;
}

Prediction predict_quality(const CompiledModel& model, const ProcessSnapshot& snapshot, double threshold) {
  return model.predict(snapshot, threshold);
}

Recommendation recommend_settings(const CompiledModel& model, const MachineStatus& status) {
  return model.recommend(status);
}

}  // namespace machstate
