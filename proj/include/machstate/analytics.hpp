#pragma once

// Composite sensor-setting states and the real-time prediction /
// settings-recommendation algorithms that run over them.

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "machstate/bundle.hpp"
#include "machstate/core.hpp"
#include "machstate/ingest.hpp"
#include "machstate/kernels.hpp"

namespace machstate {

/// |status| x |settings| composites ordered by (status index, settings index).
/// Popularity counts samples whose status matches u and whose new settings
/// match w; zero-support composites are kept and are unmatchable.
std::vector<CompositeState> build_composites(const std::vector<State>& status_states,
                                             const std::vector<State>& settings_states,
                                             const TrainingSet& training,
                                             Exec exec = Exec::parallel);

enum class Verdict { target, off_target, unknown };
const char* to_string(Verdict v);
Verdict verdict_from_string(const std::string& s);

struct Prediction {
  std::optional<double> likelihood;
  std::optional<std::string> composite_id;
  std::int64_t popularity = 0;
  std::int64_t matched_count = 0;
  Verdict verdict = Verdict::unknown;

  bool operator==(const Prediction&) const = default;
};

struct Recommendation {
  std::string composite_id;
  std::map<std::string, Interval> settings_intervals;
  ValueMap point_settings;
  double expected_goodness = 0.0;
  std::int64_t support = 0;

  bool operator==(const Recommendation&) const = default;
};

inline constexpr double kDefaultDecisionThreshold = 0.5;

/// Read-only matcher compiled from a bundle: dense state boxes plus a
/// (status, settings) -> composite index. Safe for concurrent use.
class CompiledModel {
 public:
  explicit CompiledModel(ModelBundle bundle);

  const ModelBundle& bundle() const { return bundle_; }
  const std::vector<std::string>& status_columns() const { return status_columns_; }
  const std::vector<std::string>& settings_columns() const { return settings_columns_; }
  std::size_t supported_composites() const { return supported_; }

  /// Dense status / new-settings vectors; throws Error("missing parameter")
  /// or Error("non-finite observation") for parameters any state bounds.
  std::vector<double> status_vector(const MachineStatus& status) const;
  std::vector<double> settings_vector(const ValueMap& new_settings) const;

  Prediction predict(std::span<const double> status, std::span<const double> new_settings,
                     double threshold = kDefaultDecisionThreshold) const;
  Prediction predict(const ProcessSnapshot& snapshot,
                     double threshold = kDefaultDecisionThreshold) const;

  /// Throws Error("no matching status state") when no supported composite
  /// has a status component containing `status`.
  Recommendation recommend(std::span<const double> status) const;
  Recommendation recommend(const MachineStatus& status) const;

  /// Batch prediction; the parallel form preserves input order.
  std::vector<Prediction> predict_batch(const std::vector<ProcessSnapshot>& snapshots,
                                        double threshold, Exec exec) const;

 private:
  /// Copy of `values` with unused columns zeroed; throws on a missing used one.
  std::vector<double> checked(std::span<const double> values, const std::vector<std::string>& columns,
                              const std::vector<bool>& used) const;
  std::vector<std::size_t> matching(const BoxSet& boxes, std::span<const double> x) const;
  Prediction make_prediction(std::optional<std::size_t> composite, std::int64_t matched,
                             double threshold) const;

  ModelBundle bundle_;
  std::vector<std::string> status_columns_;
  std::vector<std::string> settings_columns_;
  std::vector<bool> status_used_;
  std::vector<bool> settings_used_;
  BoxSet status_boxes_;
  BoxSet settings_boxes_;
  // CSR: composites whose components are (u, w), keyed u * |W| + w.
  std::vector<std::uint32_t> pair_offsets_;
  std::vector<std::uint32_t> pair_members_;
  // CSR: supported composites keyed by status state u.
  std::vector<std::uint32_t> status_offsets_;
  std::vector<std::uint32_t> status_members_;
  std::vector<std::uint32_t> composite_settings_;  // settings state index per composite
  std::vector<double> settings_min_;
  std::vector<double> settings_max_;
  std::size_t supported_ = 0;
};

/// Predictor ordering: higher popularity, then higher goodness, then smaller id.
bool prediction_precedes(const CompositeState& a, const CompositeState& b);
/// Recommender ordering: higher goodness, then higher popularity, then smaller id.
bool recommendation_precedes(const CompositeState& a, const CompositeState& b);

Prediction predict_quality(const CompiledModel& model, const ProcessSnapshot& snapshot,
                           double threshold = kDefaultDecisionThreshold);
Recommendation recommend_settings(const CompiledModel& model, const MachineStatus& status);

/// Midpoint of `iv` after clamping infinite bounds to [observed_min,
/// observed_max]; always a member of `iv`.
double interval_point(const Interval& iv, double observed_min, double observed_max);

}  // namespace machstate
