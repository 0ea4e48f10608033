#pragma once

// Data-parallel inner loops. Every kernel has a serial reference form that
// follows the counting definition literally and an OpenMP form that must
// produce identical integers; tests compare the two.

#include <cstdint>
#include <span>
#include <vector>

#include "machstate/core.hpp"
#include "machstate/tree.hpp"

namespace machstate {

/// Hyperrectangles over a fixed column layout, stored flat: box b, column c
/// at index b * dims + c.
struct BoxSet {
  std::size_t dims = 0;
  std::size_t count = 0;
  std::vector<double> low;
  std::vector<double> high;

  std::size_t size() const { return count; }
  void push_back(std::span<const Interval> intervals);
  bool contains(std::size_t box, std::span<const double> x) const;
  Interval interval(std::size_t box, std::size_t col) const {
    return {low[box * dims + col], high[box * dims + col]};
  }
};

struct MatchCounts {
  std::vector<std::int64_t> popularity;
  std::vector<std::int64_t> target;

  bool operator==(const MatchCounts&) const = default;
};

namespace kernels {

/// Per box: rows matched, and rows matched whose label == target_label.
MatchCounts count_box_matches(const BoxSet& boxes, const LabeledMatrix& data, int target_label,
                              Exec exec);

/// Per row: number of boxes containing it.
std::vector<std::int32_t> row_coverage(const BoxSet& boxes, const LabeledMatrix& data, Exec exec);

/// Pair counts indexed u * |W| + w over rows matching status box u AND
/// settings box w. Rows of `status` and `settings` describe the same samples.
/// The serial form loops pairs x rows; the parallel form loops rows and
/// accumulates per-thread tables.
MatchCounts count_pair_matches(const BoxSet& status_boxes, const LabeledMatrix& status,
                               const BoxSet& settings_boxes, const LabeledMatrix& settings,
                               int target_label, Exec exec);

}  // namespace kernels
}  // namespace machstate
