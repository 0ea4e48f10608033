#pragma once

// CART-style binary classification tree over one parameter space.
//
// Splits minimize weighted Gini impurity over midpoints between consecutive
// distinct values. Both children of a split must hold at least min_leaf_size
// samples; there is no depth limit and no pruning. Candidate splits are
// compared in exact integer arithmetic, and equal candidates resolve to the
// smaller column index, then the smaller threshold.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "machstate/core.hpp"

namespace machstate {

/// Row-major sample matrix with one integer class label per row.
struct LabeledMatrix {
  std::vector<std::string> columns;  // parameter ids
  std::vector<double> values;        // rows * columns.size()
  std::vector<int> labels;           // index into the label list
  std::size_t rows = 0;

  std::size_t cols() const { return columns.size(); }
  double at(std::size_t row, std::size_t col) const { return values[row * cols() + col]; }
  std::span<const double> row(std::size_t r) const {
    return {values.data() + r * cols(), cols()};
  }
};

struct TreeNode {
  // Split nodes: column >= 0; leaves: column == -1.
  int column = -1;
  double threshold = 0.0;
  int left = -1;   // value <= threshold
  int right = -1;  // value > threshold
  // Leaves only.
  std::vector<std::int64_t> label_counts;
  int predicted = -1;
  int leaf_id = -1;

  bool is_leaf() const { return column < 0; }
  bool operator==(const TreeNode&) const = default;
};

struct DecisionTree {
  Space space = Space::status;
  std::vector<std::string> columns;
  std::vector<std::string> labels;
  std::int64_t min_leaf_size = 1;
  std::int64_t training_sample_count = 0;
  std::vector<TreeNode> nodes;  // nodes[0] is the root

  std::size_t leaf_count() const;
  std::size_t depth() const;
  bool operator==(const DecisionTree&) const = default;
};

struct SplitCandidate {
  std::size_t column = 0;
  double threshold = 0.0;
  double impurity_decrease = 0.0;
};

double gini(std::span<const std::int64_t> label_counts);

/// Best legal split over the rows listed in `rows` (all rows if empty).
std::optional<SplitCandidate> best_split(const LabeledMatrix& data, std::size_t label_count,
                                         std::int64_t min_leaf_size,
                                         std::span<const std::uint32_t> rows = {},
                                         Exec exec = Exec::serial);

DecisionTree fit_tree(const LabeledMatrix& data, const std::vector<std::string>& labels,
                      Space space, std::int64_t min_leaf_size, Exec exec = Exec::serial);

struct LeafPrediction {
  int leaf_id = -1;
  int node = -1;
  int label = -1;
};

/// Routes `values` (aligned with tree.columns) to its leaf.
LeafPrediction predict_leaf(const DecisionTree& tree, std::span<const double> values);
/// Map-based routing; throws Error("missing parameter: <id>").
LeafPrediction predict_leaf(const DecisionTree& tree, const ValueMap& observation);

/// Indented text rendering of the tree's rules.
std::string dump_tree(const DecisionTree& tree);

}  // namespace machstate
