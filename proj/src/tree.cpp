#include "machstate/tree.hpp"

#include <algorithm>
#include <functional>
#include <numeric>
#include <sstream>

#include "machstate/util.hpp"

namespace machstate {
namespace {

using i128 = __int128;

// Weighted child score sum_k L_k^2 / nL + sum_k R_k^2 / nR as num / den.
// Larger is purer; comparisons cross-multiply so ties are exact.
struct Score {
  i128 num = 0;
  i128 den = 1;
};

bool greater(const Score& a, const Score& b) { return a.num * b.den > b.num * a.den; }
bool equal(const Score& a, const Score& b) { return a.num * b.den == b.num * a.den; }

struct ColumnBest {
  bool found = false;
  Score score;
  double threshold = 0.0;
  std::size_t column = 0;
};

ColumnBest scan_column(const LabeledMatrix& data, std::size_t label_count, std::int64_t min_leaf,
                       std::span<const std::uint32_t> rows, std::size_t col,
                       const std::vector<std::int64_t>& parent_counts) {
  ColumnBest best;
  best.column = col;
  const std::size_t n = rows.size();
  std::vector<std::uint32_t> order(rows.begin(), rows.end());
  std::stable_sort(order.begin(), order.end(), [&](std::uint32_t a, std::uint32_t b) {
    return data.at(a, col) < data.at(b, col);
  });

  std::vector<std::int64_t> left(label_count, 0);
  std::vector<std::int64_t> right = parent_counts;
  i128 left_sq = 0;
  i128 right_sq = 0;
  for (auto c : right) right_sq += i128(c) * c;

  for (std::size_t i = 0; i + 1 < n; ++i) {
    auto k = static_cast<std::size_t>(data.labels[order[i]]);
    left_sq += 2 * i128(left[k]) + 1;
    right_sq -= 2 * i128(right[k]) - 1;
    ++left[k];
    --right[k];

    double a = data.at(order[i], col);
    double b = data.at(order[i + 1], col);
    if (!(a < b)) continue;
    auto n_left = static_cast<std::int64_t>(i + 1);
    auto n_right = static_cast<std::int64_t>(n) - n_left;
    if (n_left < min_leaf || n_right < min_leaf) continue;

    Score s{left_sq * n_right + right_sq * n_left, i128(n_left) * n_right};
    if (!best.found || greater(s, best.score)) {
      double mid = std::midpoint(a, b);
      if (!(mid < b)) mid = a;
      best.found = true;
      best.score = s;
      best.threshold = mid;
    }
  }
  return best;
}

bool better(const ColumnBest& a, const ColumnBest& b) {
  if (!a.found) return false;
  if (!b.found) return true;
  if (greater(a.score, b.score)) return true;
  if (equal(a.score, b.score)) {
    if (a.column != b.column) return a.column < b.column;
    return a.threshold < b.threshold;
  }
  return false;
}

std::vector<std::int64_t> count_labels(const LabeledMatrix& data, std::size_t label_count,
                                       std::span<const std::uint32_t> rows) {
  std::vector<std::int64_t> counts(label_count, 0);
  for (auto r : rows) ++counts.at(static_cast<std::size_t>(data.labels[r]));
  return counts;
}

std::optional<SplitCandidate> best_split_rows(const LabeledMatrix& data, std::size_t label_count,
                                              std::int64_t min_leaf_size,
                                              std::span<const std::uint32_t> rows, Exec exec) {
  if (rows.empty()) return std::nullopt;
  auto parent = count_labels(data, label_count, rows);
  const auto cols = static_cast<std::int64_t>(data.cols());
  std::vector<ColumnBest> per_column(data.cols());

  if (exec == Exec::parallel) {
#pragma omp parallel for schedule(dynamic)
    for (std::int64_t c = 0; c < cols; ++c) {
      per_column[static_cast<std::size_t>(c)] =
          scan_column(data, label_count, min_leaf_size, rows, static_cast<std::size_t>(c), parent);
    }
  } else {
    for (std::int64_t c = 0; c < cols; ++c) {
      per_column[static_cast<std::size_t>(c)] =
          scan_column(data, label_count, min_leaf_size, rows, static_cast<std::size_t>(c), parent);
    }
  }

  ColumnBest best;
  for (const auto& cb : per_column) {
    if (better(cb, best)) best = cb;
  }
  if (!best.found) return std::nullopt;

  // Decrease > 0 iff score > sum_k n_k^2 / n.
  const auto n = static_cast<std::int64_t>(rows.size());
  i128 parent_sq = 0;
  for (auto c : parent) parent_sq += i128(c) * c;
  if (!(best.score.num * n > parent_sq * best.score.den)) return std::nullopt;

  double score = static_cast<double>(best.score.num) / static_cast<double>(best.score.den);
  double parent_score = static_cast<double>(parent_sq) / static_cast<double>(n);
  return SplitCandidate{best.column, best.threshold, (score - parent_score) / static_cast<double>(n)};
}

struct Grower {
  const LabeledMatrix& data;
  std::size_t label_count;
  std::int64_t min_leaf;
  Exec exec;
  DecisionTree& tree;
  int next_leaf = 0;

  int grow(std::vector<std::uint32_t> rows) {
    int index = static_cast<int>(tree.nodes.size());
    tree.nodes.emplace_back();
    auto split = best_split_rows(data, label_count, min_leaf, rows, exec);
    if (!split) {
      TreeNode leaf;
      leaf.label_counts = count_labels(data, label_count, rows);
      leaf.predicted = static_cast<int>(
          std::max_element(leaf.label_counts.begin(), leaf.label_counts.end()) -
          leaf.label_counts.begin());
      leaf.leaf_id = next_leaf++;
      tree.nodes[static_cast<std::size_t>(index)] = std::move(leaf);
      return index;
    }
    std::vector<std::uint32_t> left;
    std::vector<std::uint32_t> right;
    for (auto r : rows) {
      (data.at(r, split->column) <= split->threshold ? left : right).push_back(r);
    }
    rows.clear();
    rows.shrink_to_fit();
    TreeNode node;
    node.column = static_cast<int>(split->column);
    node.threshold = split->threshold;
    node.left = grow(std::move(left));
    node.right = grow(std::move(right));
    tree.nodes[static_cast<std::size_t>(index)] = node;
    return index;
  }
};

}  // namespace

std::size_t DecisionTree::leaf_count() const {
  return static_cast<std::size_t>(
      std::count_if(nodes.begin(), nodes.end(), [](const TreeNode& n) { return n.is_leaf(); }));
}

std::size_t DecisionTree::depth() const {
  if (nodes.empty()) return 0;
  std::size_t deepest = 0;
  std::vector<std::pair<int, std::size_t>> stack{{0, 0}};
  while (!stack.empty()) {
    auto [i, d] = stack.back();
    stack.pop_back();
    const auto& node = nodes[static_cast<std::size_t>(i)];
    if (node.is_leaf()) {
      deepest = std::max(deepest, d);
    } else {
      stack.push_back({node.left, d + 1});
      stack.push_back({node.right, d + 1});
    }
  }
  return deepest;
}

double gini(std::span<const std::int64_t> label_counts) {
  std::int64_t n = 0;
  for (auto c : label_counts) n += c;
  if (n <= 0) throw Error("empty node");
  double sum = 0.0;
  for (auto c : label_counts) {
    double p = static_cast<double>(c) / static_cast<double>(n);
    sum += p * p;
  }
  return 1.0 - sum;
}

std::optional<SplitCandidate> best_split(const LabeledMatrix& data, std::size_t label_count,
                                         std::int64_t min_leaf_size,
                                         std::span<const std::uint32_t> rows, Exec exec) {
  if (!rows.empty()) return best_split_rows(data, label_count, min_leaf_size, rows, exec);
  std::vector<std::uint32_t> all(data.rows);
  std::iota(all.begin(), all.end(), 0u);
  return best_split_rows(data, label_count, min_leaf_size, all, exec);
}

DecisionTree fit_tree(const LabeledMatrix& data, const std::vector<std::string>& labels,
                      Space space, std::int64_t min_leaf_size, Exec exec) {
  if (data.rows == 0) throw Error("empty training set");
  if (min_leaf_size < 1) throw Error("min leaf size must be >= 1");
  for (int label : data.labels) {
    if (label < 0 || static_cast<std::size_t>(label) >= labels.size())
      throw Error("label index out of range");
  }
  DecisionTree tree;
  tree.space = space;
  tree.columns = data.columns;
  tree.labels = labels;
  tree.min_leaf_size = min_leaf_size;
  tree.training_sample_count = static_cast<std::int64_t>(data.rows);
  std::vector<std::uint32_t> all(data.rows);
  std::iota(all.begin(), all.end(), 0u);
  Grower grower{data, labels.size(), min_leaf_size, exec, tree};
  grower.grow(std::move(all));
  return tree;
}

LeafPrediction predict_leaf(const DecisionTree& tree, std::span<const double> values) {
  if (tree.nodes.empty()) throw Error("empty tree");
  int i = 0;
  while (!tree.nodes[static_cast<std::size_t>(i)].is_leaf()) {
    const auto& node = tree.nodes[static_cast<std::size_t>(i)];
    double v = values[static_cast<std::size_t>(node.column)];
    if (std::isnan(v)) throw Error("missing parameter: " + tree.columns[static_cast<std::size_t>(node.column)]);
    i = v <= node.threshold ? node.left : node.right;
  }
  const auto& leaf = tree.nodes[static_cast<std::size_t>(i)];
  return {leaf.leaf_id, i, leaf.predicted};
}

LeafPrediction predict_leaf(const DecisionTree& tree, const ValueMap& observation) {
  std::vector<double> values(tree.columns.size(), std::numeric_limits<double>::quiet_NaN());
  for (std::size_t c = 0; c < tree.columns.size(); ++c) {
    auto it = observation.find(tree.columns[c]);
    if (it != observation.end()) values[c] = it->second;
  }
  return predict_leaf(tree, values);
}

std::string dump_tree(const DecisionTree& tree) {
  std::ostringstream out;
  out << to_string(tree.space) << " tree: " << tree.leaf_count() << " leaves, depth " << tree.depth()
      << ", min leaf size " << tree.min_leaf_size << ", " << tree.training_sample_count
      << " samples\n";
  if (tree.nodes.empty()) return out.str();

  auto leaf_line = [&](const TreeNode& leaf) {
    std::ostringstream s;
    s << "leaf " << leaf.leaf_id << " -> " << tree.labels[static_cast<std::size_t>(leaf.predicted)] << " (";
    for (std::size_t k = 0; k < tree.labels.size(); ++k) {
      if (k) s << ", ";
      s << tree.labels[k] << "=" << leaf.label_counts[k];
    }
    s << ")";
    return s.str();
  };

  std::function<void(int, std::size_t)> walk = [&](int i, std::size_t depth) {
    const auto& node = tree.nodes[static_cast<std::size_t>(i)];
    std::string pad(depth * 2, ' ');
    if (node.is_leaf()) {
      out << pad << leaf_line(node) << "\n";
      return;
    }
    const auto& name = tree.columns[static_cast<std::size_t>(node.column)];
    auto thr = format_double(node.threshold);
    out << pad << "if " << name << " <= " << thr << "\n";
    walk(node.left, depth + 1);
    out << pad << "if " << name << " > " << thr << "\n";
    walk(node.right, depth + 1);
  };
  walk(0, 0);
  return out.str();
}

}  // namespace machstate
