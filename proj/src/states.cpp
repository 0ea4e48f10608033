#include "machstate/states.hpp"

#include <algorithm>
#include <functional>
#include <set>
#include <sstream>

#include "machstate/json.hpp"
#include "machstate/util.hpp"

namespace machstate {

std::vector<DecisionRule> extract_rules(const DecisionTree& tree) {
  std::vector<DecisionRule> rules;
  if (tree.nodes.empty()) return rules;
  std::vector<Condition> path;
  std::function<void(int)> walk = [&](int i) {
    const auto& node = tree.nodes[static_cast<std::size_t>(i)];
    if (node.is_leaf()) {
      rules.push_back({path, node.leaf_id});
      return;
    }
    const auto& id = tree.columns[static_cast<std::size_t>(node.column)];
    path.push_back({id, Op::less_equal, node.threshold});
    walk(node.left);
    path.back().op = Op::greater;
    walk(node.right);
    path.pop_back();
  };
  walk(0);
  std::sort(rules.begin(), rules.end(),
            [](const DecisionRule& a, const DecisionRule& b) { return a.leaf_id < b.leaf_id; });
  return rules;
}

std::string state_id(Space space, int leaf_id) {
  return std::string(space == Space::status ? "u" : "w") + std::to_string(leaf_id);
}

std::vector<State> rules_to_states(const std::vector<DecisionRule>& rules,
                                   const std::vector<std::string>& columns, Space space) {
  std::vector<State> states;
  states.reserve(rules.size());
  for (const auto& rule : rules) {
    State s;
    s.id = state_id(space, rule.leaf_id);
    s.space = space;
    for (const auto& c : columns) s.intervals[c] = Interval::all();
    for (const auto& cond : rule.conditions) {
      auto it = s.intervals.find(cond.parameter_id);
      if (it == s.intervals.end()) throw Error("rule references unknown parameter: " + cond.parameter_id);
      if (cond.op == Op::greater) {
        it->second.low = std::max(it->second.low, cond.value);
      } else {
        it->second.high = std::min(it->second.high, cond.value);
      }
    }
    for (const auto& [id, iv] : s.intervals) {
      if (!(iv.low < iv.high)) throw Error("empty interval in " + s.id + ": " + id);
    }
    states.push_back(std::move(s));
  }
  return states;
}

BoxSet to_boxes(const std::vector<State>& states, const std::vector<std::string>& columns) {
  BoxSet boxes;
  boxes.dims = columns.size();
  std::vector<Interval> row(columns.size());
  for (const auto& s : states) {
    for (std::size_t c = 0; c < columns.size(); ++c) {
      auto it = s.intervals.find(columns[c]);
      row[c] = it == s.intervals.end() ? Interval::all() : it->second;
    }
    boxes.push_back(row);
  }
  return boxes;
}

ScoredStateSet score_states(std::vector<State> states, const LabeledMatrix& data,
                            const std::vector<std::string>& labels, const std::string& target_label,
                            Space space, Exec exec) {
  auto target_it = std::find(labels.begin(), labels.end(), target_label);
  if (target_it == labels.end()) throw Error("target label not in label set: " + target_label);
  const int target = static_cast<int>(target_it - labels.begin());

  BoxSet boxes = to_boxes(states, data.columns);
  auto coverage = kernels::row_coverage(boxes, data, exec);
  for (std::size_t r = 0; r < coverage.size(); ++r) {
    if (coverage[r] == 0) throw Error("unmatched sample: row " + std::to_string(r));
  }
  auto counts = kernels::count_box_matches(boxes, data, target, exec);
  for (std::size_t i = 0; i < states.size(); ++i) {
    states[i].popularity = counts.popularity[i];
    states[i].goodness = counts.popularity[i] > 0
                             ? static_cast<double>(counts.target[i]) /
                                   static_cast<double>(counts.popularity[i])
                             : 0.0;
  }
  return {std::move(states), space, {}, target_label};
}

ScoredStateSet score_states(std::vector<State> states, const TrainingSet& training, Space space,
                            Exec exec) {
  auto data = to_matrix(training, space);
  return score_states(std::move(states), data, training.quality.labels, training.quality.target_label,
                      space, exec);
}

std::string tree_fingerprint(const DecisionTree& tree) {
  return sha256_hex(Json(tree).dump());
}

std::string export_states_csv(const std::vector<State>& states,
                              const std::vector<std::string>& columns) {
  std::vector<std::string> bounded;
  for (const auto& c : columns) {
    bool any = std::any_of(states.begin(), states.end(), [&](const State& s) {
      auto it = s.intervals.find(c);
      return it != s.intervals.end() && !it->second.unbounded();
    });
    if (any) bounded.push_back(c);
  }
  std::ostringstream out;
  out << "state_id";
  for (const auto& c : bounded) out << "," << csv_escape(c);
  out << ",popularity,goodness\n";
  for (const auto& s : states) {
    out << csv_escape(s.id);
    for (const auto& c : bounded) {
      auto it = s.intervals.find(c);
      Interval iv = it == s.intervals.end() ? Interval::all() : it->second;
      out << "," << csv_escape(format_double(iv.low) + "-" + format_double(iv.high));
    }
    out << "," << s.popularity << "," << format_double(s.goodness) << "\n";
  }
  return out.str();
}

}  // namespace machstate
