#pragma once

// Tree -> decision rules -> hyperrectangle states, and popularity/goodness
// scoring of those states against a training set.

#include <string>
#include <vector>

#include "machstate/core.hpp"
#include "machstate/ingest.hpp"
#include "machstate/kernels.hpp"
#include "machstate/tree.hpp"

namespace machstate {

enum class Op { less_equal, greater };

struct Condition {
  std::string parameter_id;
  Op op = Op::less_equal;
  double value = 0.0;

  bool operator==(const Condition&) const = default;
};

struct DecisionRule {
  std::vector<Condition> conditions;  // root-to-leaf path order
  int leaf_id = -1;

  bool operator==(const DecisionRule&) const = default;
};

struct ScoredStateSet {
  std::vector<State> states;
  Space space = Space::status;
  std::string source_tree_fingerprint;
  std::string target_label;
};

/// One rule per leaf, ordered by leaf id.
std::vector<DecisionRule> extract_rules(const DecisionTree& tree);

std::string state_id(Space space, int leaf_id);

/// Folds each rule into per-parameter intervals over `columns`; parameters
/// without a condition stay (-inf, +inf].
std::vector<State> rules_to_states(const std::vector<DecisionRule>& rules,
                                   const std::vector<std::string>& columns, Space space);

/// Dense boxes of `states` over `columns`.
BoxSet to_boxes(const std::vector<State>& states, const std::vector<std::string>& columns);

/// Popularity = matching rows, goodness = matching target rows / popularity.
/// Throws Error("unmatched sample") if some row matches no state.
ScoredStateSet score_states(std::vector<State> states, const LabeledMatrix& data,
                            const std::vector<std::string>& labels, const std::string& target_label,
                            Space space, Exec exec = Exec::parallel);

/// Same, projecting the training set onto the states' space first.
ScoredStateSet score_states(std::vector<State> states, const TrainingSet& training, Space space,
                            Exec exec = Exec::parallel);

std::string tree_fingerprint(const DecisionTree& tree);

/// CSV with one row per state: id, one "low-high" column per parameter that
/// any state bounds finitely, popularity, goodness.
std::string export_states_csv(const std::vector<State>& states,
                              const std::vector<std::string>& columns);

}  // namespace machstate
