#include "machstate/json.hpp"

#include <algorithm>
#include <functional>

#include "machstate/util.hpp"

namespace machstate {

Json bound_to_json(double bound) {
  if (std::isinf(bound)) return nullptr;
  return bound;
}

double bound_from_json(const Json& j, double infinite_value) {
  if (j.is_null()) return infinite_value;
  return j.get<double>();
}

void to_json(Json& j, const Interval& iv) {
  j = Json{{"low", bound_to_json(iv.low)}, {"high", bound_to_json(iv.high)}};
}

void from_json(const Json& j, Interval& iv) {
  iv.low = bound_from_json(j.at("low"), -kInf);
  iv.high = bound_from_json(j.at("high"), kInf);
}

void to_json(Json& j, const ParameterDef& p) {
  j = Json{{"id", p.id}, {"name", p.name}, {"kind", to_string(p.kind)}, {"units", p.units}};
  if (p.observed_min) j["observedMin"] = *p.observed_min;
  if (p.observed_max) j["observedMax"] = *p.observed_max;
}

void from_json(const Json& j, ParameterDef& p) {
  p.id = j.at("id").get<std::string>();
  p.name = j.value("name", p.id);
  p.kind = kind_from_string(j.at("kind").get<std::string>());
  p.units = j.value("units", std::string{});
  p.observed_min.reset();
  p.observed_max.reset();
  if (j.contains("observedMin") && !j["observedMin"].is_null()) p.observed_min = j["observedMin"].get<double>();
  if (j.contains("observedMax") && !j["observedMax"].is_null()) p.observed_max = j["observedMax"].get<double>();
}

void to_json(Json& j, const QualityConfig& q) {
  Json bands = Json::array();
  for (const auto& b : q.bands) bands.push_back(Json{{"label", b.label}, {"range", b.range}});
  j = Json{{"labels", q.labels},
           {"targetLabel", q.target_label},
           {"bands", bands},
           {"aggregation", to_string(q.aggregation)},
           {"inBandThreshold", q.in_band_threshold}};
}

void from_json(const Json& j, QualityConfig& q) {
  q.labels = j.at("labels").get<std::vector<std::string>>();
  q.target_label = j.at("targetLabel").get<std::string>();
  q.bands.clear();
  for (const auto& b : j.at("bands")) {
    q.bands.push_back({b.at("label").get<std::string>(), b.at("range").get<Interval>()});
  }
  q.aggregation = aggregation_from_string(j.value("aggregation", std::string("mean")));
  q.in_band_threshold = j.value("inBandThreshold", 0.5);
}

void to_json(Json& j, const State& s) {
  Json intervals = Json::object();
  for (const auto& [id, iv] : s.intervals) intervals[id] = iv;
  j = Json{{"id", s.id},
           {"space", to_string(s.space)},
           {"intervals", intervals},
           {"popularity", s.popularity},
           {"goodness", s.goodness}};
}

void from_json(const Json& j, State& s) {
  s.id = j.at("id").get<std::string>();
  s.space = space_from_string(j.at("space").get<std::string>());
  s.intervals.clear();
  for (const auto& [id, iv] : j.at("intervals").items()) s.intervals[id] = iv.get<Interval>();
  s.popularity = j.at("popularity").get<std::int64_t>();
  s.goodness = j.at("goodness").get<double>();
}

void to_json(Json& j, const CompositeState& c) {
  j = Json{{"id", c.id},
           {"statusStateId", c.status_state_id},
           {"settingsStateId", c.settings_state_id},
           {"popularity", c.popularity},
           {"goodness", c.goodness},
           {"matchable", c.matchable()}};
}

void from_json(const Json& j, CompositeState& c) {
  c.id = j.at("id").get<std::string>();
  c.status_state_id = j.at("statusStateId").get<std::string>();
  c.settings_state_id = j.at("settingsStateId").get<std::string>();
  c.popularity = j.at("popularity").get<std::int64_t>();
  c.goodness = j.at("goodness").get<double>();
}

namespace {

Json node_to_json(const DecisionTree& tree, int index) {
  const TreeNode& node = tree.nodes.at(static_cast<std::size_t>(index));
  if (node.is_leaf()) {
    Json counts = Json::object();
    for (std::size_t k = 0; k < tree.labels.size(); ++k) {
      counts[tree.labels[k]] = k < node.label_counts.size() ? node.label_counts[k] : 0;
    }
    return Json{{"leafId", node.leaf_id},
                {"labelCounts", counts},
                {"predictedLabel", tree.labels.at(static_cast<std::size_t>(node.predicted))}};
  }
  return Json{{"parameter", tree.columns.at(static_cast<std::size_t>(node.column))},
              {"threshold", node.threshold},
              {"left", node_to_json(tree, node.left)},
              {"right", node_to_json(tree, node.right)}};
}

int node_from_json(const Json& j, DecisionTree& tree) {
  int index = static_cast<int>(tree.nodes.size());
  tree.nodes.emplace_back();
  if (j.contains("leafId")) {
    TreeNode leaf;
    leaf.leaf_id = j.at("leafId").get<int>();
    leaf.label_counts.assign(tree.labels.size(), 0);
    for (std::size_t k = 0; k < tree.labels.size(); ++k) {
      leaf.label_counts[k] = j.at("labelCounts").value(tree.labels[k], std::int64_t{0});
    }
    auto predicted = j.at("predictedLabel").get<std::string>();
    auto it = std::find(tree.labels.begin(), tree.labels.end(), predicted);
    if (it == tree.labels.end()) throw Error("tree: unknown predicted label " + predicted);
    leaf.predicted = static_cast<int>(it - tree.labels.begin());
    tree.nodes[static_cast<std::size_t>(index)] = std::move(leaf);
    return index;
  }
  auto param = j.at("parameter").get<std::string>();
  auto it = std::find(tree.columns.begin(), tree.columns.end(), param);
  if (it == tree.columns.end()) throw Error("tree: unknown split parameter " + param);
  TreeNode split;
  split.column = static_cast<int>(it - tree.columns.begin());
  split.threshold = j.at("threshold").get<double>();
  int left = node_from_json(j.at("left"), tree);
  int right = node_from_json(j.at("right"), tree);
  split.left = left;
  split.right = right;
  tree.nodes[static_cast<std::size_t>(index)] = split;
  return index;
}

}  // namespace

void to_json(Json& j, const DecisionTree& tree) {
  j = Json{{"space", to_string(tree.space)},
           {"parameters", tree.columns},
           {"labels", tree.labels},
           {"minLeafSize", tree.min_leaf_size},
           {"trainingSampleCount", tree.training_sample_count},
           {"root", tree.nodes.empty() ? Json(nullptr) : node_to_json(tree, 0)}};
}

void from_json(const Json& j, DecisionTree& tree) {
  tree = DecisionTree{};
  tree.space = space_from_string(j.at("space").get<std::string>());
  tree.columns = j.at("parameters").get<std::vector<std::string>>();
  tree.labels = j.at("labels").get<std::vector<std::string>>();
  tree.min_leaf_size = j.at("minLeafSize").get<std::int64_t>();
  tree.training_sample_count = j.at("trainingSampleCount").get<std::int64_t>();
  if (!j.at("root").is_null()) node_from_json(j.at("root"), tree);
}

void to_json(Json& j, const MachineStatus& m) {
  j = Json{{"sensors", m.sensors}, {"settings", m.settings}};
}

void from_json(const Json& j, MachineStatus& m) {
  m.sensors = j.at("sensors").get<ValueMap>();
  m.settings = j.at("settings").get<ValueMap>();
}

void to_json(Json& j, const ProcessSnapshot& a) {
  j = Json{{"sensors", a.status.sensors},
           {"settings", a.status.settings},
           {"newSettings", a.new_settings}};
}

void from_json(const Json& j, ProcessSnapshot& a) {
  a.status.sensors = j.at("sensors").get<ValueMap>();
  a.status.settings = j.at("settings").get<ValueMap>();
  a.new_settings = j.at("newSettings").get<ValueMap>();
}

void to_json(Json& j, const ModelBundle& b) {
  j = Json{{"formatVersion", b.format_version},
           {"manifest", b.manifest},
           {"qualityConfig", b.quality},
           {"trainingWindow",
            Json{{"start", format_rfc3339(b.training_window.start)},
                 {"end", format_rfc3339(b.training_window.end)}}},
           {"minLeafSize", b.min_leaf_size},
           {"statusTree", b.status_tree},
           {"settingsTree", b.settings_tree},
           {"statusStates", b.status_states},
           {"settingsStates", b.settings_states},
           {"composites", b.composites},
           {"datasetFingerprint", b.dataset_fingerprint}};
}

void from_json(const Json& j, ModelBundle& b) {
  b.format_version = j.at("formatVersion").get<int>();
  if (b.format_version != kBundleFormatVersion)
    throw Error("unsupported bundle formatVersion " + std::to_string(b.format_version));
  b.manifest = j.at("manifest").get<Manifest>();
  b.quality = j.at("qualityConfig").get<QualityConfig>();
  b.training_window.start = parse_rfc3339(j.at("trainingWindow").at("start").get<std::string>());
  b.training_window.end = parse_rfc3339(j.at("trainingWindow").at("end").get<std::string>());
  b.min_leaf_size = j.at("minLeafSize").get<std::int64_t>();
  b.status_tree = j.at("statusTree").get<DecisionTree>();
  b.settings_tree = j.at("settingsTree").get<DecisionTree>();
  b.status_states = j.at("statusStates").get<std::vector<State>>();
  b.settings_states = j.at("settingsStates").get<std::vector<State>>();
  b.composites = j.at("composites").get<std::vector<CompositeState>>();
  b.dataset_fingerprint = j.at("datasetFingerprint").get<std::string>();
}

std::string dump_canonical(const Json& j, int indent) { return j.dump(indent) + "\n"; }

}  // namespace machstate
