#include "machstate/bundle.hpp"

#include <set>

#include "machstate/json.hpp"
#include "machstate/util.hpp"

namespace machstate {
namespace {

void check_states(const std::vector<State>& states, Space space, const Manifest& manifest,
                  std::set<std::string>& ids, std::vector<std::string>& out) {
  for (const auto& s : states) {
    if (!ids.insert(s.id).second) out.push_back("duplicate state id: " + s.id);
    if (s.space != space) out.push_back("state in wrong space: " + s.id);
    for (const auto& [pid, iv] : s.intervals) {
      const ParameterDef* p = find_parameter(manifest, pid);
      if (p == nullptr) {
        out.push_back("unknown parameter in state " + s.id + ": " + pid);
      } else if (space == Space::new_settings && p->kind != ParamKind::setting) {
        out.push_back("sensor parameter in settings state " + s.id + ": " + pid);
      }
      if (!iv.valid()) out.push_back("invalid interval in state " + s.id + ": " + pid);
    }
    if (s.popularity < 1) out.push_back("unsupported state: " + s.id);
    if (!(s.goodness >= 0.0 && s.goodness <= 1.0))
      out.push_back("goodness out of range: " + s.id + " = " + format_double(s.goodness));
  }
}

void check_tree(const DecisionTree& tree, const char* name, std::vector<std::string>& out) {
  if (tree.nodes.empty()) {
    out.push_back(std::string("empty tree: ") + name);
    return;
  }
  std::int64_t total = 0;
  for (const auto& node : tree.nodes) {
    if (!node.is_leaf()) {
      if (node.column >= static_cast<int>(tree.columns.size()) || node.left < 0 || node.right < 0)
        out.push_back(std::string("malformed split node in ") + name);
      continue;
    }
    std::int64_t n = 0;
    for (auto c : node.label_counts) n += c;
    if (n < tree.min_leaf_size)
      out.push_back(std::string("leaf below min leaf size in ") + name + ": leaf " +
                    std::to_string(node.leaf_id));
    total += n;
  }
  if (total != tree.training_sample_count)
    out.push_back(std::string("leaf totals do not sum to training sample count in ") + name);
}

}  // namespace

std::vector<std::string> validate_bundle(const ModelBundle& b) {
  std::vector<std::string> out;
  if (b.format_version != kBundleFormatVersion) out.push_back("unsupported format version");
  try {
    check_manifest(b.manifest);
  } catch (const Error& e) {
    out.push_back(e.what());
  }
  try {
    b.quality.check();
  } catch (const Error& e) {
    out.push_back(e.what());
  }
  if (b.training_window.start > b.training_window.end) out.push_back("training window start after end");
  if (b.min_leaf_size < 1) out.push_back("min leaf size must be positive");

  check_tree(b.status_tree, "statusTree", out);
  check_tree(b.settings_tree, "settingsTree", out);

  std::set<std::string> status_ids;
  std::set<std::string> settings_ids;
  check_states(b.status_states, Space::status, b.manifest, status_ids, out);
  check_states(b.settings_states, Space::new_settings, b.manifest, settings_ids, out);

  std::set<std::string> composite_ids;
  for (const auto& c : b.composites) {
    if (!composite_ids.insert(c.id).second) out.push_back("duplicate composite id: " + c.id);
    if (!status_ids.count(c.status_state_id))
      out.push_back("dangling state ref: " + c.id + " -> " + c.status_state_id);
    if (!settings_ids.count(c.settings_state_id))
      out.push_back("dangling state ref: " + c.id + " -> " + c.settings_state_id);
    if (c.popularity < 0) out.push_back("negative popularity: " + c.id);
    if (!(c.goodness >= 0.0 && c.goodness <= 1.0))
      out.push_back("goodness out of range: " + c.id + " = " + format_double(c.goodness));
  }
  return out;
}

std::string serialize_bundle(const ModelBundle& bundle) { return dump_canonical(Json(bundle)); }

ModelBundle deserialize_bundle(const std::string& text) {
  Json j;
  try {
    j = Json::parse(text);
    return j.get<ModelBundle>();
  } catch (const Json::exception& e) {
    throw Error(std::string("malformed bundle: ") + e.what());
  }
}

ModelBundle load_bundle(const std::string& path) { return deserialize_bundle(read_file(path)); }

void save_bundle(const ModelBundle& bundle, const std::string& path) {
  write_file(path, serialize_bundle(bundle));
}

}  // namespace machstate
