#pragma once

// JSON conversions for the domain types. Objects are key-sorted
// (nlohmann::json uses std::map), doubles print as shortest round-trip
// decimals, and infinite interval bounds are written as null.

#include <json.hpp>

#include "machstate/bundle.hpp"
#include "machstate/core.hpp"
#include "machstate/tree.hpp"

namespace machstate {

using Json = nlohmann::json;

Json bound_to_json(double bound);
double bound_from_json(const Json& j, double infinite_value);

void to_json(Json& j, const Interval& iv);
void from_json(const Json& j, Interval& iv);
void to_json(Json& j, const ParameterDef& p);
void from_json(const Json& j, ParameterDef& p);
void to_json(Json& j, const QualityConfig& q);
void from_json(const Json& j, QualityConfig& q);
void to_json(Json& j, const State& s);
void from_json(const Json& j, State& s);
void to_json(Json& j, const CompositeState& c);
void from_json(const Json& j, CompositeState& c);
void to_json(Json& j, const DecisionTree& tree);
void from_json(const Json& j, DecisionTree& tree);
void to_json(Json& j, const MachineStatus& m);
void from_json(const Json& j, MachineStatus& m);
void to_json(Json& j, const ProcessSnapshot& a);
void from_json(const Json& j, ProcessSnapshot& a);
void to_json(Json& j, const ModelBundle& b);
void from_json(const Json& j, ModelBundle& b);

/// Canonical text form used for bundles, reports and session logs.
std::string dump_canonical(const Json& j, int indent = 2);

}  // namespace machstate
