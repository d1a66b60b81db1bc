#pragma once

#include "dyntx/assumptions.hpp"
#include "dyntx/bounds.hpp"
#include "dyntx/inference.hpp"
#include "dyntx/model.hpp"
#include "dyntx/regimes.hpp"
#include "dyntx/simulate.hpp"

#include <json.hpp>

#include <string>

namespace dyntx {

using json = nlohmann::json;

// Thresholds may be numbers or the strings "+inf" / "-inf".
double threshold_from_json(const json& j, const std::string& where);
json threshold_to_json(double v);

StructuralModel model_from_json(const json& j);
json model_to_json(const StructuralModel& m);

// Accepts "101" or {"d": "100", "active": "110"}.
Regime regime_from_json(const json& j);
json regime_to_json(const Regime& r);

// Parse errors name the line and column.
json read_json_file(const std::string& path);
json parse_json_text(const std::string& text, const std::string& origin);
void write_text_file(const std::string& path, const std::string& text);

// 64-bit FNV-1a of the canonical dump, as 16 hex digits.
std::string config_hash(const json& config);

json trace_to_json(const std::vector<TraceNode>& trace);
json arsf_to_json(const ArsfResult& r, bool with_trace);
json bounds_to_json(const BoundsResult& b);
json effect_to_json(const Effect& e);
json ranking_to_json(const RegimeRanking& r);
json report_to_json(const AssumptionReport& r);
json bootstrap_to_json(const BootstrapResult& b);
json objective_to_json(const ObjectiveSpec& o);
ObjectiveSpec objective_from_json(const json& j);

}  // namespace dyntx
