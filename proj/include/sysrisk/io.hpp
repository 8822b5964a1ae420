#pragma once

#include <string>

#include <nlohmann/json.hpp>

#include "sysrisk/disaster.hpp"
#include "sysrisk/model.hpp"

namespace sysrisk {

/// All files use insertion-ordered keys so identical data serializes to
/// identical bytes. Field names are documented in docs/schemas.md.
using Json = nlohmann::ordered_json;

Json vector_to_json(const VectorXd& v);
VectorXd vector_from_json(const Json& j);
Json matrix_to_json(const MatrixXd& M);  // row-major nested arrays
MatrixXd matrix_from_json(const Json& j);

Json risk_spec_to_json(const RiskMeasureSpec& spec);
RiskMeasureSpec risk_spec_from_json(const Json& j);

Json systemic_spec_to_json(const SystemicMeasureSpec& spec);
SystemicMeasureSpec systemic_spec_from_json(const Json& j);

// schema "two-stage-problem/1"
Json problem_to_json(const TwoStageSystemProblem& problem);
TwoStageSystemProblem problem_from_json(const Json& j);

// schema "disaster-instance/1"
Json instance_to_json(const DisasterInstance& instance);
DisasterInstance instance_from_json(const Json& j);

void save_json(const Json& j, const std::string& path);
Json load_json(const std::string& path);

}  // namespace sysrisk
