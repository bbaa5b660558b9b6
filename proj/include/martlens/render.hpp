#pragma once

#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

#include "martlens/lime.hpp"

namespace martlens {

// Field order: predicted_value, local_range, contributions,
// surrogate_intercept, surrogate_r2, instance_values, seed, flags.
nlohmann::ordered_json to_json(const lime::Explanation& e);
lime::Explanation explanation_from_json(const nlohmann::ordered_json& j);
std::string explanation_to_json_string(const lime::Explanation& e);

// Three ordered sections "range", "contributions", "values". Numbers are
// fixed-point with 2 decimals; contribution rows keep the explanation's
// order and carry a signed bar (negative to the left of '|').
std::string render_explanation(const lime::Explanation& e);

}  // namespace martlens
