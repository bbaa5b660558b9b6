#pragma once

#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

#include "martlens/discretize.hpp"
#include "martlens/linreg.hpp"

namespace martlens {

inline constexpr int kModelFormatVersion = 1;

nlohmann::json to_json(const linreg::LinearModel& model);
linreg::LinearModel linear_model_from_json(const nlohmann::json& j);

nlohmann::json to_json(const discretize::Discretization& disc);
discretize::Discretization discretization_from_json(const nlohmann::json& j);

// A trained price model together with the discretization fitted on the
// same training rows. This is the unit persisted by the service and
// written by `martlens train`.
struct ModelBundle {
  std::string dataset_id;
  linreg::LinearModel model;
  discretize::Discretization discretization;

  friend bool operator==(const ModelBundle&, const ModelBundle&) = default;
};

// Sorted keys, shortest round-trip numbers: parse(serialize(b)) serializes
// back to the same bytes.
std::string serialize_bundle(const ModelBundle& bundle);
ModelBundle parse_bundle(std::string_view text);

// Content address: lowercase hex SHA-256 of the serialized bytes.
std::string content_id(std::string_view serialized);

}  // namespace martlens
