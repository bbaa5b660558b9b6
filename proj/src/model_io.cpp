#include "martlens/model_io.hpp"

#include <fmt/format.h>

#include "martlens/error.hpp"
#include "martlens/hashing.hpp"

namespace martlens {

using nlohmann::json;

json to_json(const linreg::LinearModel& m) {
  json coefs = json::array();
  for (std::size_t j = 0; j < m.size(); ++j) {
    coefs.push_back({{"feature", m.feature_names[j]},
                     {"value", m.coefficients[j]},
                     {"standardized", m.standardized_coefficients[j]},
                     {"dropped", static_cast<bool>(m.dropped[j])}});
  }
  json constant = json::array();
  for (bool c : m.standardization.constant) constant.push_back(c);
  return {
      {"format_version", kModelFormatVersion},
      {"schema", {{"feature_names", m.feature_names}, {"target_name", m.target_name}}},
      {"coefficients", coefs},
      {"intercept", m.intercept},
      {"standardized_intercept", m.standardized_intercept},
      {"standardized", m.standardized},
      {"lambda", m.lambda},
      {"n_train", m.n_train},
      {"stats",
       {{"means", m.standardization.means},
        {"stddevs", m.standardization.stddevs},
        {"constant", constant}}},
      {"metrics",
       {{"rmse", m.train_metrics.rmse},
        {"mae", m.train_metrics.mae},
        {"r2", m.train_metrics.r2}}},
      {"prediction_range",
       {{"min", m.prediction_range.min}, {"max", m.prediction_range.max}}},
  };
}

linreg::LinearModel linear_model_from_json(const json& j) {
  try {
    if (j.at("format_version").get<int>() != kModelFormatVersion) {
      throw Error(ErrorKind::kParse, "unsupported model format_version");
    }
    linreg::LinearModel m;
    m.feature_names = j.at("schema").at("feature_names").get<std::vector<std::string>>();
    m.target_name = j.at("schema").at("target_name").get<std::string>();
    for (const auto& c : j.at("coefficients")) {
      m.coefficients.push_back(c.at("value").get<double>());
      m.standardized_coefficients.push_back(c.at("standardized").get<double>());
      m.dropped.push_back(c.at("dropped").get<bool>());
    }
    m.intercept = j.at("intercept").get<double>();
    m.standardized_intercept = j.at("standardized_intercept").get<double>();
    m.standardized = j.at("standardized").get<bool>();
    m.lambda = j.at("lambda").get<double>();
    m.n_train = j.at("n_train").get<std::size_t>();
    const json& s = j.at("stats");
    m.standardization.means = s.at("means").get<std::vector<double>>();
    m.standardization.stddevs = s.at("stddevs").get<std::vector<double>>();
    for (const auto& c : s.at("constant")) m.standardization.constant.push_back(c.get<bool>());
    const json& mt = j.at("metrics");
    m.train_metrics = {mt.at("rmse").get<double>(), mt.at("mae").get<double>(),
                       mt.at("r2").get<double>()};
    const json& pr = j.at("prediction_range");
    m.prediction_range = {pr.at("min").get<double>(), pr.at("max").get<double>()};
    const std::size_t d = m.feature_names.size();
    if (m.coefficients.size() != d || m.standardization.means.size() != d ||
        m.standardization.stddevs.size() != d ||
        m.standardization.constant.size() != d) {
      throw Error(ErrorKind::kParse, "model arrays disagree with schema width");
    }
    return m;
  } catch (const json::exception& e) {
    throw Error(ErrorKind::kParse, fmt::format("malformed model JSON: {}", e.what()));
  }
}

json to_json(const discretize::Discretization& disc) {
  json features = json::array();
  for (const auto& f : disc.features()) {
    features.push_back({{"feature", f.feature},
                        {"edges", f.edges},
                        {"frequencies", f.frequencies},
                        {"bin_min", f.bin_min},
                        {"bin_max", f.bin_max}});
  }
  return {{"features", features}};
}

discretize::Discretization discretization_from_json(const json& j) {
  try {
    std::vector<discretize::FeatureBins> out;
    for (const auto& f : j.at("features")) {
      discretize::FeatureBins fb;
      fb.feature = f.at("feature").get<std::string>();
      fb.edges = f.at("edges").get<std::vector<double>>();
      fb.frequencies = f.at("frequencies").get<std::vector<std::size_t>>();
      fb.bin_min = f.at("bin_min").get<std::vector<double>>();
      fb.bin_max = f.at("bin_max").get<std::vector<double>>();
      out.push_back(std::move(fb));
    }
    return discretize::Discretization(std::move(out));
  } catch (const json::exception& e) {
    throw Error(ErrorKind::kParse,
                fmt::format("malformed discretization JSON: {}", e.what()));
  }
}

std::string serialize_bundle(const ModelBundle& bundle) {
  const json j = {{"format_version", kModelFormatVersion},
                  {"dataset_id", bundle.dataset_id},
                  {"model", to_json(bundle.model)},
                  {"discretization", to_json(bundle.discretization)}};
  return j.dump(2) + "\n";
}

ModelBundle parse_bundle(std::string_view text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::kParse, fmt::format("model file is not JSON: {}", e.what()));
  }
  ModelBundle b;
  try {
    b.dataset_id = j.at("dataset_id").get<std::string>();
    b.model = linear_model_from_json(j.at("model"));
    b.discretization = discretization_from_json(j.at("discretization"));
  } catch (const json::exception& e) {
    throw Error(ErrorKind::kParse, fmt::format("malformed model bundle: {}", e.what()));
  }
  if (b.discretization.size() != b.model.size()) {
    throw Error(ErrorKind::kParse, "discretization width disagrees with model");
  }
  return b;
}

std::string content_id(std::string_view serialized) { return sha256_hex(serialized); }

}  // namespace martlens
