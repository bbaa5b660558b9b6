#include "martlens/render.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "martlens/error.hpp"

namespace martlens {

using discretize::format_fixed2;

nlohmann::ordered_json to_json(const lime::Explanation& e) {
  nlohmann::ordered_json j;
  j["predicted_value"] = e.predicted_value;
  j["local_range"] = {{"min", e.local_range.min}, {"max", e.local_range.max}};
  auto contributions = nlohmann::ordered_json::array();
  for (const auto& c : e.contributions) {
    nlohmann::ordered_json item;
    item["feature"] = c.feature;
    item["label"] = {{"text", c.label.text},
                     {"feature", c.label.feature},
                     {"bin_index", c.label.bin_index}};
    item["weight"] = c.weight;
    contributions.push_back(std::move(item));
  }
  j["contributions"] = std::move(contributions);
  j["surrogate_intercept"] = e.surrogate_intercept;
  j["surrogate_r2"] = e.surrogate_r2;
  auto values = nlohmann::ordered_json::object();
  for (const auto& [name, v] : e.instance_values) values[name] = v;
  j["instance_values"] = std::move(values);
  j["seed"] = e.seed;
  j["flags"] = {{"degenerate_local", e.degenerate_local},
                {"outside_local_range", e.outside_local_range}};
  return j;
}

std::string explanation_to_json_string(const lime::Explanation& e) {
  return to_json(e).dump();
}

lime::Explanation explanation_from_json(const nlohmann::ordered_json& j) {
  try {
    lime::Explanation e;
    e.predicted_value = j.at("predicted_value").get<double>();
    e.local_range = {j.at("local_range").at("min").get<double>(),
                     j.at("local_range").at("max").get<double>()};
    for (const auto& c : j.at("contributions")) {
      lime::Contribution out;
      out.feature = c.at("feature").get<std::string>();
      out.label.text = c.at("label").at("text").get<std::string>();
      out.label.feature = c.at("label").at("feature").get<std::string>();
      out.label.bin_index = c.at("label").at("bin_index").get<std::size_t>();
      out.weight = c.at("weight").get<double>();
      e.contributions.push_back(std::move(out));
    }
    e.surrogate_intercept = j.at("surrogate_intercept").get<double>();
    e.surrogate_r2 = j.at("surrogate_r2").get<double>();
    for (const auto& [name, v] : j.at("instance_values").items()) {
      e.instance_values.emplace_back(name, v.get<double>());
    }
    e.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("flags")) {
      e.degenerate_local = j.at("flags").value("degenerate_local", false);
      e.outside_local_range = j.at("flags").value("outside_local_range", false);
    }
    return e;
  } catch (const nlohmann::json::exception& ex) {
    throw Error(ErrorKind::kParse, fmt::format("malformed explanation: {}", ex.what()));
  }
}

namespace {

constexpr int kBarHalfWidth = 10;

std::string signed_fixed2(double v) {
  const std::string s = format_fixed2(v);
  return s.front() == '-' ? s : "+" + s;
}

std::string bar(double weight, double max_abs) {
  int len = 0;
  if (max_abs > 0.0) {
    len = static_cast<int>(std::lround(kBarHalfWidth * std::abs(weight) / max_abs));
  }
  std::string left(kBarHalfWidth, ' ');
  std::string right(kBarHalfWidth, ' ');
  if (weight < 0.0) {
    std::fill(left.end() - len, left.end(), '#');
  } else {
    std::fill(right.begin(), right.begin() + len, '#');
  }
  return "[" + left + "|" + right + "]";
}

}  // namespace

std::string render_explanation(const lime::Explanation& e) {
  std::string out;
  out += "range\n";
  out += fmt::format("  min        {}\n", format_fixed2(e.local_range.min));
  out += fmt::format("  predicted  {}\n", format_fixed2(e.predicted_value));
  out += fmt::format("  max        {}\n", format_fixed2(e.local_range.max));
  if (e.outside_local_range) out += "  note: predicted value lies outside the range\n";

  out += "contributions\n";
  std::size_t label_width = 0;
  double max_abs = 0.0;
  for (const auto& c : e.contributions) {
    label_width = std::max(label_width, c.label.text.size());
    max_abs = std::max(max_abs, std::abs(c.weight));
  }
  for (const auto& c : e.contributions) {
    out += fmt::format("  {:<{}}  {:>10}  {}\n", c.label.text, label_width,
                       signed_fixed2(c.weight), bar(c.weight, max_abs));
  }
  if (e.degenerate_local) out += "  note: no local effect\n";

  out += "values\n";
  for (const auto& [name, v] : e.instance_values) {
    out += fmt::format("  {}={}\n", name, format_fixed2(v));
  }
  return out;
}

}  // namespace martlens
