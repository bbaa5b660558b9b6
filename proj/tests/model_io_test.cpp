#include <gtest/gtest.h>

#include "martlens/error.hpp"
#include "martlens/linreg.hpp"
#include "martlens/mart_data.hpp"
#include "martlens/model_io.hpp"

using namespace martlens;

namespace {

ModelBundle trained_bundle(std::uint64_t seed) {
  const auto mart = gen_synthetic_mart(600, seed);
  ModelBundle b;
  b.dataset_id = "d";
  b.model = linreg::fit(mart.data, 0.0);
  b.discretization = discretize::Discretization::fit(mart.data.design(),
                                                     mart.data.schema().feature_names);
  return b;
}

}  // namespace

TEST(ModelIo, BundleRoundTripIsByteStable) {
  const auto b = trained_bundle(3);
  const std::string s = serialize_bundle(b);
  const auto back = parse_bundle(s);
  EXPECT_EQ(back, b);
  EXPECT_EQ(serialize_bundle(back), s);
  EXPECT_EQ(content_id(s), content_id(serialize_bundle(trained_bundle(3))));
  EXPECT_NE(content_id(s), content_id(serialize_bundle(trained_bundle(4))));
  EXPECT_EQ(content_id(s).size(), 64u);
}

TEST(ModelIo, DocumentFields) {
  const auto j = nlohmann::json::parse(serialize_bundle(trained_bundle(5)));
  const auto& m = j.at("model");
  for (const char* key : {"format_version", "schema", "coefficients", "intercept", "lambda",
                          "stats", "metrics"}) {
    EXPECT_TRUE(m.contains(key)) << key;
  }
  EXPECT_EQ(m.at("format_version"), kModelFormatVersion);
  EXPECT_EQ(m.at("coefficients").size(), 22u);
}

TEST(ModelIo, MalformedDocumentsRejected) {
  EXPECT_THROW(parse_bundle("{"), Error);
  EXPECT_THROW(parse_bundle("{}"), Error);
  auto j = nlohmann::json::parse(serialize_bundle(trained_bundle(6)));
  j["model"]["format_version"] = 99;
  EXPECT_THROW(parse_bundle(j.dump()), Error);
}
