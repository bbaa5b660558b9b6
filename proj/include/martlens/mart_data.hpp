#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "martlens/matrix.hpp"

namespace martlens {

inline constexpr std::string_view kWeightFeature = "WT";
inline constexpr std::string_view kPricePerKiloFeature = "PPK";
inline constexpr std::string_view kDefaultTarget = "total_price";

struct FeatureSchema {
  std::vector<std::string> feature_names;
  std::string target_name;
  std::map<std::string, std::string> units;

  // Throws Error(kSchema) on empty/duplicate names, a target that doubles as
  // a feature, or fewer than two features.
  void validate() const;
  std::optional<std::size_t> index_of(std::string_view name) const;
  std::size_t size() const { return feature_names.size(); }

  friend bool operator==(const FeatureSchema&, const FeatureSchema&) = default;
};

// One sale. `values` is aligned with FeatureSchema::feature_names.
struct SaleRecord {
  std::vector<double> values;
  double target = 0.0;

  friend bool operator==(const SaleRecord&, const SaleRecord&) = default;
};

class Dataset {
 public:
  // Validates every record against the schema: all values finite, WT > 0
  // when the schema carries WT, target finite and >= 0, at least one record.
  Dataset(FeatureSchema schema, std::vector<SaleRecord> records);

  const FeatureSchema& schema() const { return schema_; }
  const std::vector<SaleRecord>& records() const { return records_; }
  std::size_t size() const { return records_.size(); }

  Matrix design() const;
  std::vector<double> targets() const;
  Dataset subset(std::span<const std::size_t> rows) const;

  friend bool operator==(const Dataset&, const Dataset&) = default;

 private:
  FeatureSchema schema_;
  std::vector<SaleRecord> records_;
};

// Header plus numeric body, before a target column is chosen.
struct CsvTable {
  std::vector<std::string> header;
  Matrix rows;
};

// Dialect: comma separator, '.' decimal point, header mandatory, no quoting.
// Row numbers in ParseError are 1-based data rows; the header is row 0.
CsvTable parse_csv_table(std::string_view text);
std::string format_csv_table(const CsvTable& table);

Dataset parse_csv(std::string_view text, std::string_view target_name);
Dataset load_csv(const std::filesystem::path& path,
                 std::string_view target_name);
// Features in schema order, target last. Numbers use the shortest
// representation that round-trips exactly.
std::string to_csv(const Dataset& d);
void write_csv(const Dataset& d, const std::filesystem::path& path);

std::string format_number(double v);

// Ground truth of the synthetic generator: target = intercept +
// sum(coefficients[f] * f) + N(0, noise_sigma), clamped at 0.
struct GeneratorParams {
  std::uint64_t seed = 0;
  std::size_t rows = 0;
  double intercept = 0.0;
  double noise_sigma = 0.0;
  std::vector<std::pair<std::string, double>> coefficients;  // schema order
  std::size_t clamped_targets = 0;

  std::string to_json() const;
};

struct SyntheticMart {
  Dataset data;
  GeneratorParams params;
};

// 22-feature stand-in for mart sales data. Pure function of (n, seed).
SyntheticMart gen_synthetic_mart(std::size_t n, std::uint64_t seed);
FeatureSchema synthetic_mart_schema();

struct SplitIndices {
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
};

// Seeded shuffle; the train part holds round(n * fraction) rows, clamped
// to [1, n - 1] so both parts are non-empty.
SplitIndices split_indices(std::size_t n, double train_fraction,
                           std::uint64_t seed);
std::pair<Dataset, Dataset> split_train_test(const Dataset& d,
                                             double train_fraction,
                                             std::uint64_t seed);

// Per-column mean and sample (n - 1) standard deviation. Constant columns
// (and every column when n == 1) are flagged and keep scale 1.
struct StandardizationStats {
  std::vector<double> means;
  std::vector<double> stddevs;
  std::vector<bool> constant;

  std::vector<double> apply(std::span<const double> values) const;
  std::vector<double> invert(std::span<const double> standardized) const;

  friend bool operator==(const StandardizationStats&,
                         const StandardizationStats&) = default;
};

StandardizationStats fit_standardization(const Matrix& x);
StandardizationStats fit_standardization(const Dataset& d);
std::vector<double> apply_standardization(const StandardizationStats& stats,
                                          std::span<const double> values);

}  // namespace martlens
