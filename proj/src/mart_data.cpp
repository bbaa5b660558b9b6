#include "martlens/mart_data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "martlens/error.hpp"
#include "martlens/fileio.hpp"

namespace martlens {

void FeatureSchema::validate() const {
  if (feature_names.size() < 2) {
    throw Error(ErrorKind::kSchema, "schema needs at least 2 features");
  }
  std::set<std::string_view> seen;
  for (const auto& name : feature_names) {
    if (name.empty()) throw Error(ErrorKind::kSchema, "empty feature name");
    if (!seen.insert(name).second) {
      throw Error(ErrorKind::kSchema,
                  fmt::format("duplicate feature name '{}'", name));
    }
  }
  if (target_name.empty()) throw Error(ErrorKind::kSchema, "empty target name");
  if (seen.contains(target_name)) {
    throw Error(ErrorKind::kSchema,
                fmt::format("target '{}' is also a feature", target_name));
  }
}

std::optional<std::size_t> FeatureSchema::index_of(std::string_view name) const {
  for (std::size_t i = 0; i < feature_names.size(); ++i) {
    if (feature_names[i] == name) return i;
  }
  return std::nullopt;
}

Dataset::Dataset(FeatureSchema schema, std::vector<SaleRecord> records)
    : schema_(std::move(schema)), records_(std::move(records)) {
  schema_.validate();
  if (records_.empty()) {
    throw Error(ErrorKind::kInvalidArgument, "dataset has no records");
  }
  const auto wt = schema_.index_of(kWeightFeature);
  for (std::size_t r = 0; r < records_.size(); ++r) {
    const SaleRecord& rec = records_[r];
    if (rec.values.size() != schema_.size()) {
      throw Error(ErrorKind::kSchema,
                  fmt::format("record {} has {} values, schema has {}", r,
                              rec.values.size(), schema_.size()));
    }
    for (std::size_t j = 0; j < rec.values.size(); ++j) {
      if (!std::isfinite(rec.values[j])) {
        throw Error(ErrorKind::kNonFiniteInput,
                    fmt::format("record {} feature '{}' is not finite", r,
                                schema_.feature_names[j]));
      }
    }
    if (wt && !(rec.values[*wt] > 0.0)) {
      throw Error(ErrorKind::kInvalidArgument,
                  fmt::format("record {}: WT must be > 0", r));
    }
    if (!std::isfinite(rec.target) || rec.target < 0.0) {
      throw Error(ErrorKind::kInvalidArgument,
                  fmt::format("record {}: target must be finite and >= 0", r));
    }
  }
}

Matrix Dataset::design() const {
  Matrix x(records_.size(), schema_.size());
  for (std::size_t r = 0; r < records_.size(); ++r) {
    std::copy(records_[r].values.begin(), records_[r].values.end(),
              x.row(r).begin());
  }
  return x;
}

std::vector<double> Dataset::targets() const {
  std::vector<double> y(records_.size());
  for (std::size_t r = 0; r < records_.size(); ++r) y[r] = records_[r].target;
  return y;
}

Dataset Dataset::subset(std::span<const std::size_t> rows) const {
  std::vector<SaleRecord> out;
  out.reserve(rows.size());
  for (std::size_t r : rows) out.push_back(records_.at(r));
  return Dataset(schema_, std::move(out));
}

// ---------------------------------------------------------------------------
// CSV

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() &&
         (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) {
    s.remove_suffix(1);
  }
  return s;
}

std::vector<std::string_view> split_commas(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      out.push_back(trim(line.substr(start)));
      break;
    }
    out.push_back(trim(line.substr(start, comma - start)));
    start = comma + 1;
  }
  return out;
}

std::vector<std::string_view> split_lines(std::string_view text) {
  std::vector<std::string_view> lines;
  std::size_t start = 0;
  while (start < text.size()) {
    std::size_t nl = text.find('\n', start);
    if (nl == std::string_view::npos) nl = text.size();
    lines.push_back(text.substr(start, nl - start));
    start = nl + 1;
  }
  while (!lines.empty() && trim(lines.back()).empty()) lines.pop_back();
  return lines;
}

}  // namespace

std::string format_number(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

CsvTable parse_csv_table(std::string_view text) {
  if (text.size() >= 3 && text.substr(0, 3) == "\xEF\xBB\xBF") {
    text.remove_prefix(3);
  }
  const auto lines = split_lines(text);
  if (lines.empty() || trim(lines[0]).empty()) {
    throw ParseError(0, "", "missing header row");
  }
  CsvTable table;
  for (auto name : split_commas(lines[0])) table.header.emplace_back(name);
  std::set<std::string_view> seen;
  for (const auto& name : table.header) {
    if (name.empty()) throw Error(ErrorKind::kSchema, "empty column name in header");
    if (!seen.insert(name).second) {
      throw Error(ErrorKind::kSchema,
                  fmt::format("duplicate column name '{}'", name));
    }
  }
  const std::size_t cols = table.header.size();
  if (lines.size() < 2) throw ParseError(1, "", "no data rows");
  table.rows = Matrix(lines.size() - 1, cols);
  for (std::size_t r = 1; r < lines.size(); ++r) {
    const auto cells = split_commas(lines[r]);
    if (cells.size() != cols) {
      throw ParseError(r, "",
                       fmt::format("expected {} cells, found {}", cols,
                                   cells.size()));
    }
    for (std::size_t c = 0; c < cols; ++c) {
      const std::string_view cell = cells[c];
      double v = 0.0;
      const auto res = std::from_chars(cell.data(), cell.data() + cell.size(), v);
      if (cell.empty() || res.ec != std::errc() ||
          res.ptr != cell.data() + cell.size()) {
        throw ParseError(r, table.header[c],
                         fmt::format("non-numeric cell '{}'", cell));
      }
      if (!std::isfinite(v)) {
        throw ParseError(r, table.header[c], "non-finite value");
      }
      table.rows(r - 1, c) = v;
    }
  }
  return table;
}

std::string format_csv_table(const CsvTable& table) {
  std::string out;
  for (std::size_t c = 0; c < table.header.size(); ++c) {
    if (c) out += ',';
    out += table.header[c];
  }
  out += '\n';
  for (std::size_t r = 0; r < table.rows.rows(); ++r) {
    for (std::size_t c = 0; c < table.rows.cols(); ++c) {
      if (c) out += ',';
      out += format_number(table.rows(r, c));
    }
    out += '\n';
  }
  return out;
}

namespace {
std::string unit_for(std::string_view column, bool is_target);
}  // namespace

Dataset parse_csv(std::string_view text, std::string_view target_name) {
  const CsvTable table = parse_csv_table(text);
  std::optional<std::size_t> target_col;
  FeatureSchema schema;
  schema.target_name = std::string(target_name);
  for (std::size_t c = 0; c < table.header.size(); ++c) {
    if (table.header[c] == target_name) {
      target_col = c;
    } else {
      schema.feature_names.push_back(table.header[c]);
    }
  }
  if (!target_col) {
    throw Error(ErrorKind::kSchema,
                fmt::format("target column '{}' not found in header",
                            target_name));
  }
  schema.validate();
  for (const auto& name : schema.feature_names) schema.units.emplace(name, unit_for(name, false));
  schema.units.emplace(schema.target_name, unit_for(schema.target_name, true));
  const auto wt = schema.index_of(kWeightFeature);
  std::vector<SaleRecord> records;
  records.reserve(table.rows.rows());
  for (std::size_t r = 0; r < table.rows.rows(); ++r) {
    SaleRecord rec;
    rec.values.reserve(schema.size());
    for (std::size_t c = 0; c < table.header.size(); ++c) {
      if (c == *target_col) {
        rec.target = table.rows(r, c);
      } else {
        rec.values.push_back(table.rows(r, c));
      }
    }
    if (wt && !(rec.values[*wt] > 0.0)) {
      throw ParseError(r + 1, std::string(kWeightFeature), "WT must be > 0");
    }
    if (rec.target < 0.0) {
      throw ParseError(r + 1, schema.target_name, "target must be >= 0");
    }
    records.push_back(std::move(rec));
  }
  return Dataset(std::move(schema), std::move(records));
}

Dataset load_csv(const std::filesystem::path& path,
                 std::string_view target_name) {
  return parse_csv(read_file(path), target_name);
}

std::string to_csv(const Dataset& d) {
  CsvTable table;
  table.header = d.schema().feature_names;
  table.header.push_back(d.schema().target_name);
  table.rows = Matrix(d.size(), table.header.size());
  for (std::size_t r = 0; r < d.size(); ++r) {
    const SaleRecord& rec = d.records()[r];
    for (std::size_t c = 0; c < rec.values.size(); ++c) table.rows(r, c) = rec.values[c];
    table.rows(r, rec.values.size()) = rec.target;
  }
  return format_csv_table(table);
}

void write_csv(const Dataset& d, const std::filesystem::path& path) {
  write_file_atomic(path, to_csv(d));
}

// ---------------------------------------------------------------------------
// Synthetic generator

namespace {

struct FeatureSpec {
  const char* name;
  const char* unit;
  double coefficient;
};

// Schema order. Breed and mart are one-hot with level 0 as the reference
// (no column), so the design is never collinear with the intercept.
constexpr FeatureSpec kSyntheticFeatures[] = {
    {"WT", "kg", 2.10},
    {"PPK", "currency-per-kg", 2.60},
    {"age_months", "months", -1.80},
    {"height_cm", "cm", 0.0},
    {"body_condition", "unitless", 35.0},
    {"lot_size", "unitless", 0.0},
    {"distance_km", "km", -0.35},
    {"days_on_farm", "days", 0.0},
    {"sex_male", "unitless", 60.0},
    {"organic", "unitless", 45.0},
    {"vaccinated", "unitless", 0.0},
    {"sale_month", "month", 0.0},
    {"num_prev_owners", "unitless", 0.0},
    {"dam_age_years", "years", 0.0},
    {"health_score", "unitless", 12.0},
    {"breed_code_1", "unitless", 40.0},
    {"breed_code_2", "unitless", 0.0},
    {"breed_code_3", "unitless", -30.0},
    {"breed_code_4", "unitless", 0.0},
    {"mart_code_1", "unitless", 0.0},
    {"mart_code_2", "unitless", 25.0},
    {"mart_code_3", "unitless", 0.0},
};
constexpr double kSyntheticIntercept = -150.0;
constexpr double kSyntheticNoiseSigma = 40.0;

// CSV carries no units: known mart columns get their catalog unit.
std::string unit_for(std::string_view column, bool is_target) {
  if (is_target) return column == kDefaultTarget ? "currency" : "unitless";
  for (const auto& f : kSyntheticFeatures) {
    if (column == f.name) return f.unit;
  }
  return "unitless";
}

double clamp(double v, double lo, double hi) { return std::min(std::max(v, lo), hi); }

}  // namespace

FeatureSchema synthetic_mart_schema() {
  FeatureSchema schema;
  for (const auto& f : kSyntheticFeatures) {
    schema.feature_names.emplace_back(f.name);
    schema.units.emplace(f.name, f.unit);
  }
  schema.target_name = std::string(kDefaultTarget);
  schema.units.emplace(schema.target_name, "currency");
  return schema;
}

SyntheticMart gen_synthetic_mart(std::size_t n, std::uint64_t seed) {
  if (n == 0) throw Error(ErrorKind::kInvalidArgument, "n must be >= 1");
  FeatureSchema schema = synthetic_mart_schema();
  GeneratorParams params;
  params.seed = seed;
  params.rows = n;
  params.intercept = kSyntheticIntercept;
  params.noise_sigma = kSyntheticNoiseSigma;
  for (const auto& f : kSyntheticFeatures) {
    params.coefficients.emplace_back(f.name, f.coefficient);
  }

  std::mt19937_64 gen(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto uniform_int = [&](int lo, int hi) {
    return static_cast<double>(std::uniform_int_distribution<int>(lo, hi)(gen));
  };
  auto bernoulli = [&](double p) { return unit(gen) < p ? 1.0 : 0.0; };

  std::vector<SaleRecord> records;
  records.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    SaleRecord rec;
    auto& v = rec.values;
    const double wt = clamp(420.0 + 140.0 * normal(gen), 50.0, 1000.0);
    v.push_back(wt);
    // Independent of the target noise, so total_price != PPK * WT.
    v.push_back(clamp(205.0 + 22.0 * normal(gen), 120.0, 320.0));
    v.push_back(clamp(20.0 + 8.0 * normal(gen), 2.0, 120.0));
    v.push_back(90.0 + 0.08 * wt + 6.0 * normal(gen));
    v.push_back(uniform_int(1, 5));
    v.push_back(uniform_int(1, 12));
    v.push_back(5.0 + 245.0 * unit(gen));
    v.push_back(uniform_int(30, 900));
    v.push_back(bernoulli(0.5));
    v.push_back(bernoulli(0.15));
    v.push_back(bernoulli(0.8));
    v.push_back(uniform_int(1, 12));
    v.push_back(uniform_int(0, 4));
    v.push_back(2.0 + 12.0 * unit(gen));
    v.push_back(clamp(7.0 + 1.5 * normal(gen), 0.0, 10.0));
    const int breed = static_cast<int>(uniform_int(0, 4));
    for (int b = 1; b <= 4; ++b) v.push_back(breed == b ? 1.0 : 0.0);
    const int mart = static_cast<int>(uniform_int(0, 3));
    for (int m = 1; m <= 3; ++m) v.push_back(mart == m ? 1.0 : 0.0);

    double target = params.intercept;
    for (std::size_t j = 0; j < v.size(); ++j) {
      target += params.coefficients[j].second * v[j];
    }
    target += params.noise_sigma * normal(gen);
    if (target < 0.0) {
      target = 0.0;
      ++params.clamped_targets;
    }
    rec.target = target;
    records.push_back(std::move(rec));
  }
  return {Dataset(std::move(schema), std::move(records)), std::move(params)};
}

std::string GeneratorParams::to_json() const {
  nlohmann::ordered_json j;
  j["generator"] = "synthetic_mart";
  j["format_version"] = 1;
  j["seed"] = seed;
  j["rows"] = rows;
  j["target_name"] = kDefaultTarget;
  j["intercept"] = intercept;
  j["noise_sigma"] = noise_sigma;
  j["clamped_targets"] = clamped_targets;
  nlohmann::ordered_json coefs = nlohmann::ordered_json::object();
  for (const auto& [name, value] : coefficients) coefs[name] = value;
  j["coefficients"] = std::move(coefs);
  return j.dump(2) + "\n";
}

// ---------------------------------------------------------------------------
// Split

SplitIndices split_indices(std::size_t n, double train_fraction,
                           std::uint64_t seed) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
    throw Error(ErrorKind::kInvalidFraction,
                fmt::format("train fraction {} not in (0, 1)", train_fraction));
  }
  if (n < 2) throw Error(ErrorKind::kInvalidArgument, "split needs >= 2 rows");
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::mt19937_64 gen(seed);
  std::shuffle(idx.begin(), idx.end(), gen);
  auto n_train = static_cast<std::size_t>(std::llround(n * train_fraction));
  n_train = std::clamp<std::size_t>(n_train, 1, n - 1);
  SplitIndices out;
  out.train.assign(idx.begin(), idx.begin() + n_train);
  out.test.assign(idx.begin() + n_train, idx.end());
  return out;
}

std::pair<Dataset, Dataset> split_train_test(const Dataset& d,
                                             double train_fraction,
                                             std::uint64_t seed) {
  const SplitIndices s = split_indices(d.size(), train_fraction, seed);
  return {d.subset(s.train), d.subset(s.test)};
}

// ---------------------------------------------------------------------------
// Standardization

StandardizationStats fit_standardization(const Matrix& x) {
  const std::size_t n = x.rows();
  const std::size_t d = x.cols();
  StandardizationStats s;
  s.means.assign(d, 0.0);
  s.stddevs.assign(d, 1.0);
  s.constant.assign(d, true);
  for (std::size_t j = 0; j < d; ++j) {
    double sum = 0.0;
    double lo = n ? x(0, j) : 0.0;
    double hi = lo;
    for (std::size_t i = 0; i < n; ++i) {
      sum += x(i, j);
      lo = std::min(lo, x(i, j));
      hi = std::max(hi, x(i, j));
    }
    const double mean = n ? sum / static_cast<double>(n) : 0.0;
    s.means[j] = mean;
    if (n < 2 || lo == hi) continue;
    double ss = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double dv = x(i, j) - mean;
      ss += dv * dv;
    }
    s.stddevs[j] = std::sqrt(ss / static_cast<double>(n - 1));
    s.constant[j] = false;
  }
  return s;
}

StandardizationStats fit_standardization(const Dataset& d) {
  return fit_standardization(d.design());
}

std::vector<double> StandardizationStats::apply(
    std::span<const double> values) const {
  if (values.size() != means.size()) {
    throw Error(ErrorKind::kDimensionMismatch, "standardization width mismatch");
  }
  std::vector<double> out(values.size());
  for (std::size_t j = 0; j < values.size(); ++j) {
    out[j] = (values[j] - means[j]) / stddevs[j];
  }
  return out;
}

std::vector<double> StandardizationStats::invert(
    std::span<const double> standardized) const {
  if (standardized.size() != means.size()) {
    throw Error(ErrorKind::kDimensionMismatch, "standardization width mismatch");
  }
  std::vector<double> out(standardized.size());
  for (std::size_t j = 0; j < standardized.size(); ++j) {
    out[j] = standardized[j] * stddevs[j] + means[j];
  }
  return out;
}

std::vector<double> apply_standardization(const StandardizationStats& stats,
                                          std::span<const double> values) {
  return stats.apply(values);
}

}  // namespace martlens
