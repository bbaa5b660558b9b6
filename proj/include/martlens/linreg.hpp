#pragma once

#include <cstddef>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "martlens/mart_data.hpp"
#include "martlens/matrix.hpp"

namespace martlens::linreg {

struct RegressionMetrics {
  double rmse = 0.0;
  double mae = 0.0;
  double r2 = 0.0;

  friend bool operator==(const RegressionMetrics&,
                         const RegressionMetrics&) = default;
};

struct PredictionRange {
  double min = 0.0;
  double max = 0.0;

  friend bool operator==(const PredictionRange&, const PredictionRange&) = default;
};

struct FitOptions {
  double lambda = 0.0;
  // Standardize columns before solving. The ridge penalty then applies to
  // the standardized coefficients.
  bool standardize = true;
  std::vector<std::string> feature_names;  // empty: x0, x1, ...
  std::string target_name = "target";
};

// A trained multivariate linear model. Treat as immutable; share by const
// reference or shared_ptr<const LinearModel>.
struct LinearModel {
  std::vector<std::string> feature_names;
  std::string target_name;
  // Original units: y = intercept + sum coefficients[j] * x_j.
  std::vector<double> coefficients;
  double intercept = 0.0;
  // Standardized units: y = standardized_intercept
  //   + sum standardized_coefficients[j] * (x_j - mean_j) / stddev_j.
  std::vector<double> standardized_coefficients;
  double standardized_intercept = 0.0;
  // Constant columns are dropped from the solve and carry coefficient 0.
  std::vector<bool> dropped;
  bool standardized = true;
  StandardizationStats standardization;
  double lambda = 0.0;
  std::size_t n_train = 0;
  RegressionMetrics train_metrics;
  // Min/max of the model's own predictions over its training rows.
  PredictionRange prediction_range;

  std::size_t size() const { return feature_names.size(); }

  double predict(std::span<const double> values) const;
  std::vector<double> predict_batch(const Matrix& x) const;

  // Orders a name->value map by feature_names. Throws SchemaMismatch naming
  // missing and unexpected keys.
  std::vector<double> align(const std::map<std::string, double>& instance) const;

  friend bool operator==(const LinearModel&, const LinearModel&) = default;
};

// Solves the weighted ridge normal equations
//   (Z^T W Z + lambda I) beta = Z^T W y
// with an unpenalized intercept (handled by weighted centering). `weights`
// may be empty for uniform weights. Throws Error(kSingularMatrix) when a
// pivot falls below 1e-12 * max diagonal, Error(kNonFiniteInput) for NaN/Inf.
LinearModel fit(const Matrix& x, std::span<const double> y,
                std::span<const double> weights, const FitOptions& options);

LinearModel fit(const Dataset& d, double lambda, bool standardize = true);

// Symmetric positive-definite solve: Cholesky first, LU with partial
// pivoting when Cholesky hits a non-positive pivot.
std::vector<double> solve_spd(const Matrix& a, std::span<const double> b);

inline constexpr double kSingularPivotTolerance = 1e-12;

RegressionMetrics compute_metrics(std::span<const double> y,
                                  std::span<const double> predictions);
RegressionMetrics evaluate(const LinearModel& model, const Matrix& x,
                           std::span<const double> y);
// Throws SchemaMismatch when the dataset's features differ from the model's.
RegressionMetrics evaluate(const LinearModel& model, const Dataset& d);

// Weighted coefficient of determination of `predictions` against `y`.
double weighted_r2(std::span<const double> y, std::span<const double> predictions,
                   std::span<const double> weights);

}  // namespace martlens::linreg
