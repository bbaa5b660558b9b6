#include "martlens/linreg.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include <fmt/format.h>

#include "martlens/error.hpp"
#include "martlens/kernels.hpp"

namespace martlens::linreg {

namespace {

kernels::AffineMap affine_map(const LinearModel& m) {
  kernels::AffineMap map;
  map.offsets = m.standardization.means;
  map.scales = m.standardization.stddevs;
  map.coefs = m.standardized_coefficients;
  map.intercept = m.standardized_intercept;
  return map;
}

void check_finite(std::span<const double> values, const char* what) {
  for (double v : values) {
    if (!std::isfinite(v)) {
      throw Error(ErrorKind::kNonFiniteInput,
                  fmt::format("{} contains a non-finite value", what));
    }
  }
}

}  // namespace

double LinearModel::predict(std::span<const double> values) const {
  if (values.size() != size()) {
    throw Error(ErrorKind::kSchemaMismatch,
                fmt::format("expected {} features, got {}", size(), values.size()));
  }
  double acc = standardized_intercept;
  for (std::size_t j = 0; j < values.size(); ++j) {
    acc += standardized_coefficients[j] *
           ((values[j] - standardization.means[j]) / standardization.stddevs[j]);
  }
  return acc;
}

std::vector<double> LinearModel::predict_batch(const Matrix& x) const {
  if (x.cols() != size()) {
    throw Error(ErrorKind::kSchemaMismatch,
                fmt::format("expected {} features, got {}", size(), x.cols()));
  }
  return kernels::predict_batch(x, affine_map(*this));
}

std::vector<double> LinearModel::align(
    const std::map<std::string, double>& instance) const {
  std::vector<std::string> missing;
  std::vector<std::string> extra;
  std::vector<double> out(size());
  for (std::size_t j = 0; j < size(); ++j) {
    auto it = instance.find(feature_names[j]);
    if (it == instance.end()) {
      missing.push_back(feature_names[j]);
    } else {
      out[j] = it->second;
    }
  }
  const std::set<std::string_view> known(feature_names.begin(), feature_names.end());
  for (const auto& [name, value] : instance) {
    if (!known.contains(name)) extra.push_back(name);
  }
  if (!missing.empty() || !extra.empty()) {
    throw SchemaMismatch(std::move(missing), std::move(extra));
  }
  check_finite(out, "instance");
  return out;
}

std::vector<double> solve_spd(const Matrix& a, std::span<const double> b) {
  const std::size_t d = a.rows();
  // For a Gram matrix the largest entry sits on the diagonal.
  double scale = 0.0;
  for (double v : a.data()) scale = std::max(scale, std::abs(v));
  const double tol = kSingularPivotTolerance * scale;
  if (d > 0 && !(scale > 0.0)) {
    throw Error(ErrorKind::kSingularMatrix, "matrix is zero");
  }

  // Cholesky, lower triangle.
  Matrix l(d, d);
  bool spd = true;
  for (std::size_t k = 0; k < d && spd; ++k) {
    double pivot = a(k, k);
    for (std::size_t p = 0; p < k; ++p) pivot -= l(k, p) * l(k, p);
    if (!(pivot > tol)) {
      spd = false;
      break;
    }
    l(k, k) = std::sqrt(pivot);
    for (std::size_t i = k + 1; i < d; ++i) {
      double s = a(i, k);
      for (std::size_t p = 0; p < k; ++p) s -= l(i, p) * l(k, p);
      l(i, k) = s / l(k, k);
    }
  }
  std::vector<double> x(b.begin(), b.end());
  if (spd) {
    for (std::size_t i = 0; i < d; ++i) {
      double s = x[i];
      for (std::size_t p = 0; p < i; ++p) s -= l(i, p) * x[p];
      x[i] = s / l(i, i);
    }
    for (std::size_t i = d; i-- > 0;) {
      double s = x[i];
      for (std::size_t p = i + 1; p < d; ++p) s -= l(p, i) * x[p];
      x[i] = s / l(i, i);
    }
    return x;
  }

  // Fallback: Gaussian elimination with partial pivoting.
  Matrix u = a;
  for (std::size_t k = 0; k < d; ++k) {
    std::size_t piv = k;
    for (std::size_t i = k + 1; i < d; ++i) {
      if (std::abs(u(i, k)) > std::abs(u(piv, k))) piv = i;
    }
    if (!(std::abs(u(piv, k)) >= tol) || std::abs(u(piv, k)) == 0.0) {
      throw Error(ErrorKind::kSingularMatrix,
                  fmt::format("Gram matrix is singular (pivot {} below {:g})", k, tol));
    }
    if (piv != k) {
      for (std::size_t c = 0; c < d; ++c) std::swap(u(k, c), u(piv, c));
      std::swap(x[k], x[piv]);
    }
    for (std::size_t i = k + 1; i < d; ++i) {
      const double f = u(i, k) / u(k, k);
      if (f == 0.0) continue;
      for (std::size_t c = k; c < d; ++c) u(i, c) -= f * u(k, c);
      x[i] -= f * x[k];
    }
  }
  for (std::size_t i = d; i-- > 0;) {
    double s = x[i];
    for (std::size_t c = i + 1; c < d; ++c) s -= u(i, c) * x[c];
    x[i] = s / u(i, i);
  }
  return x;
}

LinearModel fit(const Matrix& x, std::span<const double> y,
                std::span<const double> weights, const FitOptions& options) {
  const std::size_t n = x.rows();
  const std::size_t d = x.cols();
  if (n == 0) throw Error(ErrorKind::kInvalidArgument, "fit needs n >= 1");
  if (d == 0) throw Error(ErrorKind::kInvalidArgument, "fit needs d >= 1");
  if (y.size() != n) {
    throw Error(ErrorKind::kDimensionMismatch,
                fmt::format("{} rows but {} targets", n, y.size()));
  }
  if (!weights.empty() && weights.size() != n) {
    throw Error(ErrorKind::kDimensionMismatch,
                fmt::format("{} rows but {} weights", n, weights.size()));
  }
  if (!options.feature_names.empty() && options.feature_names.size() != d) {
    throw Error(ErrorKind::kDimensionMismatch, "feature_names width mismatch");
  }
  if (!std::isfinite(options.lambda) || options.lambda < 0.0) {
    throw Error(ErrorKind::kInvalidArgument, "lambda must be finite and >= 0");
  }
  check_finite(x.data(), "design matrix");
  check_finite(y, "targets");
  check_finite(weights, "weights");

  std::vector<double> w;
  if (weights.empty()) {
    w.assign(n, 1.0);
  } else {
    w.assign(weights.begin(), weights.end());
    bool any_positive = false;
    for (double v : w) {
      if (v < 0.0) throw Error(ErrorKind::kInvalidArgument, "negative sample weight");
      any_positive = any_positive || v > 0.0;
    }
    if (!any_positive) {
      throw Error(ErrorKind::kInvalidArgument, "all sample weights are zero");
    }
  }

  LinearModel m;
  m.feature_names = options.feature_names;
  if (m.feature_names.empty()) {
    for (std::size_t j = 0; j < d; ++j) m.feature_names.push_back(fmt::format("x{}", j));
  }
  m.target_name = options.target_name;
  m.lambda = options.lambda;
  m.standardized = options.standardize;
  m.n_train = n;

  StandardizationStats stats = fit_standardization(x);
  if (!options.standardize) {
    std::fill(stats.means.begin(), stats.means.end(), 0.0);
    std::fill(stats.stddevs.begin(), stats.stddevs.end(), 1.0);
  }
  m.standardization = stats;
  m.dropped = stats.constant;

  std::vector<std::size_t> active;
  for (std::size_t j = 0; j < d; ++j) {
    if (!m.dropped[j]) active.push_back(j);
  }

  Matrix z(n, active.size());
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = 0; k < active.size(); ++k) {
      const std::size_t j = active[k];
      z(i, k) = (x(i, j) - stats.means[j]) / stats.stddevs[j];
    }
  }

  const kernels::WeightedGram g = kernels::weighted_gram(z, y, w);
  Matrix a = g.gram;
  for (std::size_t k = 0; k < active.size(); ++k) a(k, k) += options.lambda;
  const std::vector<double> beta =
      active.empty() ? std::vector<double>{} : solve_spd(a, g.cross);

  m.standardized_coefficients.assign(d, 0.0);
  m.coefficients.assign(d, 0.0);
  double intercept_z = g.target_mean;
  for (std::size_t k = 0; k < active.size(); ++k) {
    const std::size_t j = active[k];
    m.standardized_coefficients[j] = beta[k];
    intercept_z -= beta[k] * g.column_means[k];
  }
  m.standardized_intercept = intercept_z;
  double intercept = intercept_z;
  for (std::size_t j = 0; j < d; ++j) {
    m.coefficients[j] = m.standardized_coefficients[j] / stats.stddevs[j];
    intercept -= m.coefficients[j] * stats.means[j];
  }
  m.intercept = intercept;

  check_finite(m.coefficients, "fitted coefficients");
  const std::vector<double> fitted = m.predict_batch(x);
  const auto [lo, hi] = std::minmax_element(fitted.begin(), fitted.end());
  m.prediction_range = {*lo, *hi};
  // Constant targets are fitted exactly by the intercept, so r2 is defined
  // whenever the solve succeeded.
  m.train_metrics = compute_metrics(y, fitted);
  return m;
}

LinearModel fit(const Dataset& d, double lambda, bool standardize) {
  FitOptions options;
  options.lambda = lambda;
  options.standardize = standardize;
  options.feature_names = d.schema().feature_names;
  options.target_name = d.schema().target_name;
  const std::vector<double> y = d.targets();
  return fit(d.design(), y, {}, options);
}

RegressionMetrics compute_metrics(std::span<const double> y,
                                  std::span<const double> predictions) {
  const std::size_t n = y.size();
  if (n == 0) throw Error(ErrorKind::kInvalidArgument, "metrics need n >= 1");
  if (predictions.size() != n) {
    throw Error(ErrorKind::kDimensionMismatch, "prediction count mismatch");
  }
  double sum = 0.0;
  for (double v : y) sum += v;
  const double mean = sum / static_cast<double>(n);
  double ss_res = 0.0, ss_tot = 0.0, abs_sum = 0.0, max_abs_res = 0.0;
  bool constant = true;
  for (std::size_t i = 0; i < n; ++i) {
    const double r = y[i] - predictions[i];
    ss_res += r * r;
    abs_sum += std::abs(r);
    max_abs_res = std::max(max_abs_res, std::abs(r));
    ss_tot += (y[i] - mean) * (y[i] - mean);
    constant = constant && y[i] == y[0];
  }
  RegressionMetrics m;
  m.rmse = std::sqrt(ss_res / static_cast<double>(n));
  m.mae = abs_sum / static_cast<double>(n);
  if (constant) {
    // Residuals at rounding level of the constant count as zero.
    if (max_abs_res > 1e-9 * std::max(1.0, std::abs(y[0]))) {
      throw Error(ErrorKind::kScoreUndefined,
                  "r2 undefined: constant targets with nonzero residuals");
    }
    m.r2 = 1.0;
  } else {
    m.r2 = 1.0 - ss_res / ss_tot;
  }
  return m;
}

RegressionMetrics evaluate(const LinearModel& model, const Matrix& x,
                           std::span<const double> y) {
  return compute_metrics(y, model.predict_batch(x));
}

RegressionMetrics evaluate(const LinearModel& model, const Dataset& d) {
  if (d.schema().feature_names != model.feature_names) {
    std::vector<std::string> missing, extra;
    const auto& names = d.schema().feature_names;
    for (const auto& f : model.feature_names) {
      if (std::find(names.begin(), names.end(), f) == names.end()) missing.push_back(f);
    }
    for (const auto& f : names) {
      if (std::find(model.feature_names.begin(), model.feature_names.end(), f) ==
          model.feature_names.end()) {
        extra.push_back(f);
      }
    }
    throw SchemaMismatch(std::move(missing), std::move(extra));
  }
  const std::vector<double> y = d.targets();
  return evaluate(model, d.design(), y);
}

double weighted_r2(std::span<const double> y, std::span<const double> predictions,
                   std::span<const double> weights) {
  double wsum = 0.0, wy = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    wsum += weights[i];
    wy += weights[i] * y[i];
  }
  const double mean = wy / wsum;
  double ss_res = 0.0, ss_tot = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    ss_res += weights[i] * (y[i] - predictions[i]) * (y[i] - predictions[i]);
    ss_tot += weights[i] * (y[i] - mean) * (y[i] - mean);
  }
  if (ss_tot == 0.0) return ss_res == 0.0 ? 1.0 : 0.0;
  return 1.0 - ss_res / ss_tot;
}

}  // namespace martlens::linreg
