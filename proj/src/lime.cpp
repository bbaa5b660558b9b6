#include "martlens/lime.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <fmt/format.h>

#include "martlens/error.hpp"
#include "martlens/kernels.hpp"

namespace martlens::lime {

void ExplainerConfig::validate() const {
  if (num_samples < 10) {
    throw Error(ErrorKind::kInvalidConfig, "num_samples must be >= 10");
  }
  if (num_features < 1) {
    throw Error(ErrorKind::kInvalidConfig, "num_features must be >= 1");
  }
  if (kernel_width && !(*kernel_width > 0.0 && std::isfinite(*kernel_width))) {
    throw Error(ErrorKind::kInvalidConfig, "kernel_width must be > 0");
  }
  if (!(surrogate_lambda >= 0.0 && std::isfinite(surrogate_lambda))) {
    throw Error(ErrorKind::kInvalidConfig, "surrogate_lambda must be >= 0");
  }
  if (n_bins < 2) throw Error(ErrorKind::kInvalidConfig, "n_bins must be >= 2");
}

double ExplainerConfig::resolved_kernel_width(std::size_t d) const {
  return kernel_width ? *kernel_width : 0.75 * std::sqrt(static_cast<double>(d));
}

std::size_t ExplainerConfig::resolved_num_features(std::size_t d) const {
  return std::min(num_features, d);
}

PerturbationSet sample_perturbations(const discretize::Discretization& disc,
                                     std::span<const double> instance,
                                     const ExplainerConfig& cfg) {
  cfg.validate();
  const std::size_t d = disc.size();
  const std::size_t n = cfg.num_samples;
  PerturbationSet out;
  out.instance_bins = disc.locate_all(instance);

  std::vector<kernels::BinSampler> samplers(d);
  for (std::size_t j = 0; j < d; ++j) {
    const auto& f = disc.features()[j];
    double total = 0.0;
    for (std::size_t c : f.frequencies) total += static_cast<double>(c);
    auto& s = samplers[j];
    double running = 0.0;
    for (std::size_t b = 0; b < f.num_bins(); ++b) {
      running += static_cast<double>(f.frequencies[b]);
      s.cumulative.push_back(running / total);
    }
    s.lo = f.bin_min;
    s.hi = f.bin_max;
  }

  out.raw = Matrix(n, d);
  std::copy(instance.begin(), instance.end(), out.raw.row(0).begin());
  kernels::sample_rows(samplers, cfg.seed, 1, out.raw);

  out.binary = Matrix(n, d);
  out.distances.assign(n, 0.0);
  std::vector<std::size_t> bins(d);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < d; ++j) bins[j] = disc.locate(j, out.raw(i, j));
    const std::vector<double> z = discretize::interpretable_encode(out.instance_bins, bins);
    double zeros = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      out.binary(i, j) = z[j];
      zeros += (1.0 - z[j]) * (1.0 - z[j]);
    }
    out.distances[i] = std::sqrt(zeros);
  }
  return out;
}

double kernel_weight(double distance, double kernel_width) {
  if (!(kernel_width > 0.0)) {
    throw Error(ErrorKind::kInvalidConfig, "kernel_width must be > 0");
  }
  return std::exp(-(distance * distance) / (kernel_width * kernel_width));
}

namespace {

linreg::LinearModel fit_surrogate(const Matrix& binary,
                                  std::span<const std::size_t> columns,
                                  std::span<const double> targets,
                                  std::span<const double> weights, double lambda) {
  linreg::FitOptions options;
  options.lambda = lambda;
  options.standardize = false;
  return linreg::fit(binary.select_columns(columns), targets, weights, options);
}

double surrogate_score(const Matrix& binary, std::span<const std::size_t> columns,
                       std::span<const double> targets,
                       std::span<const double> weights, double lambda) {
  const Matrix sub = binary.select_columns(columns);
  linreg::FitOptions options;
  options.lambda = lambda;
  options.standardize = false;
  const linreg::LinearModel m = linreg::fit(sub, targets, weights, options);
  return linreg::weighted_r2(targets, m.predict_batch(sub), weights);
}

}  // namespace

std::vector<std::size_t> select_features(const Matrix& binary,
                                         std::span<const double> targets,
                                         std::span<const double> weights,
                                         std::size_t k, double lambda) {
  const std::size_t d = binary.cols();
  if (k > d) {
    throw Error(ErrorKind::kInvalidArgument,
                fmt::format("cannot select {} of {} features", k, d));
  }
  std::vector<std::size_t> selected;
  std::vector<bool> used(d, false);
  while (selected.size() < k) {
    std::optional<std::size_t> best;
    double best_score = 0.0;
    for (std::size_t c = 0; c < d; ++c) {
      if (used[c]) continue;
      std::vector<std::size_t> trial = selected;
      trial.push_back(c);
      double score = 0.0;
      try {
        score = surrogate_score(binary, trial, targets, weights, lambda);
      } catch (const Error& e) {
        if (e.kind() != ErrorKind::kSingularMatrix) throw;
        continue;
      }
      if (!best || score > best_score) {
        best = c;
        best_score = score;
      }
    }
    if (!best) {
      // Every remaining candidate is collinear (lambda == 0); fill in index order.
      for (std::size_t c = 0; c < d && selected.size() < k; ++c) {
        if (!used[c]) {
          used[c] = true;
          selected.push_back(c);
        }
      }
      break;
    }
    used[*best] = true;
    selected.push_back(*best);
  }
  return selected;
}

ExplainTrace explain_trace(const BlackBoxSpec& black_box,
                           const discretize::Discretization& disc,
                           std::span<const double> instance,
                           const ExplainerConfig& cfg) {
  cfg.validate();
  const std::size_t d = disc.size();
  if (black_box.feature_names.size() != d || instance.size() != d) {
    throw Error(ErrorKind::kSchemaMismatch,
                fmt::format("instance has {} values, model {} features, "
                            "discretization {} features",
                            instance.size(), black_box.feature_names.size(), d));
  }
  for (std::size_t j = 0; j < d; ++j) {
    if (disc.features()[j].feature != black_box.feature_names[j]) {
      throw Error(ErrorKind::kSchemaMismatch,
                  fmt::format("discretization feature '{}' does not match model "
                              "feature '{}'",
                              disc.features()[j].feature, black_box.feature_names[j]));
    }
    if (!std::isfinite(instance[j])) {
      throw Error(ErrorKind::kNonFiniteInput,
                  fmt::format("instance value for '{}' is not finite",
                              black_box.feature_names[j]));
    }
  }
  const std::size_t k = cfg.resolved_num_features(d);
  const double width = cfg.resolved_kernel_width(d);

  ExplainTrace t;
  t.samples = sample_perturbations(disc, instance, cfg);
  t.predictions = black_box.predict(t.samples.raw);
  t.weights.resize(t.predictions.size());
  for (std::size_t i = 0; i < t.weights.size(); ++i) {
    t.weights[i] = kernel_weight(t.samples.distances[i], width);
  }

  Explanation& e = t.explanation;
  e.predicted_value = t.predictions[0];
  e.local_range = black_box.local_range;
  e.seed = cfg.seed;
  e.outside_local_range = e.predicted_value < e.local_range.min ||
                          e.predicted_value > e.local_range.max;
  for (std::size_t j = 0; j < d; ++j) {
    e.instance_values.emplace_back(black_box.feature_names[j], instance[j]);
  }

  const auto [lo, hi] = std::minmax_element(t.predictions.begin(), t.predictions.end());
  e.degenerate_local = *lo == *hi;
  if (e.degenerate_local) {
    t.selected.resize(k);
    std::iota(t.selected.begin(), t.selected.end(), std::size_t{0});
  } else {
    t.selected = select_features(t.samples.binary, t.predictions, t.weights, k,
                                 cfg.surrogate_lambda);
    std::sort(t.selected.begin(), t.selected.end());
  }

  if (e.degenerate_local) {
    // Zero-variance target: the surrogate is the constant itself.
    linreg::LinearModel& m = t.surrogate;
    for (std::size_t j : t.selected) m.feature_names.push_back(fmt::format("x{}", j));
    m.target_name = "target";
    m.coefficients.assign(k, 0.0);
    m.standardized_coefficients.assign(k, 0.0);
    m.dropped.assign(k, false);
    m.standardized = false;
    m.standardization.means.assign(k, 0.0);
    m.standardization.stddevs.assign(k, 1.0);
    m.standardization.constant.assign(k, false);
    m.intercept = m.standardized_intercept = *lo;
    m.lambda = cfg.surrogate_lambda;
    m.n_train = t.predictions.size();
    m.train_metrics = {0.0, 0.0, 1.0};
    m.prediction_range = {*lo, *lo};
    e.surrogate_intercept = *lo;
    e.surrogate_r2 = 1.0;
  } else {
    t.surrogate = fit_surrogate(t.samples.binary, t.selected, t.predictions,
                                t.weights, cfg.surrogate_lambda);
    e.surrogate_intercept = t.surrogate.intercept;
    const Matrix sub = t.samples.binary.select_columns(t.selected);
    e.surrogate_r2 = linreg::weighted_r2(
        t.predictions, t.surrogate.predict_batch(sub), t.weights);
  }

  for (std::size_t s = 0; s < t.selected.size(); ++s) {
    const std::size_t j = t.selected[s];
    Contribution c;
    c.feature = black_box.feature_names[j];
    c.label = disc.label(j, t.samples.instance_bins[j]);
    c.weight = t.surrogate.coefficients[s];
    e.contributions.push_back(std::move(c));
  }
  // Stable: equal magnitudes keep ascending feature order.
  std::stable_sort(e.contributions.begin(), e.contributions.end(),
                   [](const Contribution& a, const Contribution& b) {
                     return std::abs(a.weight) > std::abs(b.weight);
                   });
  return t;
}

BlackBoxSpec as_black_box(const linreg::LinearModel& model) {
  BlackBoxSpec spec;
  spec.predict = [&model](const Matrix& x) { return model.predict_batch(x); };
  spec.feature_names = model.feature_names;
  spec.local_range = model.prediction_range;
  return spec;
}

Explanation explain(const linreg::LinearModel& model,
                    const discretize::Discretization& disc,
                    std::span<const double> instance, const ExplainerConfig& cfg) {
  return explain_trace(as_black_box(model), disc, instance, cfg).explanation;
}

Explanation explain(const linreg::LinearModel& model,
                    const discretize::Discretization& disc,
                    const std::map<std::string, double>& instance,
                    const ExplainerConfig& cfg) {
  const std::vector<double> values = model.align(instance);
  return explain(model, disc, values, cfg);
}

}  // namespace martlens::lime
