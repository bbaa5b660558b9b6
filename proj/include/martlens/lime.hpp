#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "martlens/discretize.hpp"
#include "martlens/linreg.hpp"
#include "martlens/matrix.hpp"

namespace martlens::lime {

// Seed used whenever a caller does not supply one.
inline constexpr std::uint64_t kDefaultSeed = 42;

struct ExplainerConfig {
  std::size_t num_samples = 5000;
  std::size_t num_features = 6;
  // Unset: 0.75 * sqrt(d).
  std::optional<double> kernel_width;
  std::uint64_t seed = kDefaultSeed;
  int n_bins = discretize::kDefaultBins;
  double surrogate_lambda = 1.0;

  // Throws Error(kInvalidConfig) unless num_samples >= 10,
  // num_features >= 1, kernel_width > 0 and surrogate_lambda >= 0.
  void validate() const;
  double resolved_kernel_width(std::size_t d) const;
  // num_features clamped to d.
  std::size_t resolved_num_features(std::size_t d) const;
};

struct Contribution {
  std::string feature;
  discretize::BinLabel label;
  double weight = 0.0;

  friend bool operator==(const Contribution&, const Contribution&) = default;
};

struct Explanation {
  double predicted_value = 0.0;
  linreg::PredictionRange local_range;
  std::vector<Contribution> contributions;  // sorted by |weight| descending
  double surrogate_intercept = 0.0;
  double surrogate_r2 = 0.0;
  std::vector<std::pair<std::string, double>> instance_values;  // schema order
  std::uint64_t seed = 0;
  // All sampled predictions were identical; contributions are all zero.
  bool degenerate_local = false;
  // predicted_value lies outside local_range.
  bool outside_local_range = false;

  friend bool operator==(const Explanation&, const Explanation&) = default;
};

struct PerturbationSet {
  Matrix raw;                             // num_samples x d, row 0 = instance
  Matrix binary;                          // interpretable encoding
  std::vector<double> distances;          // to the all-ones vector
  std::vector<std::size_t> instance_bins;
};

// Row 0 is the unperturbed instance. Other rows draw, per feature, a bin
// with probability proportional to its training frequency and then a value
// uniformly within that bin's training [min, max].
PerturbationSet sample_perturbations(const discretize::Discretization& disc,
                                     std::span<const double> instance,
                                     const ExplainerConfig& cfg);

// exp(-distance^2 / kernel_width^2)
double kernel_weight(double distance, double kernel_width);

// Greedy forward selection by weighted R^2 of the ridge surrogate. Ties go
// to the lowest column index. Returns indices in selection order.
std::vector<std::size_t> select_features(const Matrix& binary,
                                         std::span<const double> targets,
                                         std::span<const double> weights,
                                         std::size_t k, double lambda);

// Batch black-box: one prediction per row.
using BlackBox = std::function<std::vector<double>(const Matrix&)>;

struct BlackBoxSpec {
  BlackBox predict;
  std::vector<std::string> feature_names;
  linreg::PredictionRange local_range;
};

// Everything the explainer computed, for callers that need more than the
// display payload.
struct ExplainTrace {
  Explanation explanation;
  PerturbationSet samples;
  std::vector<double> predictions;
  std::vector<double> weights;
  std::vector<std::size_t> selected;  // ascending feature indices
  linreg::LinearModel surrogate;      // over the selected binary columns
};

ExplainTrace explain_trace(const BlackBoxSpec& black_box,
                           const discretize::Discretization& disc,
                           std::span<const double> instance,
                           const ExplainerConfig& cfg);

Explanation explain(const linreg::LinearModel& model,
                    const discretize::Discretization& disc,
                    std::span<const double> instance, const ExplainerConfig& cfg);

Explanation explain(const linreg::LinearModel& model,
                    const discretize::Discretization& disc,
                    const std::map<std::string, double>& instance,
                    const ExplainerConfig& cfg);

BlackBoxSpec as_black_box(const linreg::LinearModel& model);

}  // namespace martlens::lime
