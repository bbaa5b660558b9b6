#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "martlens/matrix.hpp"

namespace martlens::discretize {

inline constexpr int kDefaultBins = 4;

// Quantile edges: edge_k = sorted[ceil(k * n / n_bins) - 1], k = 1..n_bins-1.
// Duplicates collapse and edges >= max(values) are dropped, so every bin
// holds at least one training value. Throws Error(kTooFewValues) when
// n < n_bins, Error(kInvalidArgument) when n_bins < 2.
std::vector<double> fit_quantile_bins(std::span<const double> values, int n_bins);

// Smallest i with value <= edges[i]; edges.size() when above every edge.
// Intervals are lower-exclusive, upper-inclusive.
std::size_t locate_bin(double value, std::span<const double> edges);

// Component j is 1 iff sample_bins[j] == instance_bins[j].
std::vector<double> interpretable_encode(std::span<const std::size_t> instance_bins,
                                         std::span<const std::size_t> sample_bins);

struct FeatureBins {
  std::string feature;
  std::vector<double> edges;
  std::vector<std::size_t> frequencies;
  std::vector<double> bin_min;
  std::vector<double> bin_max;

  std::size_t num_bins() const { return edges.size() + 1; }

  friend bool operator==(const FeatureBins&, const FeatureBins&) = default;
};

struct BinLabel {
  std::string text;
  std::string feature;
  std::size_t bin_index = 0;

  friend bool operator==(const BinLabel&, const BinLabel&) = default;
};

class Discretization {
 public:
  Discretization() = default;
  explicit Discretization(std::vector<FeatureBins> features);

  // Fits every column of `x` (rows are training samples).
  static Discretization fit(const Matrix& x, std::span<const std::string> names,
                            int n_bins = kDefaultBins);

  const std::vector<FeatureBins>& features() const { return features_; }
  std::size_t size() const { return features_.size(); }
  std::size_t n_train() const;

  std::size_t locate(std::size_t feature, double value) const;
  std::vector<std::size_t> locate_all(std::span<const double> values) const;
  BinLabel label(std::size_t feature, std::size_t bin) const;
  // Recovers feature and bin index from rendered text.
  BinLabel parse_label(std::string_view text) const;

  friend bool operator==(const Discretization&, const Discretization&) = default;

 private:
  std::vector<FeatureBins> features_;
};

// Label grammar: "<lo> < NAME <= <hi>" | "NAME <= <hi>" | "NAME > <lo>",
// numbers fixed-point with 2 decimals.
std::string format_fixed2(double v);
std::string render_label(std::string_view feature, std::optional<double> lo,
                         std::optional<double> hi);

struct ParsedLabel {
  std::string feature;
  std::optional<std::string> lo;
  std::optional<std::string> hi;
};
ParsedLabel parse_label_text(std::string_view text);

}  // namespace martlens::discretize
