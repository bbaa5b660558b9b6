#include "martlens/discretize.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "martlens/error.hpp"

namespace martlens::discretize {

std::vector<double> fit_quantile_bins(std::span<const double> values, int n_bins) {
  if (n_bins < 2) throw Error(ErrorKind::kInvalidArgument, "n_bins must be >= 2");
  const std::size_t n = values.size();
  const auto k_bins = static_cast<std::size_t>(n_bins);
  if (n < k_bins) {
    throw Error(ErrorKind::kTooFewValues,
                fmt::format("{} values cannot fill {} bins", n, n_bins));
  }
  std::vector<double> sorted(values.begin(), values.end());
  std::sort(sorted.begin(), sorted.end());
  std::vector<double> edges;
  for (std::size_t k = 1; k < k_bins; ++k) {
    // ceil(k * n / n_bins) - 1 in integer arithmetic
    const std::size_t rank = (k * n + k_bins - 1) / k_bins - 1;
    const double e = sorted[rank];
    if (e >= sorted.back()) break;
    if (edges.empty() || e > edges.back()) edges.push_back(e);
  }
  return edges;
}

std::size_t locate_bin(double value, std::span<const double> edges) {
  return static_cast<std::size_t>(
      std::lower_bound(edges.begin(), edges.end(), value) - edges.begin());
}

std::vector<double> interpretable_encode(std::span<const std::size_t> instance_bins,
                                         std::span<const std::size_t> sample_bins) {
  if (instance_bins.size() != sample_bins.size()) {
    throw Error(ErrorKind::kDimensionMismatch,
                fmt::format("encode: {} vs {} features", instance_bins.size(),
                            sample_bins.size()));
  }
  std::vector<double> out(instance_bins.size());
  for (std::size_t j = 0; j < out.size(); ++j) {
    out[j] = sample_bins[j] == instance_bins[j] ? 1.0 : 0.0;
  }
  return out;
}

Discretization::Discretization(std::vector<FeatureBins> features)
    : features_(std::move(features)) {
  for (const auto& f : features_) {
    const std::size_t k = f.num_bins();
    if (f.frequencies.size() != k || f.bin_min.size() != k || f.bin_max.size() != k) {
      throw Error(ErrorKind::kInvalidArgument,
                  fmt::format("inconsistent bin tables for '{}'", f.feature));
    }
    if (!std::is_sorted(f.edges.begin(), f.edges.end()) ||
        std::adjacent_find(f.edges.begin(), f.edges.end()) != f.edges.end()) {
      throw Error(ErrorKind::kInvalidArgument,
                  fmt::format("edges of '{}' not strictly ascending", f.feature));
    }
  }
}

Discretization Discretization::fit(const Matrix& x,
                                   std::span<const std::string> names,
                                   int n_bins) {
  if (names.size() != x.cols()) {
    throw Error(ErrorKind::kDimensionMismatch, "names/columns mismatch");
  }
  std::vector<FeatureBins> out;
  out.reserve(x.cols());
  for (std::size_t j = 0; j < x.cols(); ++j) {
    const std::vector<double> col = x.column(j);
    FeatureBins fb;
    fb.feature = names[j];
    fb.edges = fit_quantile_bins(col, n_bins);
    const std::size_t k = fb.num_bins();
    fb.frequencies.assign(k, 0);
    fb.bin_min.assign(k, 0.0);
    fb.bin_max.assign(k, 0.0);
    for (double v : col) {
      const std::size_t b = locate_bin(v, fb.edges);
      if (fb.frequencies[b] == 0) {
        fb.bin_min[b] = v;
        fb.bin_max[b] = v;
      } else {
        fb.bin_min[b] = std::min(fb.bin_min[b], v);
        fb.bin_max[b] = std::max(fb.bin_max[b], v);
      }
      ++fb.frequencies[b];
    }
    out.push_back(std::move(fb));
  }
  return Discretization(std::move(out));
}

std::size_t Discretization::n_train() const {
  if (features_.empty()) return 0;
  std::size_t n = 0;
  for (std::size_t f : features_.front().frequencies) n += f;
  return n;
}

std::size_t Discretization::locate(std::size_t feature, double value) const {
  return locate_bin(value, features_.at(feature).edges);
}

std::vector<std::size_t> Discretization::locate_all(
    std::span<const double> values) const {
  if (values.size() != features_.size()) {
    throw Error(ErrorKind::kDimensionMismatch,
                fmt::format("expected {} values, got {}", features_.size(),
                            values.size()));
  }
  std::vector<std::size_t> bins(values.size());
  for (std::size_t j = 0; j < values.size(); ++j) bins[j] = locate(j, values[j]);
  return bins;
}

BinLabel Discretization::label(std::size_t feature, std::size_t bin) const {
  const FeatureBins& f = features_.at(feature);
  if (bin >= f.num_bins()) {
    throw Error(ErrorKind::kInvalidArgument,
                fmt::format("bin {} out of range for '{}'", bin, f.feature));
  }
  BinLabel label;
  label.feature = f.feature;
  label.bin_index = bin;
  if (f.edges.empty()) {
    // Single bin: the training maximum stands in for the upper bound.
    label.text = render_label(f.feature, std::nullopt, f.bin_max[0]);
  } else if (bin == 0) {
    label.text = render_label(f.feature, std::nullopt, f.edges[0]);
  } else if (bin == f.edges.size()) {
    label.text = render_label(f.feature, f.edges.back(), std::nullopt);
  } else {
    label.text = render_label(f.feature, f.edges[bin - 1], f.edges[bin]);
  }
  return label;
}

BinLabel Discretization::parse_label(std::string_view text) const {
  const ParsedLabel parsed = parse_label_text(text);
  for (std::size_t j = 0; j < features_.size(); ++j) {
    if (features_[j].feature != parsed.feature) continue;
    for (std::size_t b = 0; b < features_[j].num_bins(); ++b) {
      BinLabel candidate = label(j, b);
      if (candidate.text == text) return candidate;
    }
    throw Error(ErrorKind::kParse,
                fmt::format("label '{}' matches no bin of '{}'", text, parsed.feature));
  }
  throw Error(ErrorKind::kParse,
              fmt::format("label '{}' names unknown feature '{}'", text, parsed.feature));
}

std::string format_fixed2(double v) {
  std::string s = fmt::format("{:.2f}", v);
  if (s == "-0.00") s = "0.00";
  return s;
}

std::string render_label(std::string_view feature, std::optional<double> lo,
                         std::optional<double> hi) {
  if (lo && hi) {
    return fmt::format("{} < {} <= {}", format_fixed2(*lo), feature, format_fixed2(*hi));
  }
  if (hi) return fmt::format("{} <= {}", feature, format_fixed2(*hi));
  if (lo) return fmt::format("{} > {}", feature, format_fixed2(*lo));
  throw Error(ErrorKind::kInvalidArgument, "label needs at least one bound");
}

ParsedLabel parse_label_text(std::string_view text) {
  auto fail = [&]() -> ParsedLabel {
    throw Error(ErrorKind::kParse, fmt::format("malformed bin label '{}'", text));
  };
  ParsedLabel out;
  const std::size_t le = text.find(" <= ");
  const std::size_t lt = text.find(" < ");
  if (lt != std::string_view::npos && le != std::string_view::npos && lt < le) {
    out.lo = std::string(text.substr(0, lt));
    out.feature = std::string(text.substr(lt + 3, le - lt - 3));
    out.hi = std::string(text.substr(le + 4));
  } else if (le != std::string_view::npos) {
    out.feature = std::string(text.substr(0, le));
    out.hi = std::string(text.substr(le + 4));
  } else if (const std::size_t gt = text.find(" > "); gt != std::string_view::npos) {
    out.feature = std::string(text.substr(0, gt));
    out.lo = std::string(text.substr(gt + 3));
  } else {
    return fail();
  }
  if (out.feature.empty() || (out.lo && out.lo->empty()) || (out.hi && out.hi->empty())) {
    return fail();
  }
  return out;
}

}  // namespace martlens::discretize
