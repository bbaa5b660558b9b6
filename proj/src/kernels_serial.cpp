#include <algorithm>
#include <random>

#include "martlens/kernels.hpp"

namespace martlens::kernels {

std::uint64_t row_seed(std::uint64_t seed, std::uint64_t row) {
  // splitmix64 finalizer over (seed, row)
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ull * (row + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

double unit_uniform(std::uint64_t bits) {
  return static_cast<double>(bits >> 11) * 0x1.0p-53;
}

namespace detail {

void sample_one_row(std::span<const BinSampler> samplers, std::uint64_t seed,
                    std::size_t r, std::span<double> out_row) {
  std::mt19937_64 gen(row_seed(seed, r));
  for (std::size_t j = 0; j < samplers.size(); ++j) {
    const BinSampler& s = samplers[j];
    const double u = unit_uniform(gen());
    auto it = std::upper_bound(s.cumulative.begin(), s.cumulative.end(), u);
    std::size_t bin = static_cast<std::size_t>(it - s.cumulative.begin());
    if (bin >= s.cumulative.size()) bin = s.cumulative.size() - 1;
    const double v = unit_uniform(gen());
    out_row[j] = s.lo[bin] + (s.hi[bin] - s.lo[bin]) * v;
  }
}

}  // namespace detail

namespace serial {

WeightedGram weighted_gram(const Matrix& x, std::span<const double> y,
                           std::span<const double> w) {
  const std::size_t n = x.rows();
  const std::size_t d = x.cols();
  WeightedGram g;
  g.column_means.assign(d, 0.0);
  g.cross.assign(d, 0.0);
  g.gram = Matrix(d, d);

  for (std::size_t i = 0; i < n; ++i) g.weight_sum += w[i];
  for (std::size_t i = 0; i < n; ++i) {
    g.target_mean += w[i] * y[i];
    for (std::size_t j = 0; j < d; ++j) g.column_means[j] += w[i] * x(i, j);
  }
  g.target_mean /= g.weight_sum;
  for (double& m : g.column_means) m /= g.weight_sum;

  std::vector<double> c(d);
  for (std::size_t i = 0; i < n; ++i) {
    const double cy = y[i] - g.target_mean;
    for (std::size_t j = 0; j < d; ++j) c[j] = x(i, j) - g.column_means[j];
    g.target_ss += w[i] * cy * cy;
    for (std::size_t j = 0; j < d; ++j) {
      g.cross[j] += w[i] * c[j] * cy;
      for (std::size_t k = j; k < d; ++k) g.gram(j, k) += w[i] * c[j] * c[k];
    }
  }
  for (std::size_t j = 0; j < d; ++j) {
    for (std::size_t k = 0; k < j; ++k) g.gram(j, k) = g.gram(k, j);
  }
  return g;
}

std::vector<double> predict_batch(const Matrix& x, const AffineMap& map) {
  std::vector<double> out(x.rows());
  for (std::size_t i = 0; i < x.rows(); ++i) {
    double acc = map.intercept;
    for (std::size_t j = 0; j < x.cols(); ++j) {
      acc += map.coefs[j] * ((x(i, j) - map.offsets[j]) / map.scales[j]);
    }
    out[i] = acc;
  }
  return out;
}

void sample_rows(std::span<const BinSampler> samplers, std::uint64_t seed,
                 std::size_t first_row, Matrix& out) {
  for (std::size_t r = first_row; r < out.rows(); ++r) {
    detail::sample_one_row(samplers, seed, r, out.row(r));
  }
}

}  // namespace serial

}  // namespace martlens::kernels
