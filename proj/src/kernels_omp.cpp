#include <cstdint>

#include "martlens/kernels.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace martlens::kernels {

namespace detail {
void sample_one_row(std::span<const BinSampler> samplers, std::uint64_t seed,
                    std::size_t r, std::span<double> out_row);
}  // namespace detail

namespace omp {

WeightedGram weighted_gram(const Matrix& x, std::span<const double> y,
                           std::span<const double> w) {
  const std::int64_t n = static_cast<std::int64_t>(x.rows());
  const std::int64_t d = static_cast<std::int64_t>(x.cols());
  WeightedGram g;
  g.column_means.assign(d, 0.0);
  g.cross.assign(d, 0.0);
  g.gram = Matrix(d, d);

  for (std::int64_t i = 0; i < n; ++i) g.weight_sum += w[i];
  for (std::int64_t i = 0; i < n; ++i) g.target_mean += w[i] * y[i];
  g.target_mean /= g.weight_sum;

#pragma omp parallel for schedule(static)
  for (std::int64_t j = 0; j < d; ++j) {
    double acc = 0.0;
    for (std::int64_t i = 0; i < n; ++i) acc += w[i] * x(i, j);
    g.column_means[j] = acc / g.weight_sum;
  }

  // One task per upper-triangle entry plus one per cross term; each
  // accumulates over rows in ascending order like the serial reference.
  const std::int64_t pairs = d * (d + 1) / 2;
  const std::int64_t tasks = pairs + d + 1;
  const double ybar = g.target_mean;
  double target_ss = 0.0;
#pragma omp parallel for schedule(dynamic, 1)
  for (std::int64_t t = 0; t < tasks; ++t) {
    if (t < pairs) {
      std::int64_t j = 0;
      std::int64_t rem = t;
      while (rem >= d - j) {
        rem -= d - j;
        ++j;
      }
      const std::int64_t k = j + rem;
      const double mj = g.column_means[j];
      const double mk = g.column_means[k];
      double acc = 0.0;
      for (std::int64_t i = 0; i < n; ++i) {
        acc += w[i] * (x(i, j) - mj) * (x(i, k) - mk);
      }
      g.gram(j, k) = acc;
      g.gram(k, j) = acc;
    } else if (t < pairs + d) {
      const std::int64_t j = t - pairs;
      const double mj = g.column_means[j];
      double acc = 0.0;
      for (std::int64_t i = 0; i < n; ++i) {
        acc += w[i] * (x(i, j) - mj) * (y[i] - ybar);
      }
      g.cross[j] = acc;
    } else {
      double acc = 0.0;
      for (std::int64_t i = 0; i < n; ++i) {
        const double cy = y[i] - ybar;
        acc += w[i] * cy * cy;
      }
      target_ss = acc;
    }
  }
  g.target_ss = target_ss;
  return g;
}

std::vector<double> predict_batch(const Matrix& x, const AffineMap& map) {
  const std::int64_t n = static_cast<std::int64_t>(x.rows());
  std::vector<double> out(x.rows());
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < n; ++i) {
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
  const std::int64_t first = static_cast<std::int64_t>(first_row);
  const std::int64_t n = static_cast<std::int64_t>(out.rows());
#pragma omp parallel for schedule(static)
  for (std::int64_t r = first; r < n; ++r) {
    detail::sample_one_row(samplers, seed, static_cast<std::size_t>(r),
                           out.row(r));
  }
}

}  // namespace omp

bool openmp_enabled() {
#ifdef _OPENMP
  return true;
#else
  return false;
#endif
}

WeightedGram weighted_gram(const Matrix& x, std::span<const double> y,
                           std::span<const double> w) {
  return openmp_enabled() ? omp::weighted_gram(x, y, w)
                          : serial::weighted_gram(x, y, w);
}

std::vector<double> predict_batch(const Matrix& x, const AffineMap& map) {
  return openmp_enabled() ? omp::predict_batch(x, map)
                          : serial::predict_batch(x, map);
}

void sample_rows(std::span<const BinSampler> samplers, std::uint64_t seed,
                 std::size_t first_row, Matrix& out) {
  if (openmp_enabled()) {
    omp::sample_rows(samplers, seed, first_row, out);
  } else {
    serial::sample_rows(samplers, seed, first_row, out);
  }
}

}  // namespace martlens::kernels
