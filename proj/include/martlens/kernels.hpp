#pragma once

// Data-parallel inner loops. Every kernel exists twice: a serial reference
// in kernels::serial and an OpenMP variant in kernels::omp. The OpenMP
// variants split work over independent outputs (Gram entries, rows) and
// accumulate each output in the same order as the reference, so the two
// are bit-identical for any thread count.

#include <cstdint>
#include <span>
#include <vector>

#include "martlens/matrix.hpp"

namespace martlens::kernels {

// Weighted, centered second moments of a design matrix and a target.
struct WeightedGram {
  double weight_sum = 0.0;
  std::vector<double> column_means;  // weighted
  double target_mean = 0.0;          // weighted
  Matrix gram;                       // sum_i w_i (x_ij - m_j)(x_ik - m_k)
  std::vector<double> cross;         // sum_i w_i (x_ij - m_j)(y_i - ybar)
  double target_ss = 0.0;            // sum_i w_i (y_i - ybar)^2
};

// y = intercept + sum_j coef_j * (x_j - offset_j) / scale_j
struct AffineMap {
  std::span<const double> offsets;
  std::span<const double> scales;
  std::span<const double> coefs;
  double intercept = 0.0;
};

// Per-feature sampling table for perturbations: cumulative bin
// probabilities plus the value range [lo, hi] of each bin.
struct BinSampler {
  std::vector<double> cumulative;
  std::vector<double> lo;
  std::vector<double> hi;
};

// Seed for the generator that fills row `row` of a perturbation matrix.
std::uint64_t row_seed(std::uint64_t seed, std::uint64_t row);

// Uniform double in [0, 1) with 53 random bits.
double unit_uniform(std::uint64_t bits);

// `y` and `w` must hold x.rows() entries.
namespace serial {
WeightedGram weighted_gram(const Matrix& x, std::span<const double> y,
                           std::span<const double> w);
std::vector<double> predict_batch(const Matrix& x, const AffineMap& map);
// Fills rows [first_row, rows) of `out`; each row draws from its own
// generator seeded by row_seed(seed, row).
void sample_rows(std::span<const BinSampler> samplers, std::uint64_t seed,
                 std::size_t first_row, Matrix& out);
}  // namespace serial

namespace omp {
WeightedGram weighted_gram(const Matrix& x, std::span<const double> y,
                           std::span<const double> w);
std::vector<double> predict_batch(const Matrix& x, const AffineMap& map);
void sample_rows(std::span<const BinSampler> samplers, std::uint64_t seed,
                 std::size_t first_row, Matrix& out);
}  // namespace omp

bool openmp_enabled();

// Dispatching entry points used by the library: OpenMP when built with it,
// serial otherwise.
WeightedGram weighted_gram(const Matrix& x, std::span<const double> y,
                           std::span<const double> w);
std::vector<double> predict_batch(const Matrix& x, const AffineMap& map);
void sample_rows(std::span<const BinSampler> samplers, std::uint64_t seed,
                 std::size_t first_row, Matrix& out);

}  // namespace martlens::kernels
