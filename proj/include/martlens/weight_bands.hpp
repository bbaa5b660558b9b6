#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "martlens/linreg.hpp"

namespace martlens::bands {

// Contiguous weight classes starting at 0: [0, w], (w, 2w], ...
struct BandScheme {
  double width_kg = 0.0;
  int num_classes = 0;

  // "0-200", "201-400", ... with integer endpoints.
  std::vector<std::string> labels() const;
  std::string label(int cls) const;
};

// Throws Error(kInvalidScheme) unless width > 0 and num_classes >= 2.
BandScheme make_bands(double width_kg, int num_classes);

struct BandAssignment {
  int index = 0;
  // Weight was above the top band and clamped into it.
  bool overflow = false;
};

// ceil(weight / width) - 1, clamped to [0, num_classes - 1].
BandAssignment assign_band(double weight_kg, const BandScheme& scheme);

enum class Pov { kSide, kFront, kBack, kCross };
inline constexpr std::array<Pov, 4> kAllPovs = {Pov::kSide, Pov::kFront, Pov::kBack,
                                                Pov::kCross};
std::string_view pov_name(Pov pov);
Pov parse_pov(std::string_view text);

struct LabeledSample {
  std::vector<double> features;
  double true_weight_kg = 0.0;
  Pov pov = Pov::kSide;
};

// Regress-then-bin: a linear model from image-derived features to kg.
// Throws Error(kSingularMatrix) when no feature varies (or the solve is
// rank deficient at lambda = 0).
linreg::LinearModel train_band_model(const std::vector<LabeledSample>& train,
                                     double lambda = 0.0);

struct BandEvalReport {
  BandScheme scheme;
  double accuracy = 0.0;
  std::vector<std::vector<std::size_t>> confusion;  // [true][predicted]
  std::map<Pov, double> per_pov_accuracy;           // only POVs present
  std::map<Pov, std::size_t> per_pov_count;
  std::size_t overflow_count = 0;
  std::size_t total = 0;

  std::string to_json() const;
  std::string to_table() const;
};

BandEvalReport evaluate_bands(const linreg::LinearModel& model,
                              const std::vector<LabeledSample>& test,
                              const BandScheme& scheme);

// Synthetic image-feature generator. Informative views observe
// (true_weight + N(0, sigma)) plus `noise_dims` pure-noise columns; views
// listed in `noise_povs` see only noise in every column.
struct BandDataOptions {
  std::size_t n = 2000;
  std::uint64_t seed = 1;
  double signal_sigma = 5.0;
  std::size_t noise_dims = 2;
  double min_weight_kg = 50.0;
  double max_weight_kg = 800.0;
  // Empty: every sample is side view.
  std::vector<Pov> povs;
  std::vector<Pov> noise_povs;
};
std::vector<LabeledSample> gen_band_samples(const BandDataOptions& options);

// CSV: f0..f{k-1},true_weight_kg,pov
std::string band_samples_to_csv(const std::vector<LabeledSample>& samples);
std::vector<LabeledSample> parse_band_samples_csv(std::string_view text);
std::vector<LabeledSample> load_band_samples(const std::filesystem::path& path);

}  // namespace martlens::bands
