#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

namespace martlens::edge {

// Grayscale frame, row-major, one byte per pixel.
struct Frame {
  std::uint64_t id = 0;
  std::uint64_t timestamp_ms = 0;
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<std::uint8_t> pixels;

  friend bool operator==(const Frame&, const Frame&) = default;
};

// Throws Error(kInvalidArgument) when pixels.size() != width * height.
Frame make_frame(std::uint64_t id, std::uint64_t timestamp_ms, std::size_t width,
                 std::size_t height, std::vector<std::uint8_t> pixels);

// Keeps indices 0, stride, 2*stride, ... Throws Error(kInvalidStride) when
// stride < 1.
std::vector<Frame> sample_stride(const std::vector<Frame>& stream, std::size_t stride);

// Mean over pixels of |a - b| in gray levels. Throws
// Error(kDimensionMismatch) for differing sizes.
double mean_abs_diff(const Frame& a, const Frame& b);

// Keeps frame i iff i == 0 or mean_abs_diff(frame i, last kept) > threshold.
std::vector<Frame> dedupe_stream(const std::vector<Frame>& stream, double threshold);

// Binary PGM (P5, maxval 255). The writer stores id and timestamp in a
// "# martlens id=<id> ts=<ms>" comment that the reader picks up again.
std::string encode_pgm(const Frame& frame);
Frame decode_pgm(std::string_view bytes);
void write_pgm(const Frame& frame, const std::filesystem::path& path);
Frame read_pgm(const std::filesystem::path& path);

// Seam for vision models: frame in, feature vector out.
class FeatureExtractor {
 public:
  virtual ~FeatureExtractor() = default;
  virtual std::vector<std::string> feature_names() const = 0;
  virtual std::vector<double> extract(const Frame& frame) const = 0;
};

// Deterministic stand-in. With m = mean intensity (0..255) and a = area
// fraction of the bounding box of pixels above `threshold`:
//   WT        = 50 + 900 * a + 0.5 * m
//   height_cm = 90 +  60 * a + 0.1 * m
class SyntheticExtractor : public FeatureExtractor {
 public:
  explicit SyntheticExtractor(std::uint8_t threshold = 128) : threshold_(threshold) {}

  std::vector<std::string> feature_names() const override;
  std::vector<double> extract(const Frame& frame) const override;

 private:
  std::uint8_t threshold_;
};

struct StreamOptions {
  std::size_t frames = 30;
  std::size_t width = 64;
  std::size_t height = 48;
  std::uint64_t seed = 7;
  std::uint64_t frame_interval_ms = 40;
  // Frames per static segment: the animal holds still this long before
  // moving, which produces runs of identical frames.
  std::size_t hold = 3;
};

// A bright rectangle (the animal) on a dark background, moving in steps.
std::vector<Frame> gen_synthetic_stream(const StreamOptions& options);

}  // namespace martlens::edge
