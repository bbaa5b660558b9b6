#include "martlens/edge_sim.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <random>

#include <fmt/format.h>

#include "martlens/error.hpp"
#include "martlens/fileio.hpp"

namespace martlens::edge {

Frame make_frame(std::uint64_t id, std::uint64_t timestamp_ms, std::size_t width,
                 std::size_t height, std::vector<std::uint8_t> pixels) {
  if (pixels.size() != width * height) {
    throw Error(ErrorKind::kInvalidArgument,
                fmt::format("frame {}: {} pixels for {}x{}", id, pixels.size(), width,
                            height));
  }
  return {id, timestamp_ms, width, height, std::move(pixels)};
}

std::vector<Frame> sample_stride(const std::vector<Frame>& stream, std::size_t stride) {
  if (stride < 1) throw Error(ErrorKind::kInvalidStride, "stride must be >= 1");
  std::vector<Frame> out;
  for (std::size_t i = 0; i < stream.size(); i += stride) out.push_back(stream[i]);
  return out;
}

double mean_abs_diff(const Frame& a, const Frame& b) {
  if (a.width != b.width || a.height != b.height ||
      a.pixels.size() != b.pixels.size()) {
    throw Error(ErrorKind::kDimensionMismatch,
                fmt::format("frames {}x{} and {}x{} differ", a.width, a.height,
                            b.width, b.height));
  }
  if (a.pixels.empty()) return 0.0;
  std::uint64_t total = 0;
  for (std::size_t i = 0; i < a.pixels.size(); ++i) {
    total += static_cast<std::uint64_t>(
        std::abs(static_cast<int>(a.pixels[i]) - static_cast<int>(b.pixels[i])));
  }
  return static_cast<double>(total) / static_cast<double>(a.pixels.size());
}

std::vector<Frame> dedupe_stream(const std::vector<Frame>& stream, double threshold) {
  std::vector<Frame> out;
  for (const Frame& f : stream) {
    if (out.empty() || mean_abs_diff(f, out.back()) > threshold) out.push_back(f);
  }
  return out;
}

// ---------------------------------------------------------------------------
// PGM

std::string encode_pgm(const Frame& frame) {
  std::string out = fmt::format("P5\n# martlens id={} ts={}\n{} {}\n255\n", frame.id,
                                frame.timestamp_ms, frame.width, frame.height);
  out.append(reinterpret_cast<const char*>(frame.pixels.data()), frame.pixels.size());
  return out;
}

Frame decode_pgm(std::string_view bytes) {
  std::size_t pos = 0;
  Frame frame;
  auto fail = [](const std::string& why) -> Frame {
    throw Error(ErrorKind::kParse, "bad PGM: " + why);
  };
  auto skip_space_and_comments = [&] {
    while (pos < bytes.size()) {
      const char c = bytes[pos];
      if (std::isspace(static_cast<unsigned char>(c))) {
        ++pos;
      } else if (c == '#') {
        const std::size_t eol = bytes.find('\n', pos);
        const std::string_view comment =
            bytes.substr(pos, eol == std::string_view::npos ? bytes.size() - pos : eol - pos);
        unsigned long long id = 0, ts = 0;
        const std::string s(comment);
        if (std::sscanf(s.c_str(), "# martlens id=%llu ts=%llu", &id, &ts) == 2) {
          frame.id = id;
          frame.timestamp_ms = ts;
        }
        pos = eol == std::string_view::npos ? bytes.size() : eol + 1;
      } else {
        break;
      }
    }
  };
  auto read_uint = [&]() -> std::size_t {
    skip_space_and_comments();
    std::size_t v = 0;
    const auto res = std::from_chars(bytes.data() + pos, bytes.data() + bytes.size(), v);
    if (res.ec != std::errc()) fail("expected integer");
    pos = static_cast<std::size_t>(res.ptr - bytes.data());
    return v;
  };
  if (bytes.substr(0, 2) != "P5") return fail("missing P5 magic");
  pos = 2;
  frame.width = read_uint();
  frame.height = read_uint();
  const std::size_t maxval = read_uint();
  if (maxval != 255) return fail("only maxval 255 is supported");
  if (pos >= bytes.size() || !std::isspace(static_cast<unsigned char>(bytes[pos]))) {
    return fail("missing separator before raster");
  }
  ++pos;
  const std::size_t need = frame.width * frame.height;
  if (bytes.size() - pos != need) {
    return fail(fmt::format("raster has {} bytes, expected {}", bytes.size() - pos, need));
  }
  frame.pixels.assign(reinterpret_cast<const std::uint8_t*>(bytes.data() + pos),
                      reinterpret_cast<const std::uint8_t*>(bytes.data() + bytes.size()));
  return frame;
}

void write_pgm(const Frame& frame, const std::filesystem::path& path) {
  write_file_atomic(path, encode_pgm(frame));
}

Frame read_pgm(const std::filesystem::path& path) { return decode_pgm(read_file(path)); }

// ---------------------------------------------------------------------------
// Extractor

std::vector<std::string> SyntheticExtractor::feature_names() const {
  return {"WT", "height_cm"};
}

std::vector<double> SyntheticExtractor::extract(const Frame& frame) const {
  if (frame.pixels.empty()) return {50.0, 90.0};
  std::uint64_t sum = 0;
  std::size_t x0 = frame.width, y0 = frame.height, x1 = 0, y1 = 0;
  bool any = false;
  for (std::size_t y = 0; y < frame.height; ++y) {
    for (std::size_t x = 0; x < frame.width; ++x) {
      const std::uint8_t p = frame.pixels[y * frame.width + x];
      sum += p;
      if (p > threshold_) {
        any = true;
        x0 = std::min(x0, x);
        y0 = std::min(y0, y);
        x1 = std::max(x1, x);
        y1 = std::max(y1, y);
      }
    }
  }
  const double mean = static_cast<double>(sum) / static_cast<double>(frame.pixels.size());
  const double area =
      any ? static_cast<double>((x1 - x0 + 1) * (y1 - y0 + 1)) /
                static_cast<double>(frame.pixels.size())
          : 0.0;
  return {50.0 + 900.0 * area + 0.5 * mean, 90.0 + 60.0 * area + 0.1 * mean};
}

std::vector<Frame> gen_synthetic_stream(const StreamOptions& o) {
  std::mt19937_64 gen(o.seed);
  const std::size_t w = o.width, h = o.height;
  const std::size_t box_w = std::max<std::size_t>(2, w / 2 + gen() % (w / 4 + 1));
  const std::size_t box_h = std::max<std::size_t>(2, h / 2 + gen() % (h / 4 + 1));
  const std::size_t max_x = w > box_w ? w - box_w : 0;
  const std::size_t max_y = h > box_h ? h - box_h : 0;
  std::size_t bx = max_x ? gen() % (max_x + 1) : 0;
  std::size_t by = max_y ? gen() % (max_y + 1) : 0;
  const std::size_t hold = std::max<std::size_t>(1, o.hold);

  std::vector<Frame> out;
  out.reserve(o.frames);
  for (std::size_t i = 0; i < o.frames; ++i) {
    if (i > 0 && i % hold == 0) {
      // Random step of the animal within the frame.
      if (max_x) bx = (bx + 1 + gen() % 3) % (max_x + 1);
      if (max_y) by = (by + gen() % 2) % (max_y + 1);
    }
    std::vector<std::uint8_t> px(w * h, 20);
    for (std::size_t y = by; y < by + box_h && y < h; ++y) {
      for (std::size_t x = bx; x < bx + box_w && x < w; ++x) px[y * w + x] = 200;
    }
    out.push_back(make_frame(i, i * o.frame_interval_ms, w, h, std::move(px)));
  }
  return out;
}

}  // namespace martlens::edge
