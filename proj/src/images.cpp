#include "kanerva/images.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "kanerva/binary_io.hpp"
#include "kanerva/errors.hpp"

namespace kanerva::images {

namespace {

std::uint8_t to_byte(double v) { return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0)); }

void write_p5(const std::filesystem::path& path, const std::vector<std::uint8_t>& pixels, int width, int height) {
  io::Writer out(path);
  out.str("P5\n" + std::to_string(width) + " " + std::to_string(height) + "\n255\n");
  out.bytes(pixels);
  out.finish();
}

}  // namespace

void write_pgm(const std::filesystem::path& path, const Vector& pattern, int width, int height) {
  if (pattern.size() != static_cast<Index>(width) * height) throw DimensionMismatch("write_pgm: pattern size");
  std::vector<std::uint8_t> px(static_cast<std::size_t>(pattern.size()));
  for (Index i = 0; i < pattern.size(); ++i) px[static_cast<std::size_t>(i)] = to_byte(pattern(i));
  write_p5(path, px, width, height);
}

void write_montage(const std::filesystem::path& path, const std::vector<std::vector<Vector>>& grid, int width,
                   int height) {
  const int rows = static_cast<int>(grid.size());
  int cols = 0;
  for (const auto& r : grid) cols = std::max(cols, static_cast<int>(r.size()));
  const int W = cols * (width + 1) + 1;
  const int H = rows * (height + 1) + 1;
  std::vector<std::uint8_t> px(static_cast<std::size_t>(W) * static_cast<std::size_t>(H), 128);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < static_cast<int>(grid[static_cast<std::size_t>(r)].size()); ++c) {
      const Vector& p = grid[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)];
      if (p.size() != static_cast<Index>(width) * height) throw DimensionMismatch("write_montage: pattern size");
      for (int y = 0; y < height; ++y)
        for (int x = 0; x < width; ++x) {
          const int gy = r * (height + 1) + 1 + y;
          const int gx = c * (width + 1) + 1 + x;
          px[static_cast<std::size_t>(gy) * static_cast<std::size_t>(W) + static_cast<std::size_t>(gx)] =
              to_byte(p(y * width + x));
        }
    }
  write_p5(path, px, W, H);
}

Vector threshold(const Vector& probabilities) { return (probabilities.array() >= 0.5).cast<double>(); }

}  // namespace kanerva::images
