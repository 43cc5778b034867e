#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "fuseflow/grid.hpp"
#include "fuseflow/png_io.hpp"

namespace fuseflow {

using EdgeMap = Grid<float>;  // per-pixel edge strength in [0, 1]

// Sobel gradient magnitude, 3x3 Gaussian smoothed, normalized by the
// 99th-percentile magnitude and clamped to [0, 1]. Stands in for a learned
// edge detector; callers may load a precomputed edge probability map instead.
inline EdgeMap compute_edge_map(const Image8& image) {
  const int w = image.width(), h = image.height();
  if (w == 0 || h == 0) throw std::invalid_argument("compute_edge_map: empty image");

  Grid<float> mag(w, h, 0.f);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      auto s = [&](int dx, int dy) {
        return static_cast<float>(image.at_clamped(x + dx, y + dy));
      };
      float gx = (s(1, -1) + 2.f * s(1, 0) + s(1, 1)) - (s(-1, -1) + 2.f * s(-1, 0) + s(-1, 1));
      float gy = (s(-1, 1) + 2.f * s(0, 1) + s(1, 1)) - (s(-1, -1) + 2.f * s(0, -1) + s(1, -1));
      mag.at(x, y) = std::sqrt(gx * gx + gy * gy);
    }

  // separable 3x3 Gaussian (1 2 1)/4
  Grid<float> tmp(w, h, 0.f), smooth(w, h, 0.f);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      tmp.at(x, y) = 0.25f * (mag.at_clamped(x - 1, y) + 2.f * mag.at(x, y) +
                              mag.at_clamped(x + 1, y));
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      smooth.at(x, y) = 0.25f * (tmp.at_clamped(x, y - 1) + 2.f * tmp.at(x, y) +
                                 tmp.at_clamped(x, y + 1));

  std::vector<float> sorted(smooth.data(), smooth.data() + smooth.size());
  std::sort(sorted.begin(), sorted.end());
  float p99 = sorted[static_cast<size_t>(0.99 * (sorted.size() - 1))];
  if (p99 <= 0.f) p99 = 1.f;  // flat image: all magnitudes zero

  EdgeMap out(w, h, 0.f);
  for (size_t i = 0; i < out.size(); ++i) out[i] = std::min(1.f, smooth[i] / p99);
  return out;
}

// Single-channel 8- or 16-bit PNG normalized to [0, 1].
inline EdgeMap load_edge_map(const std::string& path) {
  PngImage png = load_png(path);
  if (png.channels != 1) throw std::runtime_error("edge map must be single-channel");
  float scale = png.bit_depth == 16 ? 1.0f / 65535.0f : 1.0f / 255.0f;
  EdgeMap out(png.width, png.height, 0.f);
  for (int y = 0; y < png.height; ++y)
    for (int x = 0; x < png.width; ++x) out.at(x, y) = png.at(x, y) * scale;
  return out;
}

}  // namespace fuseflow
