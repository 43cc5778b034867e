#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "fuseflow/core.hpp"
#include "fuseflow/png_io.hpp"

namespace fuseflow {

// Disparity raster: 16-bit grayscale PNG, value/256, 0 = invalid.
class DisparityImage {
 public:
  DisparityImage() = default;
  DisparityImage(int width, int height)
      : values_(width, height, 0.f), valid_(width, height, 0) {}

  int width() const { return values_.width(); }
  int height() const { return values_.height(); }
  bool valid(int x, int y) const { return valid_.at(x, y) != 0; }
  float at(int x, int y) const { return values_.at(x, y); }

  void set(int x, int y, float disparity) {
    if (disparity <= 0.f)
      throw std::invalid_argument("DisparityImage: disparity must be positive");
    values_.at(x, y) = disparity;
    valid_.at(x, y) = 1;
  }
  void clear(int x, int y) {
    values_.at(x, y) = 0.f;
    valid_.at(x, y) = 0;
  }

  size_t valid_count() const {
    size_t n = 0;
    for (size_t i = 0; i < valid_.size(); ++i) n += valid_[i] ? 1 : 0;
    return n;
  }

  bool operator==(const DisparityImage&) const = default;

 private:
  Grid<float> values_;
  Grid<uint8_t> valid_;
};

// Optical flow raster: 16-bit RGB PNG, u=(R-2^15)/64, v=(G-2^15)/64, B=validity.
class FlowImage {
 public:
  FlowImage() = default;
  FlowImage(int width, int height)
      : u_(width, height, 0.f), v_(width, height, 0.f), valid_(width, height, 0) {}

  int width() const { return u_.width(); }
  int height() const { return u_.height(); }
  bool valid(int x, int y) const { return valid_.at(x, y) != 0; }
  float u(int x, int y) const { return u_.at(x, y); }
  float v(int x, int y) const { return v_.at(x, y); }

  void set(int x, int y, float u, float v) {
    u_.at(x, y) = u;
    v_.at(x, y) = v;
    valid_.at(x, y) = 1;
  }
  void clear(int x, int y) {
    u_.at(x, y) = 0.f;
    v_.at(x, y) = 0.f;
    valid_.at(x, y) = 0;
  }

  bool operator==(const FlowImage&) const = default;

 private:
  Grid<float> u_;
  Grid<float> v_;
  Grid<uint8_t> valid_;
};

// --- disparity codec -------------------------------------------------------

inline DisparityImage decode_disparity(const PngImage& png) {
  if (png.channels != 1 || png.bit_depth != 16)
    throw std::runtime_error("disparity decode: expected 16-bit single-channel PNG");
  DisparityImage img(png.width, png.height);
  for (int y = 0; y < png.height; ++y)
    for (int x = 0; x < png.width; ++x) {
      uint16_t raw = png.at(x, y);
      if (raw > 0) img.set(x, y, raw / 256.0f);
    }
  return img;
}

inline PngImage encode_disparity(const DisparityImage& img) {
  PngImage png;
  png.width = img.width();
  png.height = img.height();
  png.channels = 1;
  png.bit_depth = 16;
  png.samples.assign(static_cast<size_t>(png.width) * png.height, 0);
  for (int y = 0; y < png.height; ++y)
    for (int x = 0; x < png.width; ++x) {
      if (!img.valid(x, y)) continue;
      long raw = std::lround(static_cast<double>(img.at(x, y)) * 256.0);
      if (raw < 1) raw = 1;  // keep valid pixels distinguishable from the 0 sentinel
      if (raw > 65535) raw = 65535;
      png.at(x, y) = static_cast<uint16_t>(raw);
    }
  return png;
}

inline DisparityImage load_disparity(const std::string& path) {
  return decode_disparity(load_png(path));
}
inline void save_disparity(const std::string& path, const DisparityImage& img) {
  save_png(path, encode_disparity(img));
}

// --- flow codec -------------------------------------------------------------

inline FlowImage decode_flow(const PngImage& png) {
  if (png.channels != 3 || png.bit_depth != 16)
    throw std::runtime_error("flow decode: expected 16-bit 3-channel PNG");
  FlowImage img(png.width, png.height);
  for (int y = 0; y < png.height; ++y)
    for (int x = 0; x < png.width; ++x) {
      if (png.at(x, y, 2) == 0) continue;
      float u = (static_cast<int>(png.at(x, y, 0)) - 32768) / 64.0f;
      float v = (static_cast<int>(png.at(x, y, 1)) - 32768) / 64.0f;
      img.set(x, y, u, v);
    }
  return img;
}

inline PngImage encode_flow(const FlowImage& img) {
  PngImage png;
  png.width = img.width();
  png.height = img.height();
  png.channels = 3;
  png.bit_depth = 16;
  png.samples.assign(static_cast<size_t>(png.width) * png.height * 3, 0);
  auto pack = [](double value) {
    long raw = std::lround(value * 64.0) + 32768;
    if (raw < 0) raw = 0;
    if (raw > 65535) raw = 65535;
    return static_cast<uint16_t>(raw);
  };
  for (int y = 0; y < png.height; ++y)
    for (int x = 0; x < png.width; ++x) {
      if (!img.valid(x, y)) continue;
      png.at(x, y, 0) = pack(img.u(x, y));
      png.at(x, y, 1) = pack(img.v(x, y));
      png.at(x, y, 2) = 1;
    }
  return png;
}

inline FlowImage load_flow(const std::string& path) { return decode_flow(load_png(path)); }
inline void save_flow(const std::string& path, const FlowImage& img) {
  save_png(path, encode_flow(img));
}

// --- sparse LiDAR preparation -----------------------------------------------

inline SparseDepthMap extract_sparse_measurements(const DisparityImage& img) {
  SparseDepthMap map(img.width(), img.height());
  for (int y = 0; y < img.height(); ++y)
    for (int x = 0; x < img.width(); ++x)
      if (img.valid(x, y)) map.add(x, y, img.at(x, y));
  return map;
}

// Reduces a dense disparity map to one measurement per window x window cell:
// the valid pixel nearest (Euclidean) to the cell center, row-major on ties.
inline SparseDepthMap sparsify_depth(const DisparityImage& dense, int window) {
  if (window < 3 || window % 2 == 0)
    throw std::invalid_argument("sparsify_depth: window must be odd and >= 3");
  SparseDepthMap map(dense.width(), dense.height());
  int half = window / 2;
  for (int cy = 0; cy < dense.height(); cy += window) {
    for (int cx = 0; cx < dense.width(); cx += window) {
      int center_x = cx + half;
      int center_y = cy + half;
      long best = -1;
      int best_x = 0, best_y = 0;
      for (int y = cy; y < std::min(cy + window, dense.height()); ++y) {
        for (int x = cx; x < std::min(cx + window, dense.width()); ++x) {
          if (!dense.valid(x, y)) continue;
          long dx = x - center_x, dy = y - center_y;
          long d2 = dx * dx + dy * dy;
          if (best < 0 || d2 < best) {
            best = d2;
            best_x = x;
            best_y = y;
          }
        }
      }
      if (best >= 0) map.add(best_x, best_y, dense.at(best_x, best_y));
    }
  }
  return map;
}

// Splats t0-aligned future-frame measurements to their t1 positions using the
// ground-truth flow. Collisions keep the larger disparity (the nearer surface
// wins), which is the occlusion handling rule.
inline DisparityImage dewarp_future_depth(const DisparityImage& d1_aligned_to_t0,
                                          const FlowImage& gt_flow) {
  if (d1_aligned_to_t0.width() != gt_flow.width() ||
      d1_aligned_to_t0.height() != gt_flow.height())
    throw std::invalid_argument("dewarp_future_depth: dimension mismatch");
  DisparityImage out(d1_aligned_to_t0.width(), d1_aligned_to_t0.height());
  for (int y = 0; y < out.height(); ++y)
    for (int x = 0; x < out.width(); ++x) {
      if (!d1_aligned_to_t0.valid(x, y) || !gt_flow.valid(x, y)) continue;
      int tx = static_cast<int>(std::lround(x + gt_flow.u(x, y)));
      int ty = static_cast<int>(std::lround(y + gt_flow.v(x, y)));
      if (tx < 0 || tx >= out.width() || ty < 0 || ty >= out.height()) continue;
      float d = d1_aligned_to_t0.at(x, y);
      if (!out.valid(tx, ty) || d > out.at(tx, ty)) out.set(tx, ty, d);
    }
  return out;
}

inline DisparityImage sparse_to_disparity_image(const SparseDepthMap& map) {
  DisparityImage img(map.width(), map.height());
  for (const auto& e : map.entries()) img.set(e.x, e.y, e.disparity);
  return img;
}

}  // namespace fuseflow
