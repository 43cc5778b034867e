#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <vector>

#include "fuseflow/grid.hpp"

namespace fuseflow {

// Scene flow at a pixel of the reference view: optical flow (u, v) plus the
// stereo disparities at both timestamps.
struct SceneFlowVector {
  float u = 0.f;
  float v = 0.f;
  float d0 = 0.f;
  float d1 = 0.f;

  bool operator==(const SceneFlowVector&) const = default;
};

// Dense scene flow grid with per-pixel validity. Invalidity is carried by the
// mask, never by sentinel values. seed_mask marks pixels holding a LiDAR
// measurement; motion_mask tracks whether (u, v, d1) is still trusted (it can
// be cleared for seeds that fail the forward-backward check while their d0
// survives as a geometry-only measurement).
class SceneFlowField {
 public:
  SceneFlowField() = default;
  SceneFlowField(int width, int height)
      : data_(width, height),
        valid_(width, height, 0),
        seed_(width, height, 0),
        motion_(width, height, 0) {}

  int width() const { return data_.width(); }
  int height() const { return data_.height(); }

  Grid<SceneFlowVector>& data() { return data_; }
  const Grid<SceneFlowVector>& data() const { return data_; }
  Grid<uint8_t>& validity() { return valid_; }
  const Grid<uint8_t>& validity() const { return valid_; }
  Grid<uint8_t>& seed_mask() { return seed_; }
  const Grid<uint8_t>& seed_mask() const { return seed_; }
  Grid<uint8_t>& motion_mask() { return motion_; }
  const Grid<uint8_t>& motion_mask() const { return motion_; }

  bool valid(int x, int y) const { return valid_.at(x, y) != 0; }
  bool is_seed(int x, int y) const { return seed_.at(x, y) != 0; }
  bool motion_valid(int x, int y) const { return motion_.at(x, y) != 0; }

  void set(int x, int y, const SceneFlowVector& sf, bool seed = false) {
    data_.at(x, y) = sf;
    valid_.at(x, y) = 1;
    motion_.at(x, y) = 1;
    if (seed) seed_.at(x, y) = 1;
  }

  void invalidate(int x, int y) {
    valid_.at(x, y) = 0;
    motion_.at(x, y) = 0;
    seed_.at(x, y) = 0;
  }

  double density() const {
    if (valid_.empty()) return 0.0;
    size_t n = 0;
    for (size_t i = 0; i < valid_.size(); ++i) n += valid_[i] ? 1 : 0;
    return static_cast<double>(n) / static_cast<double>(valid_.size());
  }

  bool operator==(const SceneFlowField&) const = default;

 private:
  Grid<SceneFlowVector> data_;
  Grid<uint8_t> valid_;
  Grid<uint8_t> seed_;
  Grid<uint8_t> motion_;
};

// Image-aligned sparse disparity measurements (one LiDAR frame).
struct SparseDepthEntry {
  int x = 0;
  int y = 0;
  float disparity = 0.f;
};

class SparseDepthMap {
 public:
  SparseDepthMap() = default;
  SparseDepthMap(int width, int height) : w_(width), h_(height) {}

  int width() const { return w_; }
  int height() const { return h_; }
  const std::vector<SparseDepthEntry>& entries() const { return entries_; }
  bool empty() const { return entries_.empty(); }
  size_t size() const { return entries_.size(); }

  void add(int x, int y, float disparity) {
    if (x < 0 || x >= w_ || y < 0 || y >= h_)
      throw std::invalid_argument("SparseDepthMap: entry out of bounds");
    if (disparity <= 0.f)
      throw std::invalid_argument("SparseDepthMap: disparity must be positive");
    entries_.push_back({x, y, disparity});
  }

  // Grid view with NaN at unmeasured pixels; later entries for the same pixel
  // would violate the one-per-pixel invariant, callers resolve collisions
  // before add().
  Grid<float> rasterize() const {
    Grid<float> g(w_, h_, std::numeric_limits<float>::quiet_NaN());
    for (const auto& e : entries_) g.at(e.x, e.y) = e.disparity;
    return g;
  }

 private:
  int w_ = 0;
  int h_ = 0;
  std::vector<SparseDepthEntry> entries_;
};

// Two rectified stereo pairs plus the two aligned sparse LiDAR frames.
// Images are stored as single-channel luminance (Rec.601 conversion on load).
struct CalibratedFrameSet {
  Image8 left0;
  Image8 left1;
  Image8 right0;
  Image8 right1;
  SparseDepthMap lidar0;
  SparseDepthMap lidar1;
  double baseline = 0.54;      // meters
  double focal_length = 721.5; // pixels

  void validate() const {
    int w = left0.width(), h = left0.height();
    if (w == 0 || h == 0) throw std::invalid_argument("frame set: empty images");
    auto same = [&](const Image8& img) { return img.width() == w && img.height() == h; };
    if (!same(left1) || !same(right0) || !same(right1))
      throw std::invalid_argument("frame set: image dimensions differ");
    if ((lidar0.width() != w || lidar0.height() != h) && !lidar0.empty())
      throw std::invalid_argument("frame set: lidar0 dimensions differ");
    if ((lidar1.width() != w || lidar1.height() != h) && !lidar1.empty())
      throw std::invalid_argument("frame set: lidar1 dimensions differ");
    if (baseline <= 0.0) throw std::invalid_argument("frame set: baseline must be positive");
    if (focal_length <= 0.0) throw std::invalid_argument("frame set: focal length must be positive");
  }
};

inline uint8_t rec601_luminance(uint8_t r, uint8_t g, uint8_t b) {
  double y = 0.299 * r + 0.587 * g + 0.114 * b;
  int v = static_cast<int>(std::lround(y));
  return static_cast<uint8_t>(v < 0 ? 0 : (v > 255 ? 255 : v));
}

inline double disparity_to_depth(double disparity_px, const CalibratedFrameSet& calib) {
  if (disparity_px <= 0.0)
    throw std::domain_error("disparity_to_depth: disparity must be positive");
  return calib.focal_length * calib.baseline / disparity_px;
}

inline double depth_to_disparity(double depth_m, const CalibratedFrameSet& calib) {
  if (depth_m <= 0.0) throw std::domain_error("depth_to_disparity: depth must be positive");
  return calib.focal_length * calib.baseline / depth_m;
}

}  // namespace fuseflow
