#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <vector>

namespace fuseflow {

struct PixelCoord {
  int x = 0;
  int y = 0;

  bool operator==(const PixelCoord&) const = default;
};

// Dense row-major grid with value semantics. The common currency for images,
// masks, label maps and per-pixel fields.
template <typename T>
class Grid {
 public:
  Grid() = default;
  Grid(int width, int height, T fill = T{})
      : w_(width), h_(height), data_(static_cast<size_t>(width) * height, fill) {
    if (width < 0 || height < 0) throw std::invalid_argument("Grid: negative dimensions");
  }

  int width() const { return w_; }
  int height() const { return h_; }
  size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  bool in_bounds(int x, int y) const { return x >= 0 && x < w_ && y >= 0 && y < h_; }
  bool in_bounds(PixelCoord p) const { return in_bounds(p.x, p.y); }

  T& at(int x, int y) { return data_[static_cast<size_t>(y) * w_ + x]; }
  const T& at(int x, int y) const { return data_[static_cast<size_t>(y) * w_ + x]; }
  T& at(PixelCoord p) { return at(p.x, p.y); }
  const T& at(PixelCoord p) const { return at(p.x, p.y); }

  const T& at_clamped(int x, int y) const {
    return at(std::clamp(x, 0, w_ - 1), std::clamp(y, 0, h_ - 1));
  }

  T& operator[](size_t i) { return data_[i]; }
  const T& operator[](size_t i) const { return data_[i]; }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }

  void fill(const T& v) { std::fill(data_.begin(), data_.end(), v); }

  bool operator==(const Grid&) const = default;

 private:
  int w_ = 0;
  int h_ = 0;
  std::vector<T> data_;
};

using Image8 = Grid<uint8_t>;  // single-channel 8-bit luminance

}  // namespace fuseflow
