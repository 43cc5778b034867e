#pragma once

#include <algorithm>
#include <bit>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <vector>

#include "fuseflow/grid.hpp"
#include "fuseflow/kitti_io.hpp"
#include "fuseflow/parallel.hpp"

namespace fuseflow {

struct SgmConfig {
  int census_window = 5;       // 5x5 census, 24-bit signature
  int path_count = 8;
  int penalty_small = 10;      // P1
  int penalty_large = 120;     // P2
  int max_disparity = 128;
  int left_right_tolerance = 1;

  void validate() const {
    if (census_window != 5) throw std::invalid_argument("sgm: census window must be 5");
    if (path_count != 4 && path_count != 8)
      throw std::invalid_argument("sgm: path count must be 4 or 8");
    if (penalty_small <= 0 || penalty_large < penalty_small)
      throw std::invalid_argument("sgm: require P2 >= P1 > 0");
    if (max_disparity < 1) throw std::invalid_argument("sgm: max_disparity must be >= 1");
  }
};

namespace detail {

inline Grid<uint32_t> census_transform(const Image8& img) {
  Grid<uint32_t> out(img.width(), img.height(), 0);
  for (int y = 0; y < img.height(); ++y)
    for (int x = 0; x < img.width(); ++x) {
      uint32_t sig = 0;
      uint8_t center = img.at(x, y);
      for (int dy = -2; dy <= 2; ++dy)
        for (int dx = -2; dx <= 2; ++dx) {
          if (dx == 0 && dy == 0) continue;
          sig = (sig << 1) | (img.at_clamped(x + dx, y + dy) < center ? 1u : 0u);
        }
      out.at(x, y) = sig;
    }
  return out;
}

}  // namespace detail

// Census-based semi-global matching with a winner-take-all readout and a
// left-right cross check. Used as the reference disparity for the first
// consistency stage.
inline DisparityImage compute_reference_disparity(const Image8& left, const Image8& right,
                                                  const SgmConfig& cfg, int workers = 1) {
  cfg.validate();
  if (left.width() != right.width() || left.height() != right.height())
    throw std::invalid_argument("sgm: image dimensions differ");
  const int w = left.width(), h = left.height();
  const int D = std::min(cfg.max_disparity + 1, w);  // candidate count, d in [0, D)

  Grid<uint32_t> cl = detail::census_transform(left);
  Grid<uint32_t> cr = detail::census_transform(right);

  // matching cost volume C(x, y, d) = Hamming(census_l(x), census_r(x-d))
  std::vector<uint8_t> cost(static_cast<size_t>(w) * h * D);
  parallel_for(0, h, workers, [&](int y0, int y1) {
    for (int y = y0; y < y1; ++y)
      for (int x = 0; x < w; ++x) {
        size_t base = (static_cast<size_t>(y) * w + x) * D;
        for (int d = 0; d < D; ++d) {
          int xr = x - d;
          uint32_t diff = cl.at(x, y) ^ (xr >= 0 ? cr.at(xr, y) : cr.at(0, y));
          cost[base + d] = static_cast<uint8_t>(std::popcount(diff));
        }
      }
  });

  std::vector<uint16_t> aggregated(static_cast<size_t>(w) * h * D, 0);

  // One directional pass of the standard SGM recursion.
  auto sweep = [&](int dir_x, int dir_y) {
    std::vector<uint16_t> prev_row(static_cast<size_t>(w) * D, 0);
    std::vector<uint16_t> cur_row(static_cast<size_t>(w) * D, 0);
    int y_begin = dir_y >= 0 ? 0 : h - 1;
    int y_end = dir_y >= 0 ? h : -1;
    int y_step = dir_y >= 0 ? 1 : -1;
    int x_begin = dir_x >= 0 ? 0 : w - 1;
    int x_end = dir_x >= 0 ? w : -1;
    int x_step = dir_x >= 0 ? 1 : -1;
    bool first_row = true;
    for (int y = y_begin; y != y_end; y += y_step) {
      for (int x = x_begin; x != x_end; x += x_step) {
        size_t base = (static_cast<size_t>(y) * w + x) * D;
        const uint16_t* prev = nullptr;
        int px = x - dir_x;
        if (dir_y == 0) {
          if (px >= 0 && px < w) prev = &cur_row[static_cast<size_t>(px) * D];
        } else if (!first_row && px >= 0 && px < w) {
          prev = &prev_row[static_cast<size_t>(px) * D];
        }
        uint16_t* out = &cur_row[static_cast<size_t>(x) * D];
        if (!prev) {
          for (int d = 0; d < D; ++d) out[d] = cost[base + d];
        } else {
          uint16_t prev_min = *std::min_element(prev, prev + D);
          for (int d = 0; d < D; ++d) {
            int best = prev[d];
            if (d > 0) best = std::min(best, prev[d - 1] + cfg.penalty_small);
            if (d + 1 < D) best = std::min(best, prev[d + 1] + cfg.penalty_small);
            best = std::min<int>(best, prev_min + cfg.penalty_large);
            out[d] = static_cast<uint16_t>(cost[base + d] + best - prev_min);
          }
        }
        for (int d = 0; d < D; ++d) aggregated[base + d] += out[d];
      }
      std::swap(prev_row, cur_row);
      first_row = false;
    }
  };

  sweep(1, 0);
  sweep(-1, 0);
  sweep(0, 1);
  sweep(0, -1);
  if (cfg.path_count == 8) {
    sweep(1, 1);
    sweep(-1, 1);
    sweep(1, -1);
    sweep(-1, -1);
  }

  // winner-take-all for the left view and, from the same aggregated volume,
  // for the right view (S_right(x, d) = S_left(x + d, d))
  Grid<int> disp_left(w, h, -1);
  Grid<int> disp_right(w, h, -1);
  parallel_for(0, h, workers, [&](int y0, int y1) {
    for (int y = y0; y < y1; ++y) {
      for (int x = 0; x < w; ++x) {
        size_t base = (static_cast<size_t>(y) * w + x) * D;
        int best_d = 0;
        uint32_t best = aggregated[base];
        for (int d = 1; d < D; ++d)
          if (aggregated[base + d] < best) {
            best = aggregated[base + d];
            best_d = d;
          }
        disp_left.at(x, y) = best_d;
      }
      for (int x = 0; x < w; ++x) {
        int best_d = -1;
        uint32_t best = std::numeric_limits<uint32_t>::max();
        for (int d = 0; d < D; ++d) {
          int xl = x + d;
          if (xl >= w) break;
          uint32_t v = aggregated[(static_cast<size_t>(y) * w + xl) * D + d];
          if (v < best) {
            best = v;
            best_d = d;
          }
        }
        disp_right.at(x, y) = best_d;
      }
    }
  });

  DisparityImage out(w, h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      int d = disp_left.at(x, y);
      if (d <= 0) continue;  // d == 0 carries no depth and cannot seed a check
      int xr = x - d;
      if (xr < 0) continue;
      int dr = disp_right.at(xr, y);
      if (dr < 0 || std::abs(dr - d) > cfg.left_right_tolerance) continue;
      out.set(x, y, static_cast<float>(d));
    }
  return out;
}

}  // namespace fuseflow
