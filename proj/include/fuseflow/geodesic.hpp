#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <queue>
#include <vector>

#include "fuseflow/edges.hpp"
#include "fuseflow/grid.hpp"

namespace fuseflow {

// Edge-aware shortest paths on the pixel grid. A 4-neighbor step from p to q
// costs 1 + lambda * max(edge(p), edge(q)), so strong edges act as walls and
// influence stays within object boundaries.
inline float geodesic_step_cost(const EdgeMap& edges, int x0, int y0, int x1, int y1,
                                float lambda) {
  return 1.f + lambda * std::max(edges.at(x0, y0), edges.at(x1, y1));
}

namespace detail {

struct GeoNode {
  float dist;
  int index;
  bool operator>(const GeoNode& o) const {
    return dist > o.dist || (dist == o.dist && index > o.index);
  }
};

}  // namespace detail

// Exact Dijkstra distance field from a single source. When stop_after_settled
// is positive, the search halts once that many pixels from `targets` have been
// settled; settled distances are final either way.
inline Grid<float> geodesic_distance_field(const EdgeMap& edges, PixelCoord source,
                                           float lambda,
                                           const Grid<uint8_t>* targets = nullptr,
                                           int stop_after_settled = 0,
                                           Grid<uint8_t>* settled_out = nullptr) {
  const int w = edges.width(), h = edges.height();
  Grid<float> dist(w, h, std::numeric_limits<float>::infinity());
  if (settled_out) *settled_out = Grid<uint8_t>(w, h, 0);
  if (!edges.in_bounds(source)) return dist;

  std::priority_queue<detail::GeoNode, std::vector<detail::GeoNode>, std::greater<>> heap;
  Grid<uint8_t> settled(w, h, 0);
  dist.at(source) = 0.f;
  heap.push({0.f, source.y * w + source.x});
  int found = 0;

  static constexpr int dx4[4] = {-1, 1, 0, 0};
  static constexpr int dy4[4] = {0, 0, -1, 1};
  while (!heap.empty()) {
    auto [d, idx] = heap.top();
    heap.pop();
    int x = idx % w, y = idx / w;
    if (settled.at(x, y)) continue;
    settled.at(x, y) = 1;
    if (targets && targets->at(x, y)) {
      ++found;
      if (stop_after_settled > 0 && found >= stop_after_settled) break;
    }
    for (int n = 0; n < 4; ++n) {
      int nx = x + dx4[n], ny = y + dy4[n];
      if (nx < 0 || nx >= w || ny < 0 || ny >= h || settled.at(nx, ny)) continue;
      float nd = d + geodesic_step_cost(edges, x, y, nx, ny, lambda);
      if (nd < dist.at(nx, ny)) {
        dist.at(nx, ny) = nd;
        heap.push({nd, ny * w + nx});
      }
    }
  }
  if (settled_out) *settled_out = std::move(settled);
  return dist;
}

}  // namespace fuseflow
