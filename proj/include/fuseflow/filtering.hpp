#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "fuseflow/core.hpp"
#include "fuseflow/kitti_io.hpp"
#include "fuseflow/matching.hpp"
#include "fuseflow/sgm.hpp"

namespace fuseflow {

struct FilterConfig {
  float stage1_tolerance = 3.f;    // px against the SGM reference
  float fb_tolerance = 1.f;        // px per component, forward-backward
  float cluster_similarity = 3.f;  // px per component
  int min_cluster_size = 30;       // pixels
  SgmConfig sgm;

  void validate() const {
    if (stage1_tolerance <= 0.f || fb_tolerance <= 0.f || cluster_similarity <= 0.f)
      throw std::invalid_argument("filter: tolerances must be positive");
    if (min_cluster_size < 1)
      throw std::invalid_argument("filter: min_cluster_size must be >= 1");
    sgm.validate();
  }
};

struct Match {
  PixelCoord pos;
  SceneFlowVector sf;
  PixelRole role = PixelRole::kFree;
  float fb_residual = 0.f;
  bool motion_valid = true;  // false for geometry-only seeds
};

struct MatchSet {
  int width = 0;
  int height = 0;
  std::vector<Match> matches;
};

// Stage 1: disparity-at-t0 consistency against the SGM reference. Seeds are
// never filtered; support-window pixels rank as middle confidence and are
// exempt in this stage.
inline SceneFlowField stage1_geometry_check(const SceneFlowField& field,
                                            const DisparityImage& ref,
                                            const Grid<PixelRole>& roles,
                                            const FilterConfig& cfg) {
  if (ref.width() != field.width() || ref.height() != field.height())
    throw std::invalid_argument("stage1: dimension mismatch");
  SceneFlowField out = field;
  for (int y = 0; y < field.height(); ++y)
    for (int x = 0; x < field.width(); ++x) {
      if (!out.valid(x, y) || !ref.valid(x, y)) continue;
      if (roles.at(x, y) != PixelRole::kFree) continue;
      if (std::fabs(out.data().at(x, y).d0 - ref.at(x, y)) > cfg.stage1_tolerance)
        out.invalidate(x, y);
    }
  return out;
}

// Stage 2: forward-backward consistency. The residual is the worst component
// disagreement between the forward vector at p and the backward vector at the
// flow target (whose d0/d1 describe t1/t0 respectively). Seeds keep their d0
// when they fail and degrade to geometry-only measurements.
struct Stage2Result {
  SceneFlowField field;
  Grid<float> fb_residual;
};

inline float forward_backward_residual(const SceneFlowVector& fwd, const SceneFlowVector& bwd) {
  float r = std::fabs(fwd.u + bwd.u);
  r = std::max(r, std::fabs(fwd.v + bwd.v));
  r = std::max(r, std::fabs(fwd.d0 - bwd.d1));
  r = std::max(r, std::fabs(fwd.d1 - bwd.d0));
  return r;
}

inline Stage2Result stage2_forward_backward_check(const SceneFlowField& fwd,
                                                  const SceneFlowField& bwd,
                                                  const FilterConfig& cfg) {
  if (fwd.width() != bwd.width() || fwd.height() != bwd.height())
    throw std::invalid_argument("stage2: dimension mismatch");
  Stage2Result res{fwd, Grid<float>(fwd.width(), fwd.height(),
                                    std::numeric_limits<float>::infinity())};
  for (int y = 0; y < fwd.height(); ++y)
    for (int x = 0; x < fwd.width(); ++x) {
      if (!fwd.valid(x, y)) continue;
      const SceneFlowVector& f = fwd.data().at(x, y);
      int tx = static_cast<int>(std::lround(x + f.u));
      int ty = static_cast<int>(std::lround(y + f.v));
      bool consistent = false;
      if (bwd.validity().in_bounds(tx, ty) && bwd.valid(tx, ty)) {
        float r = forward_backward_residual(f, bwd.data().at(tx, ty));
        res.fb_residual.at(x, y) = r;
        consistent = r <= cfg.fb_tolerance;
      }
      if (consistent) continue;
      if (fwd.is_seed(x, y)) {
        res.field.motion_mask().at(x, y) = 0;  // d0 survives as geometry only
      } else {
        res.field.invalidate(x, y);
      }
    }
  return res;
}

// Connected-component clustering over the validity mask. Neighbors link when
// every commonly-valid component differs by at most cluster_similarity.
// Components below min_cluster_size are removed unless they contain a seed;
// seed values anchor their component and are never filtered.
inline SceneFlowField cluster_filter(const SceneFlowField& field, const FilterConfig& cfg) {
  const int w = field.width(), h = field.height();
  Grid<int> label(w, h, -1);
  std::vector<int> parent;

  auto find = [&](int a) {
    while (parent[a] != a) {
      parent[a] = parent[parent[a]];
      a = parent[a];
    }
    return a;
  };
  auto unite = [&](int a, int b) {
    a = find(a);
    b = find(b);
    if (a != b) parent[std::max(a, b)] = std::min(a, b);
  };

  auto similar = [&](int x0, int y0, int x1, int y1) {
    // geometry-only pixels carry stale motion; they stand alone
    if (!field.motion_valid(x0, y0) || !field.motion_valid(x1, y1)) return false;
    const SceneFlowVector& a = field.data().at(x0, y0);
    const SceneFlowVector& b = field.data().at(x1, y1);
    float t = cfg.cluster_similarity;
    return std::fabs(a.u - b.u) <= t && std::fabs(a.v - b.v) <= t &&
           std::fabs(a.d0 - b.d0) <= t && std::fabs(a.d1 - b.d1) <= t;
  };

  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      if (!field.valid(x, y)) continue;
      int id = static_cast<int>(parent.size());
      parent.push_back(id);
      label.at(x, y) = id;
      if (x > 0 && label.at(x - 1, y) >= 0 && similar(x, y, x - 1, y))
        unite(id, label.at(x - 1, y));
      if (y > 0 && label.at(x, y - 1) >= 0 && similar(x, y, x, y - 1))
        unite(id, label.at(x, y - 1));
    }

  std::vector<int> size(parent.size(), 0);
  std::vector<uint8_t> has_seed(parent.size(), 0);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      if (label.at(x, y) < 0) continue;
      int root = find(label.at(x, y));
      size[root]++;
      if (field.is_seed(x, y)) has_seed[root] = 1;
    }

  SceneFlowField out = field;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      if (label.at(x, y) < 0) continue;
      int root = find(label.at(x, y));
      if (!has_seed[root] && size[root] < cfg.min_cluster_size) out.invalidate(x, y);
    }
  return out;
}

// Sparsification: within non-overlapping 3x3 blocks keep the non-seed match
// with the best (smallest) forward-backward residual; seeds always pass.
inline MatchSet sparsify_matches(const SceneFlowField& field, const Grid<PixelRole>& roles,
                                 const Grid<float>& fb_residual) {
  MatchSet set;
  set.width = field.width();
  set.height = field.height();
  for (int by = 0; by < field.height(); by += 3) {
    for (int bx = 0; bx < field.width(); bx += 3) {
      int best_x = -1, best_y = -1;
      float best_r = std::numeric_limits<float>::infinity();
      for (int y = by; y < std::min(by + 3, field.height()); ++y)
        for (int x = bx; x < std::min(bx + 3, field.width()); ++x) {
          if (!field.valid(x, y)) continue;
          if (field.is_seed(x, y)) {
            set.matches.push_back({{x, y},
                                   field.data().at(x, y),
                                   PixelRole::kSeed,
                                   fb_residual.at(x, y),
                                   field.motion_valid(x, y)});
            continue;
          }
          float r = fb_residual.at(x, y);
          if (r < best_r) {  // strict: row-major first wins ties
            best_r = r;
            best_x = x;
            best_y = y;
          }
        }
      if (best_x >= 0)
        set.matches.push_back({{best_x, best_y},
                               field.data().at(best_x, best_y),
                               roles.at(best_x, best_y),
                               best_r,
                               true});
    }
  }
  return set;
}

inline SceneFlowField matches_to_field(const MatchSet& set) {
  SceneFlowField field(set.width, set.height);
  for (const auto& m : set.matches) {
    field.set(m.pos.x, m.pos.y, m.sf, m.role == PixelRole::kSeed);
    if (!m.motion_valid) field.motion_mask().at(m.pos.x, m.pos.y) = 0;
  }
  return field;
}

}  // namespace fuseflow
