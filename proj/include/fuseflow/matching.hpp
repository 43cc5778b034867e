#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <vector>

#include "fuseflow/core.hpp"
#include "fuseflow/descriptors.hpp"
#include "fuseflow/grid.hpp"
#include "fuseflow/parallel.hpp"
#include "fuseflow/random.hpp"

namespace fuseflow {

struct SupportWindowConfig {
  int size = 15;  // odd; square window attached to every seed

  void validate() const {
    if (size < 1 || size % 2 == 0)
      throw std::invalid_argument("support window size must be odd and >= 1");
  }
};

struct MatchingConfig {
  int pyramid_levels = 4;
  int iterations_per_level = 8;
  float random_search_radius = 16.f;  // halving schedule down to 1 px
  float disparity_band = 3.f;         // tau_d for constraint 2
  float max_disparity = 128.f;        // candidate range cap at full resolution
  PatchSpec patch;
  uint64_t rng_seed = 0x5eedULL;

  void validate() const {
    if (pyramid_levels < 1) throw std::invalid_argument("pyramid_levels must be >= 1");
    if (iterations_per_level < 0) throw std::invalid_argument("iterations_per_level must be >= 0");
    if (disparity_band <= 0.f) throw std::invalid_argument("disparity_band must be positive");
    if (max_disparity <= 0.f) throw std::invalid_argument("max_disparity must be positive");
    if (patch.radius < 0) throw std::invalid_argument("patch radius must be >= 0");
  }
};

enum class PixelRole : uint8_t { kFree = 0, kWindow = 1, kSeed = 2 };

enum class CostCase : uint8_t { kImageOnly, kLidarT0, kLidarT1, kLidarBoth };

struct CostScheme {
  CostCase match_case = CostCase::kImageOnly;
  float d1_lookup = std::numeric_limits<float>::quiet_NaN();  // hit value in the target LiDAR frame
};

enum class MatchDirection { kForward, kBackward };

constexpr float kMinDisparity = 1e-3f;

// One pyramid level: descriptors for the four views plus rasterized LiDAR and
// role/reference grids for both matching directions.
struct PyramidLevel {
  int width = 0;
  int height = 0;
  float max_disparity = 0.f;
  DescriptorField desc_left0, desc_left1, desc_right0, desc_right1;
  Grid<float> lidar0, lidar1;  // NaN where unmeasured
  Grid<PixelRole> roles_fwd, roles_bwd;
  Grid<float> seed_ref_fwd, seed_ref_bwd;  // governing seed disparity, NaN when free
};

struct MatchingPyramid {
  std::vector<PyramidLevel> levels;  // [0] = full resolution
  SupportWindowConfig window;
};

// Read-only view of a level in one matching direction. Backward matching sees
// the time-swapped arrangement of the same data.
struct LevelView {
  const DescriptorField* left0;
  const DescriptorField* left1;
  const DescriptorField* right0;
  const DescriptorField* right1;
  const Grid<float>* lidar_ref;  // reference-time frame (D at t0 for forward)
  const Grid<float>* lidar_tgt;  // target-time frame
  const Grid<PixelRole>* roles;
  const Grid<float>* seed_ref;
  int width = 0;
  int height = 0;
  float max_disparity = 0.f;
};

inline LevelView make_view(const PyramidLevel& lv, MatchDirection dir) {
  if (dir == MatchDirection::kForward)
    return {&lv.desc_left0, &lv.desc_left1, &lv.desc_right0, &lv.desc_right1,
            &lv.lidar0,     &lv.lidar1,     &lv.roles_fwd,   &lv.seed_ref_fwd,
            lv.width,       lv.height,      lv.max_disparity};
  return {&lv.desc_left1, &lv.desc_left0, &lv.desc_right1, &lv.desc_right0,
          &lv.lidar1,     &lv.lidar0,     &lv.roles_bwd,   &lv.seed_ref_bwd,
          lv.width,       lv.height,      lv.max_disparity};
}

// --- pyramid construction ----------------------------------------------------

namespace detail {

inline Image8 box_downscale(const Image8& in) {
  int w = (in.width() + 1) / 2, h = (in.height() + 1) / 2;
  Image8 out(w, h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      int sum = in.at_clamped(2 * x, 2 * y) + in.at_clamped(2 * x + 1, 2 * y) +
                in.at_clamped(2 * x, 2 * y + 1) + in.at_clamped(2 * x + 1, 2 * y + 1);
      out.at(x, y) = static_cast<uint8_t>((sum + 2) / 4);
    }
  return out;
}

inline Grid<float> scale_lidar(const SparseDepthMap& map, int level, int w, int h) {
  Grid<float> g(w, h, std::numeric_limits<float>::quiet_NaN());
  float inv = std::ldexp(1.0f, -level);
  for (const auto& e : map.entries()) {
    int x = std::min(static_cast<int>(std::lround(e.x * inv)), w - 1);
    int y = std::min(static_cast<int>(std::lround(e.y * inv)), h - 1);
    float d = e.disparity * inv;
    float& slot = g.at(x, y);
    if (std::isnan(slot) || d > slot) slot = d;  // nearer surface wins collisions
  }
  return g;
}

}  // namespace detail

// Stamps seed support windows. A pixel covered by several windows is governed
// by the closest seed (squared Euclidean distance, row-major seed order on
// ties).
inline void assign_support_roles(const Grid<float>& lidar, const SupportWindowConfig& window,
                                 Grid<PixelRole>& roles, Grid<float>& seed_ref) {
  int w = lidar.width(), h = lidar.height();
  roles = Grid<PixelRole>(w, h, PixelRole::kFree);
  seed_ref = Grid<float>(w, h, std::numeric_limits<float>::quiet_NaN());
  Grid<long> best(w, h, std::numeric_limits<long>::max());
  int half = window.size / 2;
  for (int sy = 0; sy < h; ++sy) {
    for (int sx = 0; sx < w; ++sx) {
      float d = lidar.at(sx, sy);
      if (std::isnan(d)) continue;
      for (int y = std::max(0, sy - half); y <= std::min(h - 1, sy + half); ++y) {
        for (int x = std::max(0, sx - half); x <= std::min(w - 1, sx + half); ++x) {
          long dx = x - sx, dy = y - sy;
          long d2 = dx * dx + dy * dy;
          if (d2 < best.at(x, y)) {  // strict: earlier row-major seed wins ties
            best.at(x, y) = d2;
            seed_ref.at(x, y) = d;
            roles.at(x, y) = PixelRole::kWindow;
          }
        }
      }
    }
  }
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      if (!std::isnan(lidar.at(x, y))) {
        roles.at(x, y) = PixelRole::kSeed;
        seed_ref.at(x, y) = lidar.at(x, y);
      }
}

inline MatchingPyramid build_pyramids(const CalibratedFrameSet& frames,
                                      const MatchingConfig& cfg,
                                      const SupportWindowConfig& window,
                                      int workers = 1) {
  cfg.validate();
  window.validate();
  frames.validate();

  int w0 = frames.left0.width(), h0 = frames.left0.height();
  {
    int cw = w0, ch = h0;
    for (int l = 1; l < cfg.pyramid_levels; ++l) {
      cw = (cw + 1) / 2;
      ch = (ch + 1) / 2;
    }
    if (cw < 8 || ch < 8)
      throw std::invalid_argument("build_pyramids: pyramid too deep, coarsest side < 8 px");
  }

  MatchingPyramid pyr;
  pyr.window = window;
  pyr.levels.resize(cfg.pyramid_levels);

  std::vector<Image8> imgs = {frames.left0, frames.left1, frames.right0, frames.right1};
  for (int l = 0; l < cfg.pyramid_levels; ++l) {
    if (l > 0)
      for (auto& img : imgs) img = detail::box_downscale(img);
    PyramidLevel& lv = pyr.levels[l];
    lv.width = imgs[0].width();
    lv.height = imgs[0].height();
    lv.max_disparity = cfg.max_disparity * std::ldexp(1.0f, -l);

    DescriptorField* fields[4] = {&lv.desc_left0, &lv.desc_left1, &lv.desc_right0,
                                  &lv.desc_right1};
    parallel_for(0, 4, workers, [&](int lo, int hi) {
      for (int i = lo; i < hi; ++i) *fields[i] = compute_dense_descriptors(imgs[i]);
    });

    lv.lidar0 = detail::scale_lidar(frames.lidar0, l, lv.width, lv.height);
    lv.lidar1 = detail::scale_lidar(frames.lidar1, l, lv.width, lv.height);
    assign_support_roles(lv.lidar0, window, lv.roles_fwd, lv.seed_ref_fwd);
    assign_support_roles(lv.lidar1, window, lv.roles_bwd, lv.seed_ref_bwd);
  }
  return pyr;
}

// --- matching cost -----------------------------------------------------------

inline CostScheme select_cost_scheme(const LevelView& view, PixelCoord p,
                                     const SceneFlowVector& sf) {
  bool hit0 = view.lidar_ref->in_bounds(p) && !std::isnan(view.lidar_ref->at(p));
  int qx = static_cast<int>(std::lround(p.x + sf.u));
  int qy = static_cast<int>(std::lround(p.y + sf.v));
  bool hit1 = view.lidar_tgt->in_bounds(qx, qy) && !std::isnan(view.lidar_tgt->at(qx, qy));
  CostScheme scheme;
  if (hit1) scheme.d1_lookup = view.lidar_tgt->at(qx, qy);
  if (hit0 && hit1)
    scheme.match_case = CostCase::kLidarBoth;
  else if (hit0)
    scheme.match_case = CostCase::kLidarT0;
  else if (hit1)
    scheme.match_case = CostCase::kLidarT1;
  else
    scheme.match_case = CostCase::kImageOnly;
  return scheme;
}

namespace detail {

inline int round_coord(float v) {
  if (v > 1e6f) v = 1e6f;
  if (v < -1e6f) v = -1e6f;
  return static_cast<int>(std::lround(v));
}

inline float term_cost(const DescriptorField& A, const DescriptorField& B, float ax, float ay,
                       float bx, float by, int radius) {
  return patch_cost_int(A, B, round_coord(ax), round_coord(ay), round_coord(bx),
                        round_coord(by), radius);
}

}  // namespace detail

// Constancy terms between specific image pairs at the correspondence
// coordinates implied by the scene flow hypothesis.
inline float total_match_cost(const CostScheme& scheme, const LevelView& view, PixelCoord p,
                              const SceneFlowVector& sf, const PatchSpec& patch) {
  const float x = static_cast<float>(p.x), y = static_cast<float>(p.y);
  const int r = patch.radius;
  auto flow_left = [&] {  // left t0 -> left t1
    return detail::term_cost(*view.left0, *view.left1, x, y, x + sf.u, y + sf.v, r);
  };
  auto stereo_t0 = [&] {  // left t0 -> right t0
    return detail::term_cost(*view.left0, *view.right0, x, y, x - sf.d0, y, r);
  };
  auto cross_l0_r1 = [&] {  // left t0 -> right t1
    return detail::term_cost(*view.left0, *view.right1, x, y, x + sf.u - sf.d1, y + sf.v, r);
  };
  auto flow_right = [&] {  // right t0 -> right t1
    return detail::term_cost(*view.right0, *view.right1, x - sf.d0, y, x + sf.u - sf.d1,
                             y + sf.v, r);
  };
  auto cross_r0_l1 = [&] {  // right t0 -> left t1
    return detail::term_cost(*view.right0, *view.left1, x - sf.d0, y, x + sf.u, y + sf.v, r);
  };
  auto stereo_t1 = [&] {  // left t1 -> right t1
    return detail::term_cost(*view.left1, *view.right1, x + sf.u, y + sf.v,
                             x + sf.u - sf.d1, y + sf.v, r);
  };

  switch (scheme.match_case) {
    case CostCase::kImageOnly:
      return flow_left() + stereo_t0() + cross_l0_r1();
    case CostCase::kLidarT0:
      return flow_left() + cross_l0_r1() + flow_right() + cross_r0_l1();
    case CostCase::kLidarT1:
      return flow_left() + stereo_t0() + flow_right() + stereo_t1();
    case CostCase::kLidarBoth:
      return flow_left() + cross_r0_l1() + 2.f * flow_right() + stereo_t1();
  }
  return 0.f;
}

inline float evaluate_hypothesis(const LevelView& view, PixelCoord p, const SceneFlowVector& sf,
                                 const PatchSpec& patch) {
  return total_match_cost(select_cost_scheme(view, p, sf), view, p, sf, patch);
}

// --- initialization and propagation -------------------------------------------

namespace detail {

// Constraint 2 plus seed immutability and positivity. The candidate is tested
// as a whole; neighbor hypotheses that would overwrite a seed's d0 are
// rejected outright.
inline bool hypothesis_admissible(const LevelView& view, PixelCoord p,
                                  const SceneFlowVector& cand, float band) {
  if (!(cand.d0 > 0.f) || !(cand.d1 > 0.f)) return false;
  if (!std::isfinite(cand.u) || !std::isfinite(cand.v)) return false;
  PixelRole role = view.roles->at(p);
  if (role == PixelRole::kFree)
    return cand.d0 <= view.max_disparity && cand.d1 <= view.max_disparity;
  float ref = view.seed_ref->at(p);
  if (role == PixelRole::kSeed && cand.d0 != ref) return false;
  if (role == PixelRole::kWindow && std::fabs(cand.d0 - ref) > band) return false;
  return std::fabs(cand.d1 - ref) <= band;
}

inline SceneFlowVector clamp_into_band(const LevelView& view, PixelCoord p, SceneFlowVector sf,
                                       float band) {
  PixelRole role = view.roles->at(p);
  if (role == PixelRole::kFree) {
    sf.d0 = std::clamp(sf.d0, kMinDisparity, view.max_disparity);
    sf.d1 = std::clamp(sf.d1, kMinDisparity, view.max_disparity);
    return sf;
  }
  float ref = view.seed_ref->at(p);
  float lo = std::max(kMinDisparity, ref - band), hi = ref + band;
  if (role == PixelRole::kSeed)
    sf.d0 = ref;
  else
    sf.d0 = std::clamp(sf.d0, lo, hi);
  sf.d1 = std::clamp(sf.d1, lo, hi);
  return sf;
}

}  // namespace detail

// Coarsest-level field: d0 inside support windows comes from the governing
// seed, everything else from the best of K random image-based candidates.
inline SceneFlowField initialize_coarsest(const LevelView& view, const MatchingConfig& cfg,
                                          Rng& rng, Grid<float>* cost_out = nullptr) {
  constexpr int kCandidates = 8;
  SceneFlowField field(view.width, view.height);
  if (cost_out) *cost_out = Grid<float>(view.width, view.height, 0.f);
  float radius = cfg.random_search_radius;
  for (int y = 0; y < view.height; ++y) {
    for (int x = 0; x < view.width; ++x) {
      PixelCoord p{x, y};
      PixelRole role = view.roles->at(p);
      float ref = view.seed_ref->at(p);
      SceneFlowVector best{};
      float best_cost = std::numeric_limits<float>::infinity();
      for (int k = 0; k < kCandidates; ++k) {
        SceneFlowVector cand;
        cand.u = static_cast<float>(rng.uniform(-radius, radius));
        cand.v = static_cast<float>(rng.uniform(-radius, radius));
        if (role == PixelRole::kFree)
          cand.d0 = static_cast<float>(view.max_disparity * (1.0 - rng.uniform01()));
        else
          cand.d0 = ref;
        if (role == PixelRole::kFree) {
          cand.d1 = static_cast<float>(view.max_disparity * (1.0 - rng.uniform01()));
        } else {
          float lo = std::max(kMinDisparity, ref - cfg.disparity_band);
          float hi = ref + cfg.disparity_band;
          cand.d1 = static_cast<float>(rng.uniform(lo, hi));
        }
        float c = evaluate_hypothesis(view, p, cand, cfg.patch);
        if (c < best_cost) {
          best_cost = c;
          best = cand;
        }
      }
      field.set(x, y, best, role == PixelRole::kSeed);
      if (cost_out) cost_out->at(x, y) = best_cost;
    }
  }
  return field;
}

// One PatchMatch pass: alternating scan order, joint adoption of 4-neighbor
// hypotheses, then random search with a halving radius schedule. Acceptance
// needs a strict cost decrease (constraint 1) and band admissibility
// (constraint 2); seed d0 is immutable.
inline void propagate_and_refine(const LevelView& view, SceneFlowField& field,
                                 Grid<float>& cost, const MatchingConfig& cfg, Rng& rng,
                                 int iteration) {
  const int w = view.width, h = view.height;
  const bool reverse = (iteration % 2) != 0;
  static constexpr int dx4[4] = {-1, 1, 0, 0};
  static constexpr int dy4[4] = {0, 0, -1, 1};

  for (int i = 0; i < w * h; ++i) {
    int idx = reverse ? (w * h - 1 - i) : i;
    int y = idx / w, x = idx % w;
    PixelCoord p{x, y};
    SceneFlowVector cur = field.data().at(x, y);
    float cur_cost = cost.at(x, y);

    auto consider = [&](const SceneFlowVector& cand) {
      if (cand == cur) return;
      if (!detail::hypothesis_admissible(view, p, cand, cfg.disparity_band)) return;
      float c = evaluate_hypothesis(view, p, cand, cfg.patch);
      if (c < cur_cost) {
        cur = cand;
        cur_cost = c;
      }
    };

    bool is_seed = view.roles->at(p) == PixelRole::kSeed;
    for (int n = 0; n < 4; ++n) {
      int nx = x + dx4[n], ny = y + dy4[n];
      if (nx < 0 || nx >= w || ny < 0 || ny >= h) continue;
      SceneFlowVector cand = field.data().at(nx, ny);
      // (u, v) and d1 propagate into seeds, their d0 never changes
      if (is_seed) cand.d0 = view.seed_ref->at(p);
      consider(cand);
    }

    for (float r = cfg.random_search_radius; r >= 1.f; r *= 0.5f) {
      SceneFlowVector c1 = cur;
      c1.u += static_cast<float>(rng.uniform(-r, r));
      c1.v += static_cast<float>(rng.uniform(-r, r));
      consider(c1);
      if (!is_seed) {  // seed d0 is never perturbed
        SceneFlowVector c2 = cur;
        c2.d0 += static_cast<float>(rng.uniform(-r, r));
        consider(c2);
      }
      SceneFlowVector c3 = cur;
      c3.d1 += static_cast<float>(rng.uniform(-r, r));
      consider(c3);
    }

    field.data().at(x, y) = cur;
    cost.at(x, y) = cur_cost;
  }
}

namespace detail {

inline void recompute_costs(const LevelView& view, const SceneFlowField& field,
                            const PatchSpec& patch, Grid<float>& cost, int workers) {
  cost = Grid<float>(view.width, view.height, 0.f);
  parallel_for(0, view.height, workers, [&](int y0, int y1) {
    for (int y = y0; y < y1; ++y)
      for (int x = 0; x < view.width; ++x)
        cost.at(x, y) = evaluate_hypothesis(view, {x, y}, field.data().at(x, y), patch);
  });
}

// Nearest-neighbor upsample with doubled components, then re-pin the finer
// level's seeds and clamp banded pixels back into their constraint-2 band.
inline SceneFlowField upsample_field(const SceneFlowField& coarse, const LevelView& fine,
                                     const MatchingConfig& cfg) {
  SceneFlowField out(fine.width, fine.height);
  for (int y = 0; y < fine.height; ++y) {
    for (int x = 0; x < fine.width; ++x) {
      int sx = std::min(x / 2, coarse.width() - 1);
      int sy = std::min(y / 2, coarse.height() - 1);
      SceneFlowVector sf = coarse.data().at(sx, sy);
      sf.u *= 2.f;
      sf.v *= 2.f;
      sf.d0 *= 2.f;
      sf.d1 *= 2.f;
      sf = clamp_into_band(fine, {x, y}, sf, cfg.disparity_band);
      out.set(x, y, sf, fine.roles->at(x, y) == PixelRole::kSeed);
    }
  }
  return out;
}

}  // namespace detail

// Full coarse-to-fine matcher. Backward direction swaps the time roles of
// images and LiDAR frames; the returned field is dense (density 1.0).
inline SceneFlowField run_matcher(const MatchingPyramid& pyramid, MatchDirection direction,
                                  const MatchingConfig& cfg, int workers = 1) {
  cfg.validate();
  if (pyramid.levels.empty()) throw std::invalid_argument("run_matcher: empty pyramid");
  Rng rng(mix_seed(cfg.rng_seed, direction == MatchDirection::kForward ? 0 : 1));

  SceneFlowField field;
  Grid<float> cost;
  for (int level = static_cast<int>(pyramid.levels.size()) - 1; level >= 0; --level) {
    LevelView view = make_view(pyramid.levels[level], direction);
    if (level == static_cast<int>(pyramid.levels.size()) - 1) {
      field = initialize_coarsest(view, cfg, rng, &cost);
    } else {
      field = detail::upsample_field(field, view, cfg);
      detail::recompute_costs(view, field, cfg.patch, cost, workers);
    }
    for (int it = 0; it < cfg.iterations_per_level; ++it)
      propagate_and_refine(view, field, cost, cfg, rng, it);
  }
  return field;
}

inline SceneFlowField run_matcher(const CalibratedFrameSet& frames, MatchDirection direction,
                                  const MatchingConfig& cfg, const SupportWindowConfig& window,
                                  int workers = 1) {
  MatchingPyramid pyramid = build_pyramids(frames, cfg, window, workers);
  return run_matcher(pyramid, direction, cfg, workers);
}

}  // namespace fuseflow
