#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

#include "fuseflow/edges.hpp"
#include "fuseflow/filtering.hpp"
#include "fuseflow/geodesic.hpp"
#include "fuseflow/grid.hpp"
#include "fuseflow/parallel.hpp"
#include "fuseflow/random.hpp"
#include "fuseflow/superpixels.hpp"

namespace fuseflow {

struct InterpConfig {
  int superpixel_count = 1000;
  float compactness = 10.f;
  float anchor_proximity = 10.f;  // px from centroid for adopting a seed anchor
  int neighborhood_size = 32;     // superpixels per edge-aware neighborhood
  float geodesic_lambda = 40.f;
  float lidar_consistency = 1.f;  // px tolerance at associated seeds
  int refinement_iterations = 4;
  uint64_t rng_seed = 0x5eedULL;

  void validate() const {
    if (superpixel_count < 1 || neighborhood_size < 1 || refinement_iterations < 0 ||
        compactness <= 0.f || anchor_proximity <= 0.f || geodesic_lambda < 0.f ||
        lidar_consistency <= 0.f)
      throw std::invalid_argument("interp: config values must be positive");
  }
};

struct Superpixel {
  float centroid_x = 0.f, centroid_y = 0.f;
  PixelCoord anchor;
  int min_x = 0, min_y = 0, max_x = 0, max_y = 0;  // member bounding box
  int pixel_count = 0;
  std::vector<int> match_indices;              // matches located inside this superpixel
  std::vector<int> adjacent;                   // spatially adjacent superpixels
  std::vector<std::pair<int, float>> neighborhood;  // (superpixel, geodesic distance)
  int geometry_assoc = -1;  // match index of the associated LiDAR measurement
  int motion_assoc = -1;    // match index of the associated LiDAR match
  int fallback_assoc = -1;  // closest image-based match when no seed qualifies
};

struct SuperpixelGraph {
  Grid<int> labels;
  std::vector<Superpixel> superpixels;
};

inline SuperpixelGraph build_superpixel_graph(Grid<int> labels) {
  SuperpixelGraph graph;
  int k = 0;
  for (size_t i = 0; i < labels.size(); ++i) k = std::max(k, labels[i] + 1);
  graph.superpixels.resize(k);
  const int w = labels.width(), h = labels.height();
  std::vector<double> sx(k, 0), sy(k, 0);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      int lab = labels.at(x, y);
      Superpixel& sp = graph.superpixels[lab];
      if (sp.pixel_count == 0) {
        sp.min_x = sp.max_x = x;
        sp.min_y = sp.max_y = y;
      } else {
        sp.min_x = std::min(sp.min_x, x);
        sp.max_x = std::max(sp.max_x, x);
        sp.min_y = std::min(sp.min_y, y);
        sp.max_y = std::max(sp.max_y, y);
      }
      sp.pixel_count++;
      sx[lab] += x;
      sy[lab] += y;
      if (x + 1 < w && labels.at(x + 1, y) != lab) {
        int other = labels.at(x + 1, y);
        Superpixel& a = graph.superpixels[lab];
        Superpixel& b = graph.superpixels[other];
        if (std::find(a.adjacent.begin(), a.adjacent.end(), other) == a.adjacent.end())
          a.adjacent.push_back(other);
        if (std::find(b.adjacent.begin(), b.adjacent.end(), lab) == b.adjacent.end())
          b.adjacent.push_back(lab);
      }
      if (y + 1 < h && labels.at(x, y + 1) != lab) {
        int other = labels.at(x, y + 1);
        Superpixel& a = graph.superpixels[lab];
        Superpixel& b = graph.superpixels[other];
        if (std::find(a.adjacent.begin(), a.adjacent.end(), other) == a.adjacent.end())
          a.adjacent.push_back(other);
        if (std::find(b.adjacent.begin(), b.adjacent.end(), lab) == b.adjacent.end())
          b.adjacent.push_back(lab);
      }
    }
  for (int i = 0; i < k; ++i) {
    Superpixel& sp = graph.superpixels[i];
    if (sp.pixel_count > 0) {
      sp.centroid_x = static_cast<float>(sx[i] / sp.pixel_count);
      sp.centroid_y = static_cast<float>(sy[i] / sp.pixel_count);
    }
    sp.anchor = {static_cast<int>(std::lround(sp.centroid_x)),
                 static_cast<int>(std::lround(sp.centroid_y))};
    sp.anchor.x = std::clamp(sp.anchor.x, 0, w - 1);
    sp.anchor.y = std::clamp(sp.anchor.y, 0, h - 1);
    std::sort(sp.adjacent.begin(), sp.adjacent.end());
  }
  graph.labels = std::move(labels);
  return graph;
}

// Anchor and LiDAR association per superpixel: the closest seed becomes the
// anchor when it lies inside the superpixel or within the proximity threshold
// of the centroid; otherwise the centroid stays and the association falls back
// to the closest pure image-based match.
inline void assign_anchors(SuperpixelGraph& graph, const MatchSet& matches,
                           const InterpConfig& cfg) {
  cfg.validate();
  for (auto& sp : graph.superpixels) sp.match_indices.clear();
  for (size_t i = 0; i < matches.matches.size(); ++i) {
    const Match& m = matches.matches[i];
    if (graph.labels.in_bounds(m.pos))
      graph.superpixels[graph.labels.at(m.pos)].match_indices.push_back(static_cast<int>(i));
  }

  for (size_t s = 0; s < graph.superpixels.size(); ++s) {
    Superpixel& sp = graph.superpixels[s];
    auto closest = [&](auto&& pred) {
      int best = -1;
      double best_d2 = std::numeric_limits<double>::infinity();
      for (size_t i = 0; i < matches.matches.size(); ++i) {
        const Match& m = matches.matches[i];
        if (!pred(m)) continue;
        double dx = m.pos.x - sp.centroid_x, dy = m.pos.y - sp.centroid_y;
        double d2 = dx * dx + dy * dy;
        if (d2 < best_d2) {
          best_d2 = d2;
          best = static_cast<int>(i);
        }
      }
      return std::pair<int, double>(best, best_d2);
    };
    auto qualifies = [&](int idx, double d2) {
      if (idx < 0) return false;
      const Match& m = matches.matches[idx];
      if (graph.labels.at(m.pos) == static_cast<int>(s)) return true;
      return std::sqrt(d2) <= cfg.anchor_proximity;
    };

    auto [seed_idx, seed_d2] = closest([](const Match& m) { return m.role == PixelRole::kSeed; });
    auto [motion_seed_idx, motion_seed_d2] =
        closest([](const Match& m) { return m.role == PixelRole::kSeed && m.motion_valid; });
    auto [image_idx, image_d2] = closest([](const Match& m) { return m.role != PixelRole::kSeed; });

    sp.geometry_assoc = qualifies(seed_idx, seed_d2) ? seed_idx : -1;
    sp.motion_assoc = qualifies(motion_seed_idx, motion_seed_d2) ? motion_seed_idx : -1;
    sp.fallback_assoc = image_idx;
    if (sp.geometry_assoc >= 0)
      sp.anchor = matches.matches[sp.geometry_assoc].pos;
    // else: centroid anchor from build_superpixel_graph stays
  }
}

// Edge-aware neighborhoods: Dijkstra from each anchor over the step cost
// 1 + lambda * max(edge strengths); the n geodesically nearest superpixels
// form the neighborhood. The search stops once enough anchors are settled,
// which leaves the selected distances exact.
inline void edge_aware_neighborhoods(SuperpixelGraph& graph, const EdgeMap& edges,
                                     const InterpConfig& cfg, int workers = 1) {
  cfg.validate();
  if (edges.width() != graph.labels.width() || edges.height() != graph.labels.height())
    throw std::invalid_argument("edge_aware_neighborhoods: edge map dimension mismatch");
  const int k = static_cast<int>(graph.superpixels.size());

  Grid<uint8_t> anchor_mask(edges.width(), edges.height(), 0);
  int unique_anchors = 0;
  for (const auto& sp : graph.superpixels) {
    uint8_t& cell = anchor_mask.at(sp.anchor);
    if (!cell) {
      cell = 1;
      ++unique_anchors;
    }
  }
  int need = std::min(unique_anchors, cfg.neighborhood_size + 1);

  parallel_for(0, k, workers, [&](int lo, int hi) {
    for (int s = lo; s < hi; ++s) {
      Superpixel& sp = graph.superpixels[s];
      Grid<uint8_t> settled;
      Grid<float> dist = geodesic_distance_field(edges, sp.anchor, cfg.geodesic_lambda,
                                                 &anchor_mask, need, &settled);
      std::vector<std::pair<float, int>> order;
      order.reserve(k);
      for (int j = 0; j < k; ++j) {
        if (j == s) continue;
        PixelCoord a = graph.superpixels[j].anchor;
        if (!settled.at(a)) continue;
        order.emplace_back(dist.at(a), j);
      }
      std::sort(order.begin(), order.end());
      sp.neighborhood.clear();
      for (size_t i = 0; i < order.size() && i < static_cast<size_t>(cfg.neighborhood_size); ++i)
        sp.neighborhood.emplace_back(order[i].second, order[i].first);
    }
  });
}

// --- piecewise models ---------------------------------------------------------

struct PlaneModel {
  double a = 0, b = 0, c = 0;
  bool valid = false;
  double eval(double x, double y) const { return a * x + b * y + c; }
};

struct AffineMotion {
  // (u, v)(x, y) = A * (x, y) + t
  double a11 = 0, a12 = 0, a21 = 0, a22 = 0, tx = 0, ty = 0;
  bool valid = false;
  double u(double x, double y) const { return a11 * x + a12 * y + tx; }
  double v(double x, double y) const { return a21 * x + a22 * y + ty; }
};

struct PiecewiseModel {
  PlaneModel d0_plane;   // reference coordinates
  AffineMotion motion;   // flow over reference coordinates
  PlaneModel d1_plane;   // target-frame coordinates
};

namespace detail {

// weighted least squares for z ~ a*x + b*y + c
inline bool fit_plane(const std::vector<double>& xs, const std::vector<double>& ys,
                      const std::vector<double>& zs, const std::vector<double>& ws,
                      PlaneModel& out) {
  if (xs.size() < 3) return false;
  double m[3][3] = {};
  double r[3] = {};
  for (size_t i = 0; i < xs.size(); ++i) {
    double b[3] = {xs[i], ys[i], 1.0};
    for (int p = 0; p < 3; ++p) {
      for (int q = 0; q < 3; ++q) m[p][q] += ws[i] * b[p] * b[q];
      r[p] += ws[i] * b[p] * zs[i];
    }
  }
  // gaussian elimination with partial pivoting
  double aug[3][4];
  for (int p = 0; p < 3; ++p) {
    for (int q = 0; q < 3; ++q) aug[p][q] = m[p][q];
    aug[p][3] = r[p];
  }
  for (int col = 0; col < 3; ++col) {
    int piv = col;
    for (int row = col + 1; row < 3; ++row)
      if (std::fabs(aug[row][col]) > std::fabs(aug[piv][col])) piv = row;
    if (std::fabs(aug[piv][col]) < 1e-9) return false;
    std::swap(aug[col], aug[piv]);
    for (int row = 0; row < 3; ++row) {
      if (row == col) continue;
      double f = aug[row][col] / aug[col][col];
      for (int q = col; q < 4; ++q) aug[row][q] -= f * aug[col][q];
    }
  }
  out.a = aug[0][3] / aug[0][0];
  out.b = aug[1][3] / aug[1][1];
  out.c = aug[2][3] / aug[2][2];
  out.valid = std::isfinite(out.a) && std::isfinite(out.b) && std::isfinite(out.c);
  return out.valid;
}

struct SupportData {
  std::vector<double> xs, ys, ws;   // reference positions and weights
  std::vector<double> d0;           // all matches
  std::vector<double> mxs, mys, mws;  // motion-valid subset
  std::vector<double> mu, mv, md1;
  std::vector<double> txs, tys;     // target coordinates of motion matches
};

inline SupportData gather_support(const SuperpixelGraph& graph, const MatchSet& matches,
                                  int sp_index) {
  const Superpixel& sp = graph.superpixels[sp_index];
  SupportData sd;
  double sigma = 0.0;
  for (const auto& [j, d] : sp.neighborhood) sigma += d;
  sigma = sp.neighborhood.empty() ? 1.0 : sigma / sp.neighborhood.size();
  if (sigma <= 0.0) sigma = 1.0;

  auto add_sp = [&](int j, double dist) {
    double w = std::exp(-dist / sigma);
    for (int mi : graph.superpixels[j].match_indices) {
      const Match& m = matches.matches[mi];
      sd.xs.push_back(m.pos.x);
      sd.ys.push_back(m.pos.y);
      sd.ws.push_back(w);
      sd.d0.push_back(m.sf.d0);
      if (m.motion_valid) {
        sd.mxs.push_back(m.pos.x);
        sd.mys.push_back(m.pos.y);
        sd.mws.push_back(w);
        sd.mu.push_back(m.sf.u);
        sd.mv.push_back(m.sf.v);
        sd.md1.push_back(m.sf.d1);
        sd.txs.push_back(m.pos.x + m.sf.u);
        sd.tys.push_back(m.pos.y + m.sf.v);
      }
    }
  };
  add_sp(sp_index, 0.0);
  for (const auto& [j, d] : sp.neighborhood) add_sp(j, d);
  return sd;
}

// Truncated weighted squared error. The cap keeps support matches from the
// far side of an object boundary from dragging a model: a clean model from an
// adjacent superpixel then beats a contaminated blend during refinement.
constexpr double kResidualCap = 3.0;  // px, squared below

inline double plane_residual(const PlaneModel& p, const std::vector<double>& xs,
                             const std::vector<double>& ys, const std::vector<double>& zs,
                             const std::vector<double>& ws) {
  double r = 0;
  for (size_t i = 0; i < xs.size(); ++i) {
    double e = p.eval(xs[i], ys[i]) - zs[i];
    r += ws[i] * std::min(e * e, kResidualCap * kResidualCap);
  }
  return r;
}

inline double motion_residual(const AffineMotion& m, const SupportData& sd) {
  double r = 0;
  for (size_t i = 0; i < sd.mxs.size(); ++i) {
    double eu = m.u(sd.mxs[i], sd.mys[i]) - sd.mu[i];
    double ev = m.v(sd.mxs[i], sd.mys[i]) - sd.mv[i];
    r += sd.mws[i] * std::min(eu * eu + ev * ev, kResidualCap * kResidualCap);
  }
  return r;
}

}  // namespace detail

inline std::vector<PiecewiseModel> fit_and_refine_models(const SuperpixelGraph& graph,
                                                         const MatchSet& matches,
                                                         const InterpConfig& cfg,
                                                         int workers = 1) {
  cfg.validate();
  const int k = static_cast<int>(graph.superpixels.size());
  std::vector<PiecewiseModel> models(k);
  std::vector<detail::SupportData> support(k);

  parallel_for(0, k, workers, [&](int lo, int hi) {
    for (int s = lo; s < hi; ++s) support[s] = detail::gather_support(graph, matches, s);
  });

  // consistency constraints at the associated seed(s); models get shifted to
  // honor them exactly after fitting or inheritance
  auto geometry_seed = [&](int s) -> const Match* {
    int i = graph.superpixels[s].geometry_assoc;
    return i >= 0 ? &matches.matches[i] : nullptr;
  };
  auto motion_seed = [&](int s) -> const Match* {
    int i = graph.superpixels[s].motion_assoc;
    return i >= 0 ? &matches.matches[i] : nullptr;
  };

  auto geometry_consistent = [&](int s, const PlaneModel& p) {
    const Match* m = geometry_seed(s);
    if (!m) return true;
    return std::fabs(p.eval(m->pos.x, m->pos.y) - m->sf.d0) <= cfg.lidar_consistency;
  };
  auto motion_consistent = [&](int s, const AffineMotion& a) {
    const Match* m = motion_seed(s);
    if (!m) return true;
    return std::fabs(a.u(m->pos.x, m->pos.y) - m->sf.u) <= cfg.lidar_consistency &&
           std::fabs(a.v(m->pos.x, m->pos.y) - m->sf.v) <= cfg.lidar_consistency;
  };
  auto d1_consistent = [&](int s, const PlaneModel& p) {
    const Match* m = motion_seed(s);
    if (!m) return true;
    double tx = m->pos.x + m->sf.u, ty = m->pos.y + m->sf.v;
    return std::fabs(p.eval(tx, ty) - m->sf.d1) <= cfg.lidar_consistency;
  };

  auto pin_geometry = [&](int s, PlaneModel& p) {
    const Match* m = geometry_seed(s);
    if (m && p.valid) p.c += m->sf.d0 - p.eval(m->pos.x, m->pos.y);
  };
  auto pin_motion = [&](int s, AffineMotion& a) {
    const Match* m = motion_seed(s);
    if (m && a.valid) {
      a.tx += m->sf.u - a.u(m->pos.x, m->pos.y);
      a.ty += m->sf.v - a.v(m->pos.x, m->pos.y);
    }
  };
  auto pin_d1 = [&](int s, PlaneModel& p) {
    const Match* m = motion_seed(s);
    if (m && p.valid) p.c += m->sf.d1 - p.eval(m->pos.x + m->sf.u, m->pos.y + m->sf.v);
  };

  // d0 planes must stay positive over the superpixel; the bounding box corners
  // bound a linear function's range over the members
  auto positive_on = [&](int s, const PlaneModel& p) {
    const Superpixel& sp = graph.superpixels[s];
    return p.eval(sp.min_x, sp.min_y) > 0 && p.eval(sp.max_x, sp.min_y) > 0 &&
           p.eval(sp.min_x, sp.max_y) > 0 && p.eval(sp.max_x, sp.max_y) > 0;
  };

  // initial weighted least-squares fits
  parallel_for(0, k, workers, [&](int lo, int hi) {
    for (int s = lo; s < hi; ++s) {
      detail::SupportData& sd = support[s];
      PiecewiseModel& m = models[s];
      if (detail::fit_plane(sd.xs, sd.ys, sd.d0, sd.ws, m.d0_plane)) pin_geometry(s, m.d0_plane);
      PlaneModel uplane, vplane;
      if (detail::fit_plane(sd.mxs, sd.mys, sd.mu, sd.mws, uplane) &&
          detail::fit_plane(sd.mxs, sd.mys, sd.mv, sd.mws, vplane)) {
        m.motion.a11 = uplane.a;
        m.motion.a12 = uplane.b;
        m.motion.tx = uplane.c;
        m.motion.a21 = vplane.a;
        m.motion.a22 = vplane.b;
        m.motion.ty = vplane.c;
        m.motion.valid = true;
        pin_motion(s, m.motion);
      }
      if (detail::fit_plane(sd.txs, sd.tys, sd.md1, sd.mws, m.d1_plane)) pin_d1(s, m.d1_plane);
    }
  });

  // degenerate fits inherit the nearest fitted model
  auto inherit = [&](auto member, auto pin) {
    for (int s = 0; s < k; ++s) {
      if ((models[s].*member).valid) continue;
      const Superpixel& sp = graph.superpixels[s];
      int donor = -1;
      for (const auto& [j, d] : sp.neighborhood)
        if ((models[j].*member).valid) {
          donor = j;
          break;
        }
      if (donor < 0) {  // fall back to the nearest fitted superpixel anywhere
        double best = std::numeric_limits<double>::infinity();
        for (int j = 0; j < k; ++j) {
          if (j == s || !(models[j].*member).valid) continue;
          double dx = graph.superpixels[j].centroid_x - sp.centroid_x;
          double dy = graph.superpixels[j].centroid_y - sp.centroid_y;
          double d2 = dx * dx + dy * dy;
          if (d2 < best) {
            best = d2;
            donor = j;
          }
        }
      }
      if (donor >= 0) {
        models[s].*member = models[donor].*member;
        pin(s, models[s].*member);
      }
    }
  };
  inherit(&PiecewiseModel::d0_plane, pin_geometry);
  inherit(&PiecewiseModel::motion, pin_motion);
  inherit(&PiecewiseModel::d1_plane, pin_d1);

  // refinement: propagation from adjacent superpixels plus gaussian parameter
  // perturbations, synchronized between rounds
  constexpr int kPerturbations = 4;
  constexpr double kSigmaLinear = 0.02;
  constexpr double kSigmaConst = 0.5;
  for (int iter = 0; iter < cfg.refinement_iterations; ++iter) {
    std::vector<PiecewiseModel> prev = models;
    parallel_for(0, k, workers, [&](int lo, int hi) {
      for (int s = lo; s < hi; ++s) {
        detail::SupportData& sd = support[s];
        PiecewiseModel& m = models[s];
        Rng rng(mix_seed(cfg.rng_seed, (static_cast<uint64_t>(iter) << 32) | s));

        double geo_res = m.d0_plane.valid
                             ? detail::plane_residual(m.d0_plane, sd.xs, sd.ys, sd.d0, sd.ws)
                             : std::numeric_limits<double>::infinity();
        auto try_geometry = [&](PlaneModel cand) {
          if (!cand.valid) return;
          if (!geometry_consistent(s, cand) || !positive_on(s, cand)) return;
          double r = detail::plane_residual(cand, sd.xs, sd.ys, sd.d0, sd.ws);
          if (r < geo_res) {
            geo_res = r;
            m.d0_plane = cand;
          }
        };
        double mot_res = m.motion.valid ? detail::motion_residual(m.motion, sd)
                                        : std::numeric_limits<double>::infinity();
        auto try_motion = [&](AffineMotion cand) {
          if (!cand.valid) return;
          if (!motion_consistent(s, cand)) return;
          double r = detail::motion_residual(cand, sd);
          if (r < mot_res) {
            mot_res = r;
            m.motion = cand;
          }
        };
        double d1_res = m.d1_plane.valid
                            ? detail::plane_residual(m.d1_plane, sd.txs, sd.tys, sd.md1, sd.mws)
                            : std::numeric_limits<double>::infinity();
        auto try_d1 = [&](PlaneModel cand) {
          if (!cand.valid) return;
          if (!d1_consistent(s, cand)) return;
          double r = detail::plane_residual(cand, sd.txs, sd.tys, sd.md1, sd.mws);
          if (r < d1_res) {
            d1_res = r;
            m.d1_plane = cand;
          }
        };

        for (int j : graph.superpixels[s].adjacent) {
          try_geometry(prev[j].d0_plane);
          try_motion(prev[j].motion);
          try_d1(prev[j].d1_plane);
        }
        for (int t = 0; t < kPerturbations; ++t) {
          PlaneModel pg = m.d0_plane;
          pg.a += rng.gaussian(0, kSigmaLinear);
          pg.b += rng.gaussian(0, kSigmaLinear);
          pg.c += rng.gaussian(0, kSigmaConst);
          try_geometry(pg);
          AffineMotion pm = m.motion;
          pm.a11 += rng.gaussian(0, kSigmaLinear);
          pm.a12 += rng.gaussian(0, kSigmaLinear);
          pm.a21 += rng.gaussian(0, kSigmaLinear);
          pm.a22 += rng.gaussian(0, kSigmaLinear);
          pm.tx += rng.gaussian(0, kSigmaConst);
          pm.ty += rng.gaussian(0, kSigmaConst);
          try_motion(pm);
          PlaneModel pd = m.d1_plane;
          pd.a += rng.gaussian(0, kSigmaLinear);
          pd.b += rng.gaussian(0, kSigmaLinear);
          pd.c += rng.gaussian(0, kSigmaConst);
          try_d1(pd);
        }
      }
    });
  }
  return models;
}

struct DensifyDiagnostics {
  size_t clamped_pixels = 0;
};

// Every pixel evaluates its superpixel's models; seed pixels keep their
// measured d0 verbatim. Output is dense.
inline SceneFlowField densify_field(const SuperpixelGraph& graph,
                                    const std::vector<PiecewiseModel>& models,
                                    const MatchSet& matches,
                                    DensifyDiagnostics* diag = nullptr) {
  const int w = graph.labels.width(), h = graph.labels.height();
  for (const auto& m : models)
    if (!m.d0_plane.valid || !m.motion.valid || !m.d1_plane.valid)
      throw std::runtime_error("densify_field: superpixel without a complete model");

  SceneFlowField out(w, h);
  size_t clamped = 0;
  constexpr float kSmallest = std::numeric_limits<float>::min();
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const PiecewiseModel& m = models[graph.labels.at(x, y)];
      SceneFlowVector sf;
      sf.u = static_cast<float>(m.motion.u(x, y));
      sf.v = static_cast<float>(m.motion.v(x, y));
      sf.d0 = static_cast<float>(m.d0_plane.eval(x, y));
      sf.d1 = static_cast<float>(m.d1_plane.eval(x + sf.u, y + sf.v));
      if (sf.d0 <= 0.f) {
        sf.d0 = kSmallest;
        ++clamped;
      }
      if (sf.d1 <= 0.f) {
        sf.d1 = kSmallest;
        ++clamped;
      }
      out.set(x, y, sf);
    }
  for (const auto& m : matches.matches)
    if (m.role == PixelRole::kSeed && out.data().in_bounds(m.pos)) {
      out.data().at(m.pos).d0 = m.sf.d0;  // measured value passes through
      out.seed_mask().at(m.pos) = 1;
    }
  if (diag) diag->clamped_pixels = clamped;
  return out;
}

}  // namespace fuseflow
