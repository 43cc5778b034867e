#pragma once

#include <cmath>
#include <cstdint>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "fuseflow/core.hpp"
#include "fuseflow/kitti_io.hpp"
#include "fuseflow/matching.hpp"
#include "fuseflow/png_io.hpp"
#include "fuseflow/random.hpp"

namespace fuseflow {

// Outlier rule: the KITTI convention requires error > 3 px AND > 5% of the
// ground-truth magnitude; the strict-OR variant flags error > 3 px OR > 5%.
enum class OutlierRule { kAnd, kOr };

struct RegionReport {
  double epe_d0 = 0, epe_d1 = 0, epe_fl = 0;
  double out_d0 = 0, out_d1 = 0, out_fl = 0, out_sf = 0;  // percent
  size_t evaluated = 0;
};

struct EvalReport {
  RegionReport dense, seeds, window;
  double density = 0;  // of the evaluated result field
  OutlierRule rule = OutlierRule::kAnd;
};

namespace detail {

inline bool is_outlier(double err, double gt_magnitude, OutlierRule rule) {
  bool over_px = err > 3.0;
  bool over_rel = err > 0.05 * gt_magnitude;
  return rule == OutlierRule::kAnd ? (over_px && over_rel) : (over_px || over_rel);
}

}  // namespace detail

// Region masks follow the evaluation protocol: seed pixels, the union of the
// seed support windows, and all pixels. Metrics run over pixels where both
// the ground truth and the result are valid.
inline EvalReport evaluate_scene_flow(const SceneFlowField& result, const SceneFlowField& gt,
                                      const SparseDepthMap& seeds,
                                      const SupportWindowConfig& window,
                                      OutlierRule rule = OutlierRule::kAnd) {
  if (result.width() != gt.width() || result.height() != gt.height())
    throw std::invalid_argument("evaluate_scene_flow: dimension mismatch");

  const int w = gt.width(), h = gt.height();
  Grid<uint8_t> seed_mask(w, h, 0);
  Grid<uint8_t> window_mask(w, h, 0);
  int half = window.size / 2;
  for (const auto& e : seeds.entries()) {
    seed_mask.at(e.x, e.y) = 1;
    for (int y = std::max(0, e.y - half); y <= std::min(h - 1, e.y + half); ++y)
      for (int x = std::max(0, e.x - half); x <= std::min(w - 1, e.x + half); ++x)
        window_mask.at(x, y) = 1;
  }

  struct Accum {
    double sum_d0 = 0, sum_d1 = 0, sum_fl = 0;
    size_t n = 0, bad_d0 = 0, bad_d1 = 0, bad_fl = 0, bad_sf = 0;
  } dense, seed_acc, window_acc;

  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      if (!gt.valid(x, y) || !result.valid(x, y)) continue;
      const SceneFlowVector& r = result.data().at(x, y);
      const SceneFlowVector& g = gt.data().at(x, y);
      double e_d0 = std::fabs(r.d0 - g.d0);
      double e_d1 = std::fabs(r.d1 - g.d1);
      double e_fl = std::hypot(r.u - g.u, r.v - g.v);
      bool bad0 = detail::is_outlier(e_d0, std::fabs(g.d0), rule);
      bool bad1 = detail::is_outlier(e_d1, std::fabs(g.d1), rule);
      bool badf = detail::is_outlier(e_fl, std::hypot(g.u, g.v), rule);
      auto feed = [&](Accum& a) {
        a.sum_d0 += e_d0;
        a.sum_d1 += e_d1;
        a.sum_fl += e_fl;
        a.n++;
        a.bad_d0 += bad0;
        a.bad_d1 += bad1;
        a.bad_fl += badf;
        a.bad_sf += (bad0 || bad1 || badf);
      };
      feed(dense);
      if (seed_mask.at(x, y)) feed(seed_acc);
      if (window_mask.at(x, y)) feed(window_acc);
    }

  auto to_report = [](const Accum& a) {
    RegionReport r;
    r.evaluated = a.n;
    if (a.n == 0) return r;
    r.epe_d0 = a.sum_d0 / a.n;
    r.epe_d1 = a.sum_d1 / a.n;
    r.epe_fl = a.sum_fl / a.n;
    r.out_d0 = 100.0 * a.bad_d0 / a.n;
    r.out_d1 = 100.0 * a.bad_d1 / a.n;
    r.out_fl = 100.0 * a.bad_fl / a.n;
    r.out_sf = 100.0 * a.bad_sf / a.n;
    return r;
  };

  EvalReport report;
  report.dense = to_report(dense);
  report.seeds = to_report(seed_acc);
  report.window = to_report(window_acc);
  report.density = result.density();
  report.rule = rule;
  return report;
}

inline std::string report_to_kv(const EvalReport& r) {
  std::ostringstream os;
  os.precision(6);
  os << std::fixed;
  os << "outlier_rule=" << (r.rule == OutlierRule::kAnd ? "and" : "or") << "\n";
  os << "density=" << 100.0 * r.density << "\n";
  auto region = [&](const char* name, const RegionReport& rr) {
    os << name << ".epe_d0=" << rr.epe_d0 << "\n";
    os << name << ".epe_d1=" << rr.epe_d1 << "\n";
    os << name << ".epe_fl=" << rr.epe_fl << "\n";
    os << name << ".outliers_d0=" << rr.out_d0 << "\n";
    os << name << ".outliers_d1=" << rr.out_d1 << "\n";
    os << name << ".outliers_fl=" << rr.out_fl << "\n";
    os << name << ".outliers_sf=" << rr.out_sf << "\n";
    os << name << ".evaluated=" << rr.evaluated << "\n";
  };
  region("dense", r.dense);
  region("seeds", r.seeds);
  region("window", r.window);
  return os.str();
}

// CSV row in table column order: EPE D0, D1, Fl; outliers D0, D1, Fl, SF; density.
inline std::string report_to_csv(const EvalReport& r) {
  std::ostringstream os;
  os.precision(4);
  os << std::fixed;
  const RegionReport& d = r.dense;
  os << d.epe_d0 << "," << d.epe_d1 << "," << d.epe_fl << "," << d.out_d0 << "," << d.out_d1
     << "," << d.out_fl << "," << d.out_sf << "," << 100.0 * r.density << "\n";
  return os.str();
}

// --- synthetic scenes ---------------------------------------------------------

// A scene is a stack of planar patches over a background plane, each carrying
// a disparity plane, a rigid 2D motion and a constant disparity change. The
// first plane must cover the full image. Larger disparity occludes.
struct PlaneSpec {
  int x0 = 0, y0 = 0, x1 = 0, y1 = 0;  // half-open region
  double a = 0, b = 0, c = 16;          // d0(x, y) = a*x + b*y + c
  double angle = 0;                     // rotation about the region center, radians
  double tx = 0, ty = 0;                // translation, px
  double dd = 0;                        // d1 = d0 + dd
  double brightness = 0;                // texture intensity offset
  bool textureless = false;             // render as a constant patch
};

struct SyntheticSceneSpec {
  int width = 256;
  int height = 192;
  std::vector<PlaneSpec> planes;
  uint64_t texture_seed = 7;
  int lidar_window = 31;  // sparsification cell for simulated LiDAR
};

struct SyntheticScene {
  CalibratedFrameSet frames;
  SceneFlowField gt;           // forward, on the reference grid
  SceneFlowField gt_backward;  // backward, on the t1 grid
  SyntheticSceneSpec spec;
};

namespace detail {

struct Affine2 {
  double m00 = 1, m01 = 0, m10 = 0, m11 = 1, tx = 0, ty = 0;

  std::pair<double, double> apply(double x, double y) const {
    return {m00 * x + m01 * y + tx, m10 * x + m11 * y + ty};
  }
  Affine2 inverse() const {
    double det = m00 * m11 - m01 * m10;
    if (std::fabs(det) < 1e-12) throw std::runtime_error("affine map not invertible");
    Affine2 inv;
    inv.m00 = m11 / det;
    inv.m01 = -m01 / det;
    inv.m10 = -m10 / det;
    inv.m11 = m00 / det;
    inv.tx = -(inv.m00 * tx + inv.m01 * ty);
    inv.ty = -(inv.m10 * tx + inv.m11 * ty);
    return inv;
  }
};

// Band-limited analytic texture: a sum of random-phase cosines with integer
// wavenumbers (periodic over the image). The curvature budget keeps bilinear
// resampling of rendered views within ~1 intensity level while leaving enough
// gradient energy for patch matching.
class SceneTexture {
 public:
  SceneTexture(int w, int h, uint64_t seed) {
    Rng rng(seed);
    constexpr int kWaves = 48;
    constexpr double kTwoPi = 6.283185307179586;
    double curvature = 0.0;
    for (int i = 0; i < kWaves; ++i) {
      Wave wv{};
      for (int attempt = 0; attempt < 100; ++attempt) {
        double lambda = rng.uniform(8.0, 40.0);
        double theta = rng.uniform(0.0, kTwoPi);
        int nx = static_cast<int>(std::lround(w * std::cos(theta) / lambda));
        int ny = static_cast<int>(std::lround(h * std::sin(theta) / lambda));
        if (nx == 0 && ny == 0) continue;
        wv.kx = static_cast<float>(kTwoPi * nx / w);
        wv.ky = static_cast<float>(kTwoPi * ny / h);
        break;
      }
      wv.phase = static_cast<float>(rng.uniform(0.0, kTwoPi));
      double omega2 = wv.kx * wv.kx + wv.ky * wv.ky;
      wv.amp = static_cast<float>(rng.uniform(0.5, 1.0) / std::max(omega2, 1e-4));
      curvature += wv.amp * omega2;
      waves_.push_back(wv);
    }
    // scale so the summed |f''| bound keeps bilinear error near one level
    double scale = curvature > 0 ? 9.0 / curvature : 1.0;
    for (auto& wv : waves_) wv.amp = static_cast<float>(wv.amp * scale);
  }

  // continuous sample for plane `index` at reference-frame coordinates
  double sample(const PlaneSpec& plane, int index, double x, double y) const {
    if (plane.textureless) return 128.0 + plane.brightness;
    double ox = x + 137.31 * index;
    double oy = y + 91.77 * index;
    double v = 128.0;
    for (const auto& wv : waves_)
      v += wv.amp * std::cos(wv.kx * ox + wv.ky * oy + wv.phase);
    return v + plane.brightness;
  }

 private:
  struct Wave {
    float kx, ky, phase, amp;
  };
  std::vector<Wave> waves_;
};

inline uint8_t quantize_intensity(double v) {
  long q = std::lround(v);
  return static_cast<uint8_t>(q < 0 ? 0 : (q > 255 ? 255 : q));
}

}  // namespace detail

class SyntheticSceneBuilder {
 public:
  explicit SyntheticSceneBuilder(const SyntheticSceneSpec& spec)
      : spec_(spec), texture_(spec.width, spec.height, spec.texture_seed) {
    if (spec.planes.empty())
      throw std::invalid_argument("synthetic scene: need at least one plane");
    const PlaneSpec& bg = spec.planes.front();
    if (bg.x0 > 0 || bg.y0 > 0 || bg.x1 < spec.width || bg.y1 < spec.height)
      throw std::invalid_argument("synthetic scene: first plane must cover the image");
    for (const auto& p : spec.planes) {
      auto check = [&](double x, double y) {
        if (p.a * x + p.b * y + p.c <= 0 || p.a * x + p.b * y + p.c + p.dd <= 0)
          throw std::invalid_argument("synthetic scene: plane yields non-positive disparity");
      };
      check(p.x0, p.y0);
      check(p.x1 - 1, p.y0);
      check(p.x0, p.y1 - 1);
      check(p.x1 - 1, p.y1 - 1);
    }
    for (const auto& p : spec.planes) {
      motion_.push_back(make_motion(p));
      motion_inv_.push_back(motion_.back().inverse());
      detail::Affine2 m_r0;  // p -> p - (d0(p), 0)
      m_r0.m00 = 1 - p.a;
      m_r0.m01 = -p.b;
      m_r0.tx = -p.c;
      right0_inv_.push_back(m_r0.inverse());
      detail::Affine2 m_r1 = motion_.back();  // p -> motion(p) - (d1(p), 0)
      m_r1.m00 -= p.a;
      m_r1.m01 -= p.b;
      m_r1.tx -= p.c + p.dd;
      right1_inv_.push_back(m_r1.inverse());
    }
  }

  double d0(int plane, double x, double y) const {
    const PlaneSpec& p = spec_.planes[plane];
    return p.a * x + p.b * y + p.c;
  }

  bool covers(int plane, double x, double y) const {
    const PlaneSpec& p = spec_.planes[plane];
    return x >= p.x0 && x < p.x1 && y >= p.y0 && y < p.y1;
  }

  // visible plane at reference-frame position: largest d0 among covers
  int visible(double x, double y) const {
    int best = 0;
    double best_d = -1;
    for (size_t i = 0; i < spec_.planes.size(); ++i) {
      if (!covers(static_cast<int>(i), x, y)) continue;
      double d = d0(static_cast<int>(i), x, y);
      if (d > best_d) {
        best_d = d;
        best = static_cast<int>(i);
      }
    }
    return best;
  }

  SyntheticScene build() const {
    const int w = spec_.width, h = spec_.height;
    SyntheticScene scene;
    scene.spec = spec_;
    scene.frames.left0 = render(nullptr, false);
    scene.frames.right0 = render(&right0_inv_, false);
    scene.frames.left1 = render(&motion_inv_, true);
    scene.frames.right1 = render(&right1_inv_, true);

    scene.gt = SceneFlowField(w, h);
    DisparityImage dense0(w, h);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        int i = visible(x, y);
        const PlaneSpec& p = spec_.planes[i];
        auto [x1, y1] = motion_[i].apply(x, y);
        SceneFlowVector sf;
        sf.u = static_cast<float>(x1 - x);
        sf.v = static_cast<float>(y1 - y);
        sf.d0 = static_cast<float>(d0(i, x, y));
        sf.d1 = static_cast<float>(d0(i, x, y) + p.dd);
        scene.gt.set(x, y, sf);
        dense0.set(x, y, sf.d0);
      }

    scene.gt_backward = SceneFlowField(w, h);
    DisparityImage dense1(w, h);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        int i = visible_t1(x, y);
        auto [sx, sy] = motion_inv_[i].apply(x, y);
        double disp0 = d0(i, sx, sy);
        double disp1 = disp0 + spec_.planes[i].dd;
        if (disp0 <= 0 || disp1 <= 0)
          throw std::invalid_argument("synthetic scene: plane yields non-positive disparity");
        SceneFlowVector sf;
        sf.u = static_cast<float>(sx - x);
        sf.v = static_cast<float>(sy - y);
        sf.d0 = static_cast<float>(disp1);  // disparity at the backward reference time
        sf.d1 = static_cast<float>(disp0);
        scene.gt_backward.set(x, y, sf);
        dense1.set(x, y, static_cast<float>(disp1));
      }

    scene.frames.lidar0 = sparsify_depth(dense0, spec_.lidar_window);
    scene.frames.lidar1 = sparsify_depth(dense1, spec_.lidar_window);
    return scene;
  }

 private:
  detail::Affine2 make_motion(const PlaneSpec& p) const {
    double cx = 0.5 * (p.x0 + p.x1), cy = 0.5 * (p.y0 + p.y1);
    double ca = std::cos(p.angle), sa = std::sin(p.angle);
    detail::Affine2 m;
    m.m00 = ca;
    m.m01 = -sa;
    m.m10 = sa;
    m.m11 = ca;
    m.tx = cx - (ca * cx - sa * cy) + p.tx;
    m.ty = cy - (sa * cx + ca * cy) + p.ty;
    return m;
  }

  // visible plane in the t1 frame, z-buffered by d1
  int visible_t1(double x, double y) const {
    int best = 0;
    double best_d = -std::numeric_limits<double>::infinity();
    for (size_t i = 0; i < spec_.planes.size(); ++i) {
      auto [sx, sy] = motion_inv_[i].apply(x, y);
      bool candidate = i == 0 || (covers(static_cast<int>(i), sx, sy) &&
                                  visible(sx, sy) == static_cast<int>(i));
      if (!candidate) continue;
      double d = d0(static_cast<int>(i), sx, sy) + spec_.planes[i].dd;
      if (d > best_d) {
        best_d = d;
        best = static_cast<int>(i);
      }
    }
    return best;
  }

  // Renders one view. `inverse` maps view coordinates back to the reference
  // frame per plane; nullptr renders the reference view itself. Candidates
  // z-buffer by the disparity of the view's timestamp; the background plane
  // always provides a fallback.
  Image8 render(const std::vector<detail::Affine2>* inverse, bool z_at_t1) const {
    const int w = spec_.width, h = spec_.height;
    Image8 img(w, h);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        int best = 0;
        double best_d = -std::numeric_limits<double>::infinity();
        double best_sx = x, best_sy = y;
        for (size_t i = 0; i < spec_.planes.size(); ++i) {
          double sx = x, sy = y;
          if (inverse) {
            auto [ix, iy] = (*inverse)[i].apply(x, y);
            sx = ix;
            sy = iy;
          }
          bool candidate = i == 0 || (covers(static_cast<int>(i), sx, sy) &&
                                      visible(sx, sy) == static_cast<int>(i));
          if (!candidate) continue;
          double d = d0(static_cast<int>(i), sx, sy) + (z_at_t1 ? spec_.planes[i].dd : 0.0);
          if (d > best_d) {
            best_d = d;
            best = static_cast<int>(i);
            best_sx = sx;
            best_sy = sy;
          }
        }
        img.at(x, y) = detail::quantize_intensity(
            texture_.sample(spec_.planes[best], best, best_sx, best_sy));
      }
    return img;
  }

  SyntheticSceneSpec spec_;
  detail::SceneTexture texture_;
  std::vector<detail::Affine2> motion_, motion_inv_;
  std::vector<detail::Affine2> right0_inv_;
  std::vector<detail::Affine2> right1_inv_;
};

inline SyntheticScene generate_synthetic_scene(const SyntheticSceneSpec& spec) {
  return SyntheticSceneBuilder(spec).build();
}

// --- visualization ------------------------------------------------------------

namespace detail {

inline void hsv_to_rgb(double hdeg, double s, double v, uint8_t rgb[3]) {
  double c = v * s;
  double hp = hdeg / 60.0;
  double m = v - c;
  double xc = c * (1.0 - std::fabs(std::fmod(hp, 2.0) - 1.0));
  double r = 0, g = 0, b = 0;
  if (hp < 1) r = c, g = xc;
  else if (hp < 2) r = xc, g = c;
  else if (hp < 3) g = c, b = xc;
  else if (hp < 4) g = xc, b = c;
  else if (hp < 5) r = xc, b = c;
  else r = c, b = xc;
  rgb[0] = quantize_intensity(255.0 * (r + m));
  rgb[1] = quantize_intensity(255.0 * (g + m));
  rgb[2] = quantize_intensity(255.0 * (b + m));
}

}  // namespace detail

// Color-wheel flow rendering: hue encodes direction, saturation encodes
// magnitude (white at zero flow); invalid pixels are black.
inline PngImage render_flow_visualization(const SceneFlowField& field,
                                          double max_magnitude = 0.0) {
  if (max_magnitude <= 0.0) {
    for (int y = 0; y < field.height(); ++y)
      for (int x = 0; x < field.width(); ++x)
        if (field.valid(x, y))
          max_magnitude = std::max(
              max_magnitude, static_cast<double>(std::hypot(field.data().at(x, y).u,
                                                            field.data().at(x, y).v)));
    if (max_magnitude <= 0.0) max_magnitude = 1.0;
  }
  PngImage png;
  png.width = field.width();
  png.height = field.height();
  png.channels = 3;
  png.bit_depth = 8;
  png.samples.assign(static_cast<size_t>(png.width) * png.height * 3, 0);
  for (int y = 0; y < png.height; ++y)
    for (int x = 0; x < png.width; ++x) {
      if (!field.valid(x, y) || !field.motion_valid(x, y)) continue;  // black
      const SceneFlowVector& sf = field.data().at(x, y);
      double mag = std::hypot(sf.u, sf.v);
      double hue = std::atan2(sf.v, sf.u) * 180.0 / 3.14159265358979324 + 180.0;
      if (hue >= 360.0) hue = 0.0;
      uint8_t rgb[3];
      detail::hsv_to_rgb(hue, std::min(1.0, mag / max_magnitude), 1.0, rgb);
      for (int c = 0; c < 3; ++c) png.at(x, y, c) = rgb[c];
    }
  return png;
}

// Monotone blue-to-yellow ramp over d / max_disparity; invalid pixels black.
inline PngImage render_disparity_visualization(const SceneFlowField& field, int which,
                                               double max_disparity = 0.0) {
  if (max_disparity <= 0.0) {
    for (int y = 0; y < field.height(); ++y)
      for (int x = 0; x < field.width(); ++x)
        if (field.valid(x, y)) {
          const SceneFlowVector& sf = field.data().at(x, y);
          max_disparity = std::max(max_disparity,
                                   static_cast<double>(which == 0 ? sf.d0 : sf.d1));
        }
    if (max_disparity <= 0.0) max_disparity = 1.0;
  }
  PngImage png;
  png.width = field.width();
  png.height = field.height();
  png.channels = 3;
  png.bit_depth = 8;
  png.samples.assign(static_cast<size_t>(png.width) * png.height * 3, 0);
  for (int y = 0; y < png.height; ++y)
    for (int x = 0; x < png.width; ++x) {
      if (!field.valid(x, y)) continue;
      if (which == 1 && !field.motion_valid(x, y)) continue;
      const SceneFlowVector& sf = field.data().at(x, y);
      double t = std::min(1.0, static_cast<double>(which == 0 ? sf.d0 : sf.d1) / max_disparity);
      png.at(x, y, 0) = detail::quantize_intensity(255.0 * t);
      png.at(x, y, 1) = detail::quantize_intensity(255.0 * t);
      png.at(x, y, 2) = detail::quantize_intensity(255.0 * (1.0 - t));
    }
  return png;
}

// Error map: green inliers, red scaled by outlier magnitude, black invalid.
inline PngImage render_error_map(const SceneFlowField& result, const SceneFlowField& gt,
                                 OutlierRule rule = OutlierRule::kAnd) {
  if (result.width() != gt.width() || result.height() != gt.height())
    throw std::invalid_argument("render_error_map: dimension mismatch");
  PngImage png;
  png.width = gt.width();
  png.height = gt.height();
  png.channels = 3;
  png.bit_depth = 8;
  png.samples.assign(static_cast<size_t>(png.width) * png.height * 3, 0);
  for (int y = 0; y < png.height; ++y)
    for (int x = 0; x < png.width; ++x) {
      if (!gt.valid(x, y) || !result.valid(x, y)) continue;  // black
      const SceneFlowVector& r = result.data().at(x, y);
      const SceneFlowVector& g = gt.data().at(x, y);
      double e_d0 = std::fabs(r.d0 - g.d0);
      double e_d1 = std::fabs(r.d1 - g.d1);
      double e_fl = std::hypot(r.u - g.u, r.v - g.v);
      bool bad = detail::is_outlier(e_d0, std::fabs(g.d0), rule) ||
                 detail::is_outlier(e_d1, std::fabs(g.d1), rule) ||
                 detail::is_outlier(e_fl, std::hypot(g.u, g.v), rule);
      if (!bad) {
        png.at(x, y, 1) = 200;
      } else {
        double worst = std::max({e_d0, e_d1, e_fl});
        png.at(x, y, 0) = detail::quantize_intensity(80.0 + 175.0 * std::min(1.0, worst / 12.0));
      }
    }
  return png;
}

}  // namespace fuseflow
