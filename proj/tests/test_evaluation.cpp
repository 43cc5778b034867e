#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "fuseflow/evaluation.hpp"
#include "fuseflow/filtering.hpp"
#include "fuseflow/random.hpp"

using namespace fuseflow;

namespace {

SceneFlowField constant_field(int w, int h, SceneFlowVector sf) {
  SceneFlowField f(w, h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) f.set(x, y, sf);
  return f;
}

double bilinear(const Image8& img, double x, double y) {
  int x0 = static_cast<int>(std::floor(x)), y0 = static_cast<int>(std::floor(y));
  double fx = x - x0, fy = y - y0;
  auto s = [&](int xx, int yy) { return static_cast<double>(img.at_clamped(xx, yy)); };
  return (1 - fx) * (1 - fy) * s(x0, y0) + fx * (1 - fy) * s(x0 + 1, y0) +
         (1 - fx) * fy * s(x0, y0 + 1) + fx * fy * s(x0 + 1, y0 + 1);
}

}  // namespace

TEST_CASE("evaluating a field against itself is all zeros") {
  Rng rng(8);
  SceneFlowField f(24, 18);
  for (int y = 0; y < 18; ++y)
    for (int x = 0; x < 24; ++x)
      if (rng.uniform01() < 0.8)
        f.set(x, y, {static_cast<float>(rng.uniform(-5, 5)),
                     static_cast<float>(rng.uniform(-5, 5)),
                     static_cast<float>(rng.uniform(1, 30)),
                     static_cast<float>(rng.uniform(1, 30))});
  SparseDepthMap seeds(24, 18);
  seeds.add(5, 5, 10.f);
  EvalReport rep = evaluate_scene_flow(f, f, seeds, {});
  CHECK(rep.dense.epe_d0 == 0.0);
  CHECK(rep.dense.epe_d1 == 0.0);
  CHECK(rep.dense.epe_fl == 0.0);
  CHECK(rep.dense.out_sf == 0.0);
  CHECK(rep.seeds.out_sf == 0.0);
  CHECK(rep.window.out_sf == 0.0);
}

TEST_CASE("outlier rules: 4 px error on 100 px magnitude") {
  SceneFlowField gt = constant_field(1, 1, {100.f, 0.f, 50.f, 50.f});
  SceneFlowField result = constant_field(1, 1, {104.f, 0.f, 50.f, 50.f});
  SparseDepthMap seeds(1, 1);
  EvalReport and_rep = evaluate_scene_flow(result, gt, seeds, {}, OutlierRule::kAnd);
  EvalReport or_rep = evaluate_scene_flow(result, gt, seeds, {}, OutlierRule::kOr);
  CHECK(and_rep.dense.out_fl == 0.0);   // 4 px < 5% of 100 px
  CHECK(or_rep.dense.out_fl == 100.0);  // 4 px > 3 px
  CHECK(and_rep.dense.out_sf == 0.0);
  CHECK(or_rep.dense.out_sf == 100.0);
}

TEST_CASE("sf outliers dominate per-component outliers on the same pixel set") {
  Rng rng(21);
  const int w = 32, h = 24;
  SceneFlowField gt(w, h), result(w, h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      SceneFlowVector g{static_cast<float>(rng.uniform(-10, 10)),
                        static_cast<float>(rng.uniform(-10, 10)),
                        static_cast<float>(rng.uniform(5, 40)),
                        static_cast<float>(rng.uniform(5, 40))};
      gt.set(x, y, g);
      SceneFlowVector r = g;
      if (rng.uniform01() < 0.3) r.u += static_cast<float>(rng.uniform(-8, 8));
      if (rng.uniform01() < 0.3) r.d0 += static_cast<float>(rng.uniform(-8, 8));
      if (rng.uniform01() < 0.3) r.d1 += static_cast<float>(rng.uniform(-8, 8));
      result.set(x, y, r);
    }
  SparseDepthMap seeds(w, h);
  EvalReport rep = evaluate_scene_flow(result, gt, seeds, {});
  CHECK(rep.dense.out_sf >= rep.dense.out_d0);
  CHECK(rep.dense.out_sf >= rep.dense.out_d1);
  CHECK(rep.dense.out_sf >= rep.dense.out_fl);
}

TEST_CASE("outlier rates decrease when errors shrink") {
  const int w = 16, h = 16;
  SceneFlowField gt = constant_field(w, h, {0.f, 0.f, 20.f, 20.f});
  SceneFlowField big = constant_field(w, h, {8.f, 0.f, 20.f, 20.f});
  SceneFlowField small = constant_field(w, h, {2.f, 0.f, 20.f, 20.f});
  SparseDepthMap seeds(w, h);
  EvalReport rep_big = evaluate_scene_flow(big, gt, seeds, {});
  EvalReport rep_small = evaluate_scene_flow(small, gt, seeds, {});
  CHECK(rep_big.dense.out_sf >= rep_small.dense.out_sf);
  CHECK(rep_small.dense.out_sf == 0.0);
}

TEST_CASE("report serialization carries the table columns") {
  SceneFlowField gt = constant_field(4, 4, {1.f, 0.f, 10.f, 10.f});
  SparseDepthMap seeds(4, 4);
  EvalReport rep = evaluate_scene_flow(gt, gt, seeds, {});
  std::string kv = report_to_kv(rep);
  CHECK(kv.find("dense.epe_d0=") != std::string::npos);
  CHECK(kv.find("density=") != std::string::npos);
  std::string csv = report_to_csv(rep);
  size_t commas = 0;
  for (char c : csv) commas += c == ',';
  CHECK(commas == 7);  // 8 columns
}

TEST_CASE("zero-motion scene has conformal ground truth") {
  SyntheticSceneSpec spec;
  spec.width = 64;
  spec.height = 48;
  spec.texture_seed = 4;
  spec.lidar_window = 15;
  PlaneSpec plane;
  plane.x1 = 64;
  plane.y1 = 48;
  plane.c = 16.0;
  spec.planes = {plane};
  SyntheticScene scene = generate_synthetic_scene(spec);
  for (int y = 0; y < 48; ++y)
    for (int x = 0; x < 64; ++x) {
      const SceneFlowVector& sf = scene.gt.data().at(x, y);
      REQUIRE(sf.u == 0.f);
      REQUIRE(sf.v == 0.f);
      REQUIRE(sf.d0 == 16.f);
      REQUIRE(sf.d1 == 16.f);
    }
  // static scene: the two left images are identical
  CHECK(scene.frames.left0 == scene.frames.left1);
}

TEST_CASE("translating plane produces the closed-form scene flow") {
  SyntheticSceneSpec spec;
  spec.width = 64;
  spec.height = 48;
  spec.texture_seed = 5;
  spec.lidar_window = 15;
  PlaneSpec plane;
  plane.x1 = 64;
  plane.y1 = 48;
  plane.c = 16.0;
  plane.tx = 4.0;
  spec.planes = {plane};
  SyntheticScene scene = generate_synthetic_scene(spec);
  for (int y = 0; y < 48; ++y)
    for (int x = 0; x < 64; ++x) {
      const SceneFlowVector& sf = scene.gt.data().at(x, y);
      REQUIRE(sf.u == 4.f);
      REQUIRE(sf.v == 0.f);
      REQUIRE(sf.d0 == 16.f);
      REQUIRE(sf.d1 == 16.f);
    }
}

TEST_CASE("synthetic stereo warp consistency") {
  SyntheticSceneSpec spec;
  spec.width = 96;
  spec.height = 64;
  spec.texture_seed = 6;
  spec.lidar_window = 15;
  PlaneSpec plane;
  plane.x1 = 96;
  plane.y1 = 64;
  plane.a = 0.05;
  plane.c = 12.0;
  plane.tx = 3.0;
  plane.ty = 1.0;
  plane.dd = 0.5;
  spec.planes = {plane};
  SyntheticScene scene = generate_synthetic_scene(spec);

  double worst = 0;
  for (int y = 4; y < 60; ++y)
    for (int x = 20; x < 92; ++x) {
      const SceneFlowVector& sf = scene.gt.data().at(x, y);
      double r0 = bilinear(scene.frames.right0, x - sf.d0, y);
      worst = std::max(worst, std::fabs(r0 - scene.frames.left0.at(x, y)));
    }
  CHECK(worst < 2.0);
}

TEST_CASE("synthetic flow warp consistency") {
  SyntheticSceneSpec spec;
  spec.width = 96;
  spec.height = 64;
  spec.texture_seed = 61;
  spec.lidar_window = 15;
  PlaneSpec plane;
  plane.x1 = 96;
  plane.y1 = 64;
  plane.c = 14.0;
  plane.tx = -2.0;
  plane.ty = 3.0;
  spec.planes = {plane};
  SyntheticScene scene = generate_synthetic_scene(spec);
  double worst = 0;
  for (int y = 8; y < 56; ++y)
    for (int x = 8; x < 88; ++x) {
      const SceneFlowVector& sf = scene.gt.data().at(x, y);
      double l1 = bilinear(scene.frames.left1, x + sf.u, y + sf.v);
      worst = std::max(worst, std::fabs(l1 - scene.frames.left0.at(x, y)));
    }
  CHECK(worst < 2.0);
}

TEST_CASE("backward ground truth inverts the forward field") {
  SyntheticSceneSpec spec;
  spec.width = 64;
  spec.height = 48;
  spec.texture_seed = 62;
  spec.lidar_window = 15;
  PlaneSpec plane;
  plane.x1 = 64;
  plane.y1 = 48;
  plane.c = 10.0;
  plane.tx = 5.0;
  plane.ty = -2.0;
  plane.dd = 1.0;
  spec.planes = {plane};
  SyntheticScene scene = generate_synthetic_scene(spec);
  FilterConfig fcfg;
  Stage2Result res = stage2_forward_backward_check(scene.gt, scene.gt_backward, fcfg);
  size_t interior = 0, kept = 0;
  for (int y = 0; y < 48; ++y)
    for (int x = 0; x < 64; ++x) {
      int tx = x + 5, ty = y - 2;
      if (tx < 0 || tx >= 64 || ty < 0 || ty >= 48) continue;
      ++interior;
      kept += res.field.valid(x, y);
    }
  CHECK(kept == interior);
}

TEST_CASE("lidar sampling matches the sparsification of the analytic disparity") {
  SyntheticSceneSpec spec;
  spec.width = 64;
  spec.height = 48;
  spec.texture_seed = 63;
  spec.lidar_window = 15;
  PlaneSpec plane;
  plane.x1 = 64;
  plane.y1 = 48;
  plane.a = 0.1;
  plane.c = 10.0;
  spec.planes = {plane};
  SyntheticScene scene = generate_synthetic_scene(spec);
  CHECK(scene.frames.lidar0.size() == static_cast<size_t>(((64 + 14) / 15) * ((48 + 14) / 15)));
  for (const auto& e : scene.frames.lidar0.entries()) {
    float expect = static_cast<float>(0.1 * e.x + 10.0);
    CHECK(e.disparity == Catch::Approx(expect).epsilon(1e-6));
  }
}

TEST_CASE("planes that dip non-positive are rejected") {
  SyntheticSceneSpec spec;
  spec.width = 32;
  spec.height = 32;
  PlaneSpec plane;
  plane.x1 = 32;
  plane.y1 = 32;
  plane.a = -1.0;  // negative by x = 10
  plane.c = 8.0;
  spec.planes = {plane};
  CHECK_THROWS_AS(generate_synthetic_scene(spec), std::invalid_argument);
}

TEST_CASE("flow rendering basics") {
  SECTION("zero flow renders uniform white") {
    SceneFlowField f = constant_field(8, 6, {0.f, 0.f, 5.f, 5.f});
    PngImage png = render_flow_visualization(f, 10.0);
    for (int y = 0; y < 6; ++y)
      for (int x = 0; x < 8; ++x)
        for (int c = 0; c < 3; ++c) REQUIRE(png.at(x, y, c) == 255);
  }
  SECTION("invalid pixels render black") {
    SceneFlowField f(4, 4);
    f.set(1, 1, {1.f, 0.f, 5.f, 5.f});
    PngImage png = render_flow_visualization(f, 10.0);
    CHECK(png.at(0, 0, 0) == 0);
    CHECK(png.at(0, 0, 1) == 0);
    CHECK(png.at(0, 0, 2) == 0);
  }
  SECTION("rendering is deterministic") {
    SceneFlowField f = constant_field(8, 6, {2.f, -1.f, 5.f, 6.f});
    PngImage a = render_flow_visualization(f);
    PngImage b = render_flow_visualization(f);
    CHECK(a.samples == b.samples);
    CHECK(encode_png(a) == encode_png(b));
  }
}

TEST_CASE("error map marks inliers green and invalid pixels black") {
  SceneFlowField gt = constant_field(6, 6, {1.f, 0.f, 10.f, 10.f});
  SceneFlowField result = gt;
  result.data().at(3, 3).u += 50.f;  // gross outlier
  result.invalidate(0, 0);
  PngImage png = render_error_map(result, gt);
  CHECK(png.at(1, 1, 1) == 200);  // inlier green
  CHECK(png.at(1, 1, 0) == 0);
  CHECK(png.at(3, 3, 0) > 0);     // outlier red
  CHECK(png.at(3, 3, 1) == 0);
  CHECK(png.at(0, 0, 0) == 0);    // invalid black
  CHECK(png.at(0, 0, 1) == 0);
}

TEST_CASE("disparity rendering is monotone in disparity") {
  SceneFlowField f(3, 1);
  f.set(0, 0, {0.f, 0.f, 5.f, 5.f});
  f.set(1, 0, {0.f, 0.f, 15.f, 15.f});
  f.set(2, 0, {0.f, 0.f, 30.f, 30.f});
  PngImage png = render_disparity_visualization(f, 0, 30.0);
  CHECK(png.at(0, 0, 0) < png.at(1, 0, 0));
  CHECK(png.at(1, 0, 0) < png.at(2, 0, 0));
  CHECK(png.at(0, 0, 2) > png.at(2, 0, 2));
}
