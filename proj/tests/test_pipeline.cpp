#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>

#include "fuseflow/field_io.hpp"
#include "fuseflow/pipeline.hpp"

using namespace fuseflow;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string str(const std::string& sub = "") const { return (path / sub).string(); }
};

void write_scene_inputs(const SyntheticScene& scene, const TempDir& dir) {
  auto save_gray = [&](const Image8& img, const std::string& name) {
    PngImage png;
    png.width = img.width();
    png.height = img.height();
    png.channels = 1;
    png.bit_depth = 8;
    png.samples.assign(png.width * static_cast<size_t>(png.height), 0);
    for (int y = 0; y < png.height; ++y)
      for (int x = 0; x < png.width; ++x) png.at(x, y) = img.at(x, y);
    save_png(dir.str(name), png);
  };
  save_gray(scene.frames.left0, "left0.png");
  save_gray(scene.frames.left1, "left1.png");
  save_gray(scene.frames.right0, "right0.png");
  save_gray(scene.frames.right1, "right1.png");
  save_disparity(dir.str("lidar0.png"), sparse_to_disparity_image(scene.frames.lidar0));
  save_disparity(dir.str("lidar1.png"), sparse_to_disparity_image(scene.frames.lidar1));
  save_flow(dir.str("gt_flow.png"), field_to_flow_image(scene.gt));
  save_disparity(dir.str("gt_disp0.png"), field_to_disparity_image(scene.gt, 0));
  save_disparity(dir.str("gt_disp1.png"), field_to_disparity_image(scene.gt, 1));
}

SyntheticScene small_scene() {
  SyntheticSceneSpec spec;
  spec.width = 96;
  spec.height = 72;
  spec.texture_seed = 77;
  spec.lidar_window = 21;
  PlaneSpec bg;
  bg.x1 = 96;
  bg.y1 = 72;
  bg.c = 12;
  bg.tx = 3;
  bg.ty = 1;
  spec.planes = {bg};
  return generate_synthetic_scene(spec);
}

}  // namespace

TEST_CASE("config entries override with validation and suggestions") {
  PipelineConfig cfg;
  SECTION("defaults carry the documented values") {
    CHECK(cfg.window.size == 15);
    CHECK(cfg.matching.patch.radius == 3);
    CHECK(cfg.matching.pyramid_levels == 4);
    CHECK(cfg.sparsify_window == 5);
    CHECK(cfg.interp.superpixel_count == 1000);
    CHECK(cfg.outlier_rule == OutlierRule::kAnd);
  }
  SECTION("known keys are applied") {
    apply_config_entry(cfg, "window", "11");
    CHECK(cfg.window.size == 11);
    apply_config_entry(cfg, "outlier_rule", "or");
    CHECK(cfg.outlier_rule == OutlierRule::kOr);
  }
  SECTION("unknown keys fail with a suggestion") {
    try {
      apply_config_entry(cfg, "wndow", "15");
      FAIL("expected an exception");
    } catch (const std::invalid_argument& e) {
      std::string msg = e.what();
      CHECK(msg.find("wndow") != std::string::npos);
      CHECK(msg.find("did you mean 'window'") != std::string::npos);
      CHECK(msg.find("valid keys") != std::string::npos);
    }
  }
  SECTION("malformed values carry the line number through file parsing") {
    TempDir dir("fuseflow_cfg_test");
    {
      std::ofstream out(dir.str("cfg.txt"));
      out << "# comment\n";
      out << "window=11\n";
      out << "iterations=abc\n";
    }
    try {
      parse_config_file(cfg, dir.str("cfg.txt"));
      FAIL("expected an exception");
    } catch (const std::invalid_argument& e) {
      std::string msg = e.what();
      CHECK(msg.find("line 3") != std::string::npos);
    }
    CHECK(cfg.window.size == 11);  // earlier lines applied
  }
  SECTION("file value then flag override: the flag wins") {
    TempDir dir("fuseflow_cfg_test2");
    {
      std::ofstream out(dir.str("cfg.txt"));
      out << "window=11\n";
    }
    parse_config_file(cfg, dir.str("cfg.txt"));
    apply_config_entry(cfg, "window", "9");  // command-line flags apply after the file
    CHECK(cfg.window.size == 9);
  }
}

TEST_CASE("field serialization round-trips through the KITTI rasters") {
  SceneFlowField field(17, 13);
  Rng rng(31);
  for (int y = 0; y < 13; ++y)
    for (int x = 0; x < 17; ++x) {
      if (rng.uniform01() < 0.2) continue;
      SceneFlowVector sf{static_cast<float>(std::lround(rng.uniform(-10, 10) * 64) / 64.0),
                         static_cast<float>(std::lround(rng.uniform(-10, 10) * 64) / 64.0),
                         static_cast<float>(std::lround(rng.uniform(1, 60) * 256) / 256.0),
                         static_cast<float>(std::lround(rng.uniform(1, 60) * 256) / 256.0)};
      field.set(x, y, sf, rng.uniform01() < 0.1);
      if (rng.uniform01() < 0.1) field.motion_mask().at(x, y) = 0;  // geometry-only
    }
  TempDir dir("fuseflow_field_io");
  save_field(dir.str(), field);
  SceneFlowField loaded = load_field(dir.str());
  REQUIRE(loaded.width() == field.width());
  for (int y = 0; y < 13; ++y)
    for (int x = 0; x < 17; ++x) {
      REQUIRE(loaded.valid(x, y) == field.valid(x, y));
      if (!field.valid(x, y)) continue;
      CHECK(loaded.is_seed(x, y) == field.is_seed(x, y));
      CHECK(loaded.motion_valid(x, y) == field.motion_valid(x, y));
      CHECK(loaded.data().at(x, y).d0 == field.data().at(x, y).d0);
      if (field.motion_valid(x, y)) {
        CHECK(loaded.data().at(x, y).u == field.data().at(x, y).u);
        CHECK(loaded.data().at(x, y).v == field.data().at(x, y).v);
        CHECK(loaded.data().at(x, y).d1 == field.data().at(x, y).d1);
      }
    }
}

TEST_CASE("pipeline runs end to end on a small synthetic scene") {
  SyntheticScene scene = small_scene();
  TempDir dir("fuseflow_pipe");
  write_scene_inputs(scene, dir);

  PipelineConfig cfg;
  cfg.left0 = dir.str("left0.png");
  cfg.left1 = dir.str("left1.png");
  cfg.right0 = dir.str("right0.png");
  cfg.right1 = dir.str("right1.png");
  cfg.lidar0 = dir.str("lidar0.png");
  cfg.lidar1 = dir.str("lidar1.png");
  cfg.gt_flow = dir.str("gt_flow.png");
  cfg.gt_disp0 = dir.str("gt_disp0.png");
  cfg.gt_disp1 = dir.str("gt_disp1.png");
  cfg.out_dir = dir.str("out");
  cfg.matching.pyramid_levels = 3;
  cfg.matching.iterations_per_level = 4;
  cfg.matching.max_disparity = 32.f;
  cfg.filter.sgm.max_disparity = 32;
  cfg.interp.superpixel_count = 150;
  cfg.dump_stages = true;
  cfg.workers = 2;

  PipelineResult result = run_pipeline(cfg);
  CHECK(result.dense.density() == 1.0);
  REQUIRE(result.report.has_value());
  CHECK(result.report->dense.evaluated > 0);

  for (const char* name :
       {"flow.png", "disp_0.png", "disp_1.png", "flow_vis.png", "disp_0_vis.png",
        "disp_1_vis.png", "error_map.png", "metrics.txt", "metrics.csv", "MANIFEST"})
    CHECK(fs::exists(fs::path(cfg.out_dir) / name));

  // stage dumps exist and their densities shrink monotonically
  SceneFlowField m = load_field(dir.str("out/stage_matching"));
  SceneFlowField s1 = load_field(dir.str("out/stage_filter1"));
  SceneFlowField s2 = load_field(dir.str("out/stage_filter2"));
  SceneFlowField sc = load_field(dir.str("out/stage_cluster"));
  SceneFlowField sp = load_field(dir.str("out/stage_sparsified"));
  CHECK(m.density() == 1.0);
  CHECK(s1.density() <= m.density());
  CHECK(s2.density() <= s1.density());
  CHECK(sc.density() <= s2.density());
  CHECK(sp.density() <= sc.density());
  CHECK(sp.density() <= 1.0 / 9.0 + static_cast<double>(scene.frames.lidar0.size()) /
                                        (scene.gt.width() * scene.gt.height()) + 1e-9);
}

TEST_CASE("missing inputs abort with a manifest naming the failed stage") {
  TempDir dir("fuseflow_pipe_fail");
  PipelineConfig cfg;
  cfg.left0 = dir.str("does_not_exist.png");
  cfg.left1 = cfg.left0;
  cfg.right0 = cfg.left0;
  cfg.right1 = cfg.left0;
  cfg.out_dir = dir.str("out");
  CHECK_THROWS(run_pipeline(cfg));
  std::ifstream manifest(dir.str("out/MANIFEST"));
  REQUIRE(manifest.good());
  std::string content((std::istreambuf_iterator<char>(manifest)),
                      std::istreambuf_iterator<char>());
  CHECK(content.find("load-inputs: FAILED") != std::string::npos);
  CHECK_FALSE(fs::exists(dir.str("out/flow.png")));
}

TEST_CASE("rgb images collapse to rec601 luminance on load") {
  TempDir dir("fuseflow_lum");
  PngImage rgb;
  rgb.width = 3;
  rgb.height = 1;
  rgb.channels = 3;
  rgb.bit_depth = 8;
  rgb.samples = {255, 0, 0, 0, 255, 0, 30, 60, 90};
  save_png(dir.str("rgb.png"), rgb);
  Image8 lum = load_luminance(dir.str("rgb.png"));
  CHECK(lum.at(0, 0) == rec601_luminance(255, 0, 0));
  CHECK(lum.at(1, 0) == rec601_luminance(0, 255, 0));
  CHECK(lum.at(2, 0) == rec601_luminance(30, 60, 90));
}

TEST_CASE("worker count does not change pipeline results") {
  SyntheticScene scene = small_scene();
  TempDir dir("fuseflow_workers");
  write_scene_inputs(scene, dir);

  auto make_cfg = [&](const std::string& out, int workers) {
    PipelineConfig cfg;
    cfg.left0 = dir.str("left0.png");
    cfg.left1 = dir.str("left1.png");
    cfg.right0 = dir.str("right0.png");
    cfg.right1 = dir.str("right1.png");
    cfg.lidar0 = dir.str("lidar0.png");
    cfg.lidar1 = dir.str("lidar1.png");
    cfg.out_dir = dir.str(out);
    cfg.matching.pyramid_levels = 3;
    cfg.matching.iterations_per_level = 3;
    cfg.matching.max_disparity = 32.f;
    cfg.filter.sgm.max_disparity = 32;
    cfg.interp.superpixel_count = 120;
    cfg.workers = workers;
    return cfg;
  };
  SceneFlowField a = run_pipeline(make_cfg("out1", 1)).dense;
  SceneFlowField b = run_pipeline(make_cfg("out2", 2)).dense;
  CHECK(a == b);
}
