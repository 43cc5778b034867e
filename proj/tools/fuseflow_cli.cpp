// Command-line frontend: runs the full scene flow pipeline or any stage on
// dumped intermediates, plus the data-preparation and evaluation tools.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "fuseflow/fuseflow.hpp"

using namespace fuseflow;
namespace fs = std::filesystem;

namespace {

struct CommonFlags {
  std::string config;
  std::vector<std::string> sets;
  int window = -1;
  long long seed = -1;
  int workers = -1;
  std::string outlier_rule;
};

void add_common(CLI::App* app, CommonFlags& flags) {
  app->add_option("--config", flags.config, "key=value config file");
  app->add_option("--set", flags.sets, "extra config entry key=value (repeatable)");
  app->add_option("--window", flags.window, "support window size (odd)");
  app->add_option("--seed", flags.seed, "RNG seed");
  app->add_option("--workers", flags.workers, "worker thread cap");
  app->add_option("--outlier-rule", flags.outlier_rule, "outlier rule: and|or")
      ->check(CLI::IsMember({"and", "or"}));
}

// defaults < config file < command-line flags
void resolve(PipelineConfig& cfg, const CommonFlags& flags) {
  if (!flags.config.empty()) parse_config_file(cfg, flags.config);
  for (const auto& kv : flags.sets) {
    size_t eq = kv.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument("--set expects key=value, got: " + kv);
    apply_config_entry(cfg, kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (flags.window > 0) cfg.window.size = flags.window;
  if (flags.seed >= 0) cfg.seed = static_cast<uint64_t>(flags.seed);
  if (flags.workers > 0) cfg.workers = flags.workers;
  if (flags.outlier_rule == "and") cfg.outlier_rule = OutlierRule::kAnd;
  if (flags.outlier_rule == "or") cfg.outlier_rule = OutlierRule::kOr;
  cfg.apply_seed();
}

Image8 load_gray(const std::string& path) { return load_luminance(path); }

PngImage gray_to_png(const Image8& img) {
  PngImage png;
  png.width = img.width();
  png.height = img.height();
  png.channels = 1;
  png.bit_depth = 8;
  png.samples.assign(static_cast<size_t>(png.width) * png.height, 0);
  for (int y = 0; y < png.height; ++y)
    for (int x = 0; x < png.width; ++x) png.at(x, y) = img.at(x, y);
  return png;
}

SparseDepthMap load_lidar(const std::string& path, int w, int h) {
  if (path.empty()) return SparseDepthMap(w, h);
  return extract_sparse_measurements(load_disparity(path));
}

// matches.txt: x y u v d0 d1 role fb_residual motion_valid
void save_matches(const std::string& path, const MatchSet& set) {
  std::ofstream out(path, std::ios::trunc);
  out.precision(9);  // float round-trip
  out << "# width=" << set.width << " height=" << set.height << "\n";
  for (const auto& m : set.matches)
    out << m.pos.x << " " << m.pos.y << " " << m.sf.u << " " << m.sf.v << " " << m.sf.d0
        << " " << m.sf.d1 << " " << static_cast<int>(m.role) << " " << m.fb_residual << " "
        << (m.motion_valid ? 1 : 0) << "\n";
}

MatchSet load_matches(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open matches file: " + path);
  MatchSet set;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (line[0] == '#') {
      std::sscanf(line.c_str(), "# width=%d height=%d", &set.width, &set.height);
      continue;
    }
    Match m;
    int role = 0, motion = 1;
    if (std::sscanf(line.c_str(), "%d %d %f %f %f %f %d %f %d", &m.pos.x, &m.pos.y, &m.sf.u,
                    &m.sf.v, &m.sf.d0, &m.sf.d1, &role, &m.fb_residual, &motion) != 9)
      throw std::runtime_error("malformed matches line: " + line);
    m.role = static_cast<PixelRole>(role);
    m.motion_valid = motion != 0;
    set.matches.push_back(m);
  }
  return set;
}

MatchSet matches_from_field_dir(const std::string& dir) {
  SceneFlowField field = load_field(dir);
  Grid<float> residual(field.width(), field.height(), 0.f);
  if (fs::exists(fs::path(dir) / "residual.png")) residual = load_field_residual(dir);
  MatchSet set;
  set.width = field.width();
  set.height = field.height();
  for (int y = 0; y < field.height(); ++y)
    for (int x = 0; x < field.width(); ++x) {
      if (!field.valid(x, y)) continue;
      set.matches.push_back({{x, y},
                             field.data().at(x, y),
                             field.is_seed(x, y) ? PixelRole::kSeed : PixelRole::kFree,
                             residual.at(x, y),
                             field.motion_valid(x, y)});
    }
  return set;
}

int cmd_run(const PipelineConfig& cfg) {
  PipelineResult result = run_pipeline(cfg);
  if (result.report) {
    std::cout << report_to_kv(*result.report);
    std::cout << "csv: " << report_to_csv(*result.report);
  }
  std::cout << "outputs written to " << cfg.out_dir << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Dense scene flow from stereo images fused with sparse LiDAR"};
  app.require_subcommand(1);

  PipelineConfig cfg;
  CommonFlags flags;

  // ---- run -----------------------------------------------------------------
  CLI::App* run = app.add_subcommand("run", "full pipeline: match, filter, interpolate");
  run->add_option("--left0", cfg.left0, "left image at t0")->required();
  run->add_option("--left1", cfg.left1, "left image at t1")->required();
  run->add_option("--right0", cfg.right0, "right image at t0")->required();
  run->add_option("--right1", cfg.right1, "right image at t1")->required();
  run->add_option("--lidar0", cfg.lidar0, "sparse LiDAR disparity PNG at t0");
  run->add_option("--lidar1", cfg.lidar1, "sparse LiDAR disparity PNG at t1");
  run->add_option("--gt-flow", cfg.gt_flow, "ground-truth flow PNG");
  run->add_option("--gt-disp0", cfg.gt_disp0, "ground-truth disparity t0 PNG");
  run->add_option("--gt-disp1", cfg.gt_disp1, "ground-truth disparity t1 PNG");
  run->add_option("--out", cfg.out_dir, "output directory");
  run->add_option("--edge-map", cfg.edge_map, "precomputed edge map PNG");
  run->add_option("--ref-disparity", cfg.ref_disparity, "external reference disparity PNG");
  run->add_flag("--dump-stages", cfg.dump_stages, "write per-stage intermediate fields");
  add_common(run, flags);

  // ---- match ---------------------------------------------------------------
  CLI::App* match = app.add_subcommand("match", "matching stage only");
  std::string m_left0, m_left1, m_right0, m_right1, m_lidar0, m_lidar1, m_out = "out";
  std::string m_direction = "forward";
  match->add_option("--left0", m_left0)->required();
  match->add_option("--left1", m_left1)->required();
  match->add_option("--right0", m_right0)->required();
  match->add_option("--right1", m_right1)->required();
  match->add_option("--lidar0", m_lidar0);
  match->add_option("--lidar1", m_lidar1);
  match->add_option("--out", m_out, "output field directory");
  match->add_option("--direction", m_direction)->check(CLI::IsMember({"forward", "backward"}));
  add_common(match, flags);

  // ---- filter ----------------------------------------------------------------
  CLI::App* filter = app.add_subcommand("filter", "consistency check and sparsification");
  std::string f_fwd, f_bwd, f_left0, f_right0, f_lidar0, f_ref, f_out = "out";
  filter->add_option("--forward", f_fwd, "forward field directory")->required();
  filter->add_option("--backward", f_bwd, "backward field directory")->required();
  filter->add_option("--left0", f_left0, "left t0 image (for SGM)");
  filter->add_option("--right0", f_right0, "right t0 image (for SGM)");
  filter->add_option("--lidar0", f_lidar0, "reference LiDAR (for support windows)");
  filter->add_option("--ref-disparity", f_ref, "external reference disparity PNG");
  filter->add_option("--out", f_out);
  add_common(filter, flags);

  // ---- interpolate -----------------------------------------------------------
  CLI::App* interp = app.add_subcommand("interpolate", "sparse-to-dense interpolation");
  std::string i_matches, i_left0, i_edge, i_out = "out";
  interp->add_option("--matches", i_matches, "matches.txt or a sparsified field directory")
      ->required();
  interp->add_option("--left0", i_left0, "reference image")->required();
  interp->add_option("--edge-map", i_edge, "precomputed edge map PNG");
  interp->add_option("--out", i_out);
  add_common(interp, flags);

  // ---- eval ------------------------------------------------------------------
  CLI::App* eval = app.add_subcommand("eval", "evaluate a result against ground truth");
  std::string e_result, e_gt_flow, e_gt_d0, e_gt_d1, e_lidar0, e_out;
  eval->add_option("--result", e_result, "result field directory")->required();
  eval->add_option("--gt-flow", e_gt_flow)->required();
  eval->add_option("--gt-disp0", e_gt_d0)->required();
  eval->add_option("--gt-disp1", e_gt_d1)->required();
  eval->add_option("--lidar0", e_lidar0, "seed positions for region metrics");
  eval->add_option("--out", e_out, "write metrics files here as well");
  add_common(eval, flags);

  // ---- sparsify ----------------------------------------------------------------
  CLI::App* sparsify = app.add_subcommand("sparsify", "reduce a dense disparity map");
  std::string s_in, s_out;
  int s_window = 5;
  sparsify->add_option("--input", s_in, "dense disparity PNG")->required();
  sparsify->add_option("--output", s_out, "sparse disparity PNG")->required();
  sparsify->add_option("--cell", s_window, "sparsification window (odd)");

  // ---- dewarp -------------------------------------------------------------------
  CLI::App* dewarp = app.add_subcommand("dewarp", "move t0-aligned future depth to t1");
  std::string d_in, d_flow, d_out;
  dewarp->add_option("--input", d_in, "d1 disparity PNG aligned to t0")->required();
  dewarp->add_option("--gt-flow", d_flow, "ground-truth flow PNG")->required();
  dewarp->add_option("--output", d_out)->required();

  // ---- synth --------------------------------------------------------------------
  CLI::App* synth = app.add_subcommand("synth", "generate a synthetic planar scene");
  std::string sy_out = "scene";
  int sy_w = 256, sy_h = 192, sy_cell = 31;
  long long sy_seed = 7;
  std::vector<std::string> sy_planes;
  synth->add_option("--out", sy_out, "scene directory");
  synth->add_option("--width", sy_w);
  synth->add_option("--height", sy_h);
  synth->add_option("--texture-seed", sy_seed);
  synth->add_option("--lidar-cell", sy_cell, "LiDAR sparsification window");
  synth->add_option("--plane", sy_planes,
                    "x0,y0,x1,y1,a,b,c,angle,tx,ty,dd,brightness,textureless (repeatable; "
                    "first plane is the background)");

  // ---- viz ----------------------------------------------------------------------
  CLI::App* viz = app.add_subcommand("viz", "render field visualizations");
  std::string v_field, v_out = "out", v_gt_flow, v_gt_d0, v_gt_d1;
  viz->add_option("--field", v_field, "field directory")->required();
  viz->add_option("--out", v_out);
  viz->add_option("--gt-flow", v_gt_flow);
  viz->add_option("--gt-disp0", v_gt_d0);
  viz->add_option("--gt-disp1", v_gt_d1);
  add_common(viz, flags);

  CLI11_PARSE(app, argc, argv);

  try {
    resolve(cfg, flags);

    if (run->parsed()) return cmd_run(cfg);

    if (match->parsed()) {
      CalibratedFrameSet frames;
      frames.left0 = load_gray(m_left0);
      frames.left1 = load_gray(m_left1);
      frames.right0 = load_gray(m_right0);
      frames.right1 = load_gray(m_right1);
      frames.lidar0 = load_lidar(m_lidar0, frames.left0.width(), frames.left0.height());
      frames.lidar1 = load_lidar(m_lidar1, frames.left0.width(), frames.left0.height());
      MatchDirection dir =
          m_direction == "backward" ? MatchDirection::kBackward : MatchDirection::kForward;
      SceneFlowField field = run_matcher(frames, dir, cfg.matching, cfg.window, cfg.workers);
      save_field(m_out, field);
      std::cout << "field written to " << m_out << " (density " << field.density() << ")\n";
      return 0;
    }

    if (filter->parsed()) {
      SceneFlowField fwd = load_field(f_fwd);
      SceneFlowField bwd = load_field(f_bwd);
      DisparityImage ref;
      if (!f_ref.empty()) {
        ref = load_disparity(f_ref);
      } else {
        if (f_left0.empty() || f_right0.empty())
          throw std::invalid_argument(
              "filter needs --left0/--right0 for SGM or --ref-disparity");
        ref = compute_reference_disparity(load_gray(f_left0), load_gray(f_right0),
                                          cfg.filter.sgm, cfg.workers);
      }
      SparseDepthMap lidar0 = load_lidar(f_lidar0, fwd.width(), fwd.height());
      Grid<PixelRole> roles;
      Grid<float> seed_ref;
      assign_support_roles(lidar0.rasterize(), cfg.window, roles, seed_ref);
      SceneFlowField s1 = stage1_geometry_check(fwd, ref, roles, cfg.filter);
      Stage2Result s2 = stage2_forward_backward_check(s1, bwd, cfg.filter);
      SceneFlowField s3 = cluster_filter(s2.field, cfg.filter);
      MatchSet matches = sparsify_matches(s3, roles, s2.fb_residual);
      fs::create_directories(f_out);
      save_field((fs::path(f_out) / "filtered").string(), s3, &s2.fb_residual);
      save_field((fs::path(f_out) / "sparsified").string(), matches_to_field(matches),
                 &s2.fb_residual);
      save_matches((fs::path(f_out) / "matches.txt").string(), matches);
      std::cout << matches.matches.size() << " matches written to " << f_out << "\n";
      return 0;
    }

    if (interp->parsed()) {
      MatchSet matches = fs::is_directory(i_matches) ? matches_from_field_dir(i_matches)
                                                     : load_matches(i_matches);
      Image8 left0 = load_gray(i_left0);
      if (matches.width == 0) {
        matches.width = left0.width();
        matches.height = left0.height();
      }
      EdgeMap edges = i_edge.empty() ? compute_edge_map(left0) : load_edge_map(i_edge);
      SuperpixelGraph graph = build_superpixel_graph(
          segment_superpixels(left0, cfg.interp.superpixel_count, cfg.interp.compactness));
      assign_anchors(graph, matches, cfg.interp);
      edge_aware_neighborhoods(graph, edges, cfg.interp, cfg.workers);
      std::vector<PiecewiseModel> models =
          fit_and_refine_models(graph, matches, cfg.interp, cfg.workers);
      SceneFlowField dense = densify_field(graph, models, matches);
      fs::create_directories(i_out);
      save_field(i_out, dense);
      save_png((fs::path(i_out) / "flow_vis.png").string(), render_flow_visualization(dense));
      std::cout << "dense field written to " << i_out << "\n";
      return 0;
    }

    if (eval->parsed()) {
      SceneFlowField result = load_field(e_result);
      SceneFlowField gt = load_ground_truth(e_gt_flow, e_gt_d0, e_gt_d1);
      SparseDepthMap seeds = load_lidar(e_lidar0, gt.width(), gt.height());
      EvalReport report =
          evaluate_scene_flow(result, gt, seeds, cfg.window, cfg.outlier_rule);
      std::cout << report_to_kv(report);
      std::cout << "csv: " << report_to_csv(report);
      if (!e_out.empty()) {
        fs::create_directories(e_out);
        std::ofstream kv((fs::path(e_out) / "metrics.txt").string(), std::ios::trunc);
        kv << report_to_kv(report);
        std::ofstream csv((fs::path(e_out) / "metrics.csv").string(), std::ios::trunc);
        csv << report_to_csv(report);
      }
      return 0;
    }

    if (sparsify->parsed()) {
      DisparityImage dense = load_disparity(s_in);
      SparseDepthMap sparse = sparsify_depth(dense, s_window);
      save_disparity(s_out, sparse_to_disparity_image(sparse));
      std::cout << sparse.size() << " measurements written to " << s_out << "\n";
      return 0;
    }

    if (dewarp->parsed()) {
      DisparityImage moved = dewarp_future_depth(load_disparity(d_in), load_flow(d_flow));
      save_disparity(d_out, moved);
      std::cout << moved.valid_count() << " measurements written to " << d_out << "\n";
      return 0;
    }

    if (synth->parsed()) {
      SyntheticSceneSpec spec;
      spec.width = sy_w;
      spec.height = sy_h;
      spec.texture_seed = static_cast<uint64_t>(sy_seed);
      spec.lidar_window = sy_cell;
      if (sy_planes.empty()) {
        PlaneSpec bg;
        bg.x1 = sy_w;
        bg.y1 = sy_h;
        bg.c = 14;
        bg.tx = 4;
        bg.ty = 1;
        PlaneSpec fg;
        fg.x0 = sy_w * 35 / 100;
        fg.y0 = sy_h * 30 / 100;
        fg.x1 = sy_w * 75 / 100;
        fg.y1 = sy_h * 72 / 100;
        fg.c = 34;
        fg.a = 0.02;
        fg.b = -0.01;
        fg.tx = -6;
        fg.ty = 2;
        fg.dd = 1.5;
        fg.brightness = 30;
        spec.planes = {bg, fg};
      } else {
        for (const auto& str : sy_planes) {
          PlaneSpec p;
          double textureless = 0;
          if (std::sscanf(str.c_str(), "%d,%d,%d,%d,%lf,%lf,%lf,%lf,%lf,%lf,%lf,%lf,%lf",
                          &p.x0, &p.y0, &p.x1, &p.y1, &p.a, &p.b, &p.c, &p.angle, &p.tx,
                          &p.ty, &p.dd, &p.brightness, &textureless) != 13)
            throw std::invalid_argument("bad --plane spec: " + str);
          p.textureless = textureless != 0;
          spec.planes.push_back(p);
        }
      }
      SyntheticScene scene = generate_synthetic_scene(spec);
      fs::create_directories(sy_out);
      auto path = [&](const char* n) { return (fs::path(sy_out) / n).string(); };
      save_png(path("left0.png"), gray_to_png(scene.frames.left0));
      save_png(path("left1.png"), gray_to_png(scene.frames.left1));
      save_png(path("right0.png"), gray_to_png(scene.frames.right0));
      save_png(path("right1.png"), gray_to_png(scene.frames.right1));
      save_disparity(path("lidar0.png"), sparse_to_disparity_image(scene.frames.lidar0));
      save_disparity(path("lidar1.png"), sparse_to_disparity_image(scene.frames.lidar1));
      save_flow(path("gt_flow.png"), field_to_flow_image(scene.gt));
      save_disparity(path("gt_disp0.png"), field_to_disparity_image(scene.gt, 0));
      save_disparity(path("gt_disp1.png"), field_to_disparity_image(scene.gt, 1));
      std::cout << "scene written to " << sy_out << " (" << scene.frames.lidar0.size()
                << " seeds)\n";
      return 0;
    }

    if (viz->parsed()) {
      SceneFlowField field = load_field(v_field);
      fs::create_directories(v_out);
      save_png((fs::path(v_out) / "flow_vis.png").string(), render_flow_visualization(field));
      save_png((fs::path(v_out) / "disp_0_vis.png").string(),
               render_disparity_visualization(field, 0));
      save_png((fs::path(v_out) / "disp_1_vis.png").string(),
               render_disparity_visualization(field, 1));
      if (!v_gt_flow.empty() && !v_gt_d0.empty() && !v_gt_d1.empty()) {
        SceneFlowField gt = load_ground_truth(v_gt_flow, v_gt_d0, v_gt_d1);
        save_png((fs::path(v_out) / "error_map.png").string(),
                 render_error_map(field, gt, cfg.outlier_rule));
      }
      std::cout << "visualizations written to " << v_out << "\n";
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
