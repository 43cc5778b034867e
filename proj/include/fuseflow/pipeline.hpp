#pragma once

#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "fuseflow/core.hpp"
#include "fuseflow/edges.hpp"
#include "fuseflow/evaluation.hpp"
#include "fuseflow/field_io.hpp"
#include "fuseflow/filtering.hpp"
#include "fuseflow/interpolation.hpp"
#include "fuseflow/kitti_io.hpp"
#include "fuseflow/matching.hpp"
#include "fuseflow/parallel.hpp"
#include "fuseflow/sgm.hpp"
#include "fuseflow/superpixels.hpp"

namespace fuseflow {

struct PipelineConfig {
  // inputs
  std::string left0, left1, right0, right1;
  std::string lidar0, lidar1;          // optional; empty runs image-only
  std::string gt_flow, gt_disp0, gt_disp1;  // optional
  std::string ref_disparity;           // optional external SGM substitute
  std::string edge_map;                // optional external edge probabilities
  std::string out_dir = "out";

  // stage parameters
  SupportWindowConfig window;
  MatchingConfig matching;
  FilterConfig filter;
  InterpConfig interp;
  int sparsify_window = 5;             // LiDAR preparation tool default
  OutlierRule outlier_rule = OutlierRule::kAnd;
  bool dump_stages = false;
  int workers = default_workers();
  uint64_t seed = 0x5eedULL;

  void apply_seed() {
    matching.rng_seed = seed;
    interp.rng_seed = mix_seed(seed, 2);
  }
};

// --- config file parsing --------------------------------------------------------

namespace detail {

inline int edit_distance(const std::string& a, const std::string& b) {
  std::vector<int> prev(b.size() + 1), cur(b.size() + 1);
  for (size_t j = 0; j <= b.size(); ++j) prev[j] = static_cast<int>(j);
  for (size_t i = 1; i <= a.size(); ++i) {
    cur[0] = static_cast<int>(i);
    for (size_t j = 1; j <= b.size(); ++j) {
      int sub = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, sub});
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

using ConfigSetter = std::function<void(PipelineConfig&, const std::string&)>;

inline double parse_number(const std::string& v) {
  size_t pos = 0;
  double d = std::stod(v, &pos);
  if (pos != v.size()) throw std::invalid_argument("not a number: " + v);
  return d;
}

inline bool parse_bool(const std::string& v) {
  if (v == "1" || v == "true" || v == "on" || v == "yes") return true;
  if (v == "0" || v == "false" || v == "off" || v == "no") return false;
  throw std::invalid_argument("not a boolean: " + v);
}

inline const std::map<std::string, ConfigSetter>& config_keys() {
  static const std::map<std::string, ConfigSetter> keys = {
      {"window", [](PipelineConfig& c, const std::string& v) {
         c.window.size = static_cast<int>(parse_number(v));
       }},
      {"patch_radius", [](PipelineConfig& c, const std::string& v) {
         c.matching.patch.radius = static_cast<int>(parse_number(v));
       }},
      {"pyramid_levels", [](PipelineConfig& c, const std::string& v) {
         c.matching.pyramid_levels = static_cast<int>(parse_number(v));
       }},
      {"iterations", [](PipelineConfig& c, const std::string& v) {
         c.matching.iterations_per_level = static_cast<int>(parse_number(v));
       }},
      {"search_radius", [](PipelineConfig& c, const std::string& v) {
         c.matching.random_search_radius = static_cast<float>(parse_number(v));
       }},
      {"disparity_band", [](PipelineConfig& c, const std::string& v) {
         c.matching.disparity_band = static_cast<float>(parse_number(v));
       }},
      {"max_disparity", [](PipelineConfig& c, const std::string& v) {
         c.matching.max_disparity = static_cast<float>(parse_number(v));
       }},
      {"stage1_tolerance", [](PipelineConfig& c, const std::string& v) {
         c.filter.stage1_tolerance = static_cast<float>(parse_number(v));
       }},
      {"fb_tolerance", [](PipelineConfig& c, const std::string& v) {
         c.filter.fb_tolerance = static_cast<float>(parse_number(v));
       }},
      {"cluster_similarity", [](PipelineConfig& c, const std::string& v) {
         c.filter.cluster_similarity = static_cast<float>(parse_number(v));
       }},
      {"min_cluster_size", [](PipelineConfig& c, const std::string& v) {
         c.filter.min_cluster_size = static_cast<int>(parse_number(v));
       }},
      {"sgm_max_disparity", [](PipelineConfig& c, const std::string& v) {
         c.filter.sgm.max_disparity = static_cast<int>(parse_number(v));
       }},
      {"sgm_p1", [](PipelineConfig& c, const std::string& v) {
         c.filter.sgm.penalty_small = static_cast<int>(parse_number(v));
       }},
      {"sgm_p2", [](PipelineConfig& c, const std::string& v) {
         c.filter.sgm.penalty_large = static_cast<int>(parse_number(v));
       }},
      {"superpixels", [](PipelineConfig& c, const std::string& v) {
         c.interp.superpixel_count = static_cast<int>(parse_number(v));
       }},
      {"compactness", [](PipelineConfig& c, const std::string& v) {
         c.interp.compactness = static_cast<float>(parse_number(v));
       }},
      {"anchor_proximity", [](PipelineConfig& c, const std::string& v) {
         c.interp.anchor_proximity = static_cast<float>(parse_number(v));
       }},
      {"neighborhood_size", [](PipelineConfig& c, const std::string& v) {
         c.interp.neighborhood_size = static_cast<int>(parse_number(v));
       }},
      {"geodesic_lambda", [](PipelineConfig& c, const std::string& v) {
         c.interp.geodesic_lambda = static_cast<float>(parse_number(v));
       }},
      {"lidar_consistency", [](PipelineConfig& c, const std::string& v) {
         c.interp.lidar_consistency = static_cast<float>(parse_number(v));
       }},
      {"refine_iterations", [](PipelineConfig& c, const std::string& v) {
         c.interp.refinement_iterations = static_cast<int>(parse_number(v));
       }},
      {"sparsify_window", [](PipelineConfig& c, const std::string& v) {
         c.sparsify_window = static_cast<int>(parse_number(v));
       }},
      {"seed", [](PipelineConfig& c, const std::string& v) {
         c.seed = static_cast<uint64_t>(std::stoull(v));
       }},
      {"workers", [](PipelineConfig& c, const std::string& v) {
         c.workers = static_cast<int>(parse_number(v));
       }},
      {"outlier_rule", [](PipelineConfig& c, const std::string& v) {
         if (v == "and") c.outlier_rule = OutlierRule::kAnd;
         else if (v == "or") c.outlier_rule = OutlierRule::kOr;
         else throw std::invalid_argument("outlier_rule must be 'and' or 'or'");
       }},
      {"dump_stages", [](PipelineConfig& c, const std::string& v) {
         c.dump_stages = parse_bool(v);
       }},
  };
  return keys;
}

}  // namespace detail

inline std::string valid_config_keys() {
  std::string out;
  for (const auto& [k, _] : detail::config_keys()) {
    if (!out.empty()) out += ", ";
    out += k;
  }
  return out;
}

inline void apply_config_entry(PipelineConfig& cfg, const std::string& key,
                               const std::string& value) {
  const auto& keys = detail::config_keys();
  auto it = keys.find(key);
  if (it == keys.end()) {
    std::string best;
    int best_d = 3;  // suggest only close misses
    for (const auto& [k, _] : keys) {
      int d = detail::edit_distance(key, k);
      if (d < best_d) {
        best_d = d;
        best = k;
      }
    }
    std::ostringstream os;
    os << "unknown config key '" << key << "'";
    if (!best.empty()) os << " (did you mean '" << best << "'?)";
    os << "; valid keys: " << valid_config_keys();
    throw std::invalid_argument(os.str());
  }
  it->second(cfg, value);
}

// key=value lines, '#' comments. Later sources (command-line flags) override by
// calling apply_config_entry again.
inline void parse_config_file(PipelineConfig& cfg, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config file: " + path);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    size_t begin = line.find_first_not_of(" \t\r");
    if (begin == std::string::npos) continue;
    size_t end = line.find_last_not_of(" \t\r");
    line = line.substr(begin, end - begin + 1);
    size_t eq = line.find('=');
    if (eq == std::string::npos || eq == 0)
      throw std::invalid_argument("config line " + std::to_string(lineno) +
                                  ": expected key=value");
    std::string key = line.substr(0, eq);
    std::string value = line.substr(eq + 1);
    auto trim = [](std::string& s) {
      size_t b = s.find_first_not_of(" \t");
      size_t e = s.find_last_not_of(" \t");
      s = b == std::string::npos ? "" : s.substr(b, e - b + 1);
    };
    trim(key);
    trim(value);
    try {
      apply_config_entry(cfg, key, value);
    } catch (const std::invalid_argument& e) {
      throw std::invalid_argument("config line " + std::to_string(lineno) + ": " + e.what());
    }
  }
}

// --- pipeline ------------------------------------------------------------------

struct PipelineResult {
  SceneFlowField dense;
  MatchSet matches;
  std::optional<EvalReport> report;
};

namespace detail {

inline SparseDepthMap load_lidar_or_empty(const std::string& path, int w, int h) {
  if (path.empty()) return SparseDepthMap(w, h);
  return extract_sparse_measurements(load_disparity(path));
}

class StageManifest {
 public:
  explicit StageManifest(std::string path) : path_(std::move(path)) {}

  void record(const std::string& stage, const std::string& status) {
    lines_.push_back(stage + ": " + status);
    std::ofstream out(path_, std::ios::trunc);
    for (const auto& l : lines_) out << l << "\n";
  }

 private:
  std::string path_;
  std::vector<std::string> lines_;
};

}  // namespace detail

// Runs matching, the consistency cascade, sparsification and interpolation in
// order, writing KITTI-format outputs (and per-stage dumps when requested).
inline PipelineResult run_pipeline(PipelineConfig cfg) {
  namespace fs = std::filesystem;
  cfg.apply_seed();
  cfg.window.validate();
  cfg.matching.validate();
  cfg.filter.validate();
  cfg.interp.validate();
  if (cfg.workers < 1) cfg.workers = 1;

  fs::create_directories(cfg.out_dir);
  detail::StageManifest manifest((fs::path(cfg.out_dir) / "MANIFEST").string());
  std::string stage = "load-inputs";
  try {
    CalibratedFrameSet frames;
    frames.left0 = load_luminance(cfg.left0);
    frames.left1 = load_luminance(cfg.left1);
    frames.right0 = load_luminance(cfg.right0);
    frames.right1 = load_luminance(cfg.right1);
    int w = frames.left0.width(), h = frames.left0.height();
    frames.lidar0 = detail::load_lidar_or_empty(cfg.lidar0, w, h);
    frames.lidar1 = detail::load_lidar_or_empty(cfg.lidar1, w, h);
    frames.validate();
    manifest.record(stage, "ok");

    stage = "matching";
    MatchingPyramid pyramid = build_pyramids(frames, cfg.matching, cfg.window, cfg.workers);
    SceneFlowField fwd, bwd;
    if (cfg.workers >= 2) {  // the two directions are independent
      std::thread bwd_thread([&] {
        bwd = run_matcher(pyramid, MatchDirection::kBackward, cfg.matching, 1);
      });
      fwd = run_matcher(pyramid, MatchDirection::kForward, cfg.matching, 1);
      bwd_thread.join();
    } else {
      fwd = run_matcher(pyramid, MatchDirection::kForward, cfg.matching, 1);
      bwd = run_matcher(pyramid, MatchDirection::kBackward, cfg.matching, 1);
    }
    const Grid<PixelRole>& roles = pyramid.levels[0].roles_fwd;
    if (cfg.dump_stages) {
      save_field((fs::path(cfg.out_dir) / "stage_matching").string(), fwd);
      save_field((fs::path(cfg.out_dir) / "stage_matching_backward").string(), bwd);
    }
    manifest.record(stage, "ok");

    stage = "consistency-check";
    DisparityImage ref;
    if (!cfg.ref_disparity.empty())
      ref = load_disparity(cfg.ref_disparity);
    else
      ref = compute_reference_disparity(frames.left0, frames.right0, cfg.filter.sgm,
                                        cfg.workers);
    SceneFlowField stage1 = stage1_geometry_check(fwd, ref, roles, cfg.filter);
    if (cfg.dump_stages)
      save_field((fs::path(cfg.out_dir) / "stage_filter1").string(), stage1);
    Stage2Result stage2 = stage2_forward_backward_check(stage1, bwd, cfg.filter);
    if (cfg.dump_stages)
      save_field((fs::path(cfg.out_dir) / "stage_filter2").string(), stage2.field,
                 &stage2.fb_residual);
    SceneFlowField clustered = cluster_filter(stage2.field, cfg.filter);
    if (cfg.dump_stages)
      save_field((fs::path(cfg.out_dir) / "stage_cluster").string(), clustered,
                 &stage2.fb_residual);
    manifest.record(stage, "ok");

    stage = "sparsification";
    MatchSet matches = sparsify_matches(clustered, roles, stage2.fb_residual);
    if (cfg.dump_stages)
      save_field((fs::path(cfg.out_dir) / "stage_sparsified").string(),
                 matches_to_field(matches), &stage2.fb_residual);
    manifest.record(stage, "ok");

    stage = "interpolation";
    EdgeMap edges = cfg.edge_map.empty() ? compute_edge_map(frames.left0)
                                         : load_edge_map(cfg.edge_map);
    if (edges.width() != w || edges.height() != h)
      throw std::runtime_error("edge map dimensions do not match the images");
    SuperpixelGraph graph = build_superpixel_graph(
        segment_superpixels(frames.left0, cfg.interp.superpixel_count, cfg.interp.compactness));
    assign_anchors(graph, matches, cfg.interp);
    edge_aware_neighborhoods(graph, edges, cfg.interp, cfg.workers);
    std::vector<PiecewiseModel> models =
        fit_and_refine_models(graph, matches, cfg.interp, cfg.workers);
    SceneFlowField dense = densify_field(graph, models, matches);
    manifest.record(stage, "ok");

    stage = "write-outputs";
    save_flow((fs::path(cfg.out_dir) / "flow.png").string(), field_to_flow_image(dense));
    save_disparity((fs::path(cfg.out_dir) / "disp_0.png").string(),
                   field_to_disparity_image(dense, 0));
    save_disparity((fs::path(cfg.out_dir) / "disp_1.png").string(),
                   field_to_disparity_image(dense, 1));
    save_png((fs::path(cfg.out_dir) / "flow_vis.png").string(),
             render_flow_visualization(dense));
    save_png((fs::path(cfg.out_dir) / "disp_0_vis.png").string(),
             render_disparity_visualization(dense, 0));
    save_png((fs::path(cfg.out_dir) / "disp_1_vis.png").string(),
             render_disparity_visualization(dense, 1));
    manifest.record(stage, "ok");

    PipelineResult result;
    result.dense = std::move(dense);
    result.matches = std::move(matches);
    if (!cfg.gt_flow.empty() && !cfg.gt_disp0.empty() && !cfg.gt_disp1.empty()) {
      stage = "evaluation";
      SceneFlowField gt = load_ground_truth(cfg.gt_flow, cfg.gt_disp0, cfg.gt_disp1);
      EvalReport report = evaluate_scene_flow(result.dense, gt, frames.lidar0, cfg.window,
                                              cfg.outlier_rule);
      std::ofstream kv((fs::path(cfg.out_dir) / "metrics.txt").string(), std::ios::trunc);
      kv << report_to_kv(report);
      std::ofstream csv((fs::path(cfg.out_dir) / "metrics.csv").string(), std::ios::trunc);
      csv << report_to_csv(report);
      save_png((fs::path(cfg.out_dir) / "error_map.png").string(),
               render_error_map(result.dense, gt, cfg.outlier_rule));
      result.report = report;
      manifest.record(stage, "ok");
    }
    manifest.record("pipeline", "ok");
    return result;
  } catch (...) {
    manifest.record(stage, "FAILED");
    throw;
  }
}

}  // namespace fuseflow
