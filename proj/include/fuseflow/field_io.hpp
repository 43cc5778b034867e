#pragma once

#include <cmath>
#include <filesystem>
#include <limits>
#include <stdexcept>
#include <string>

#include "fuseflow/core.hpp"
#include "fuseflow/kitti_io.hpp"

namespace fuseflow {

// A scene flow field travels as four KITTI-format PNGs plus a seed mask:
//   flow.png   (u, v) with validity = motion validity
//   disp_0.png d0 with validity = pixel validity
//   disp_1.png d1 with validity = motion validity
//   residual.png forward-backward residual, stored as (r * 256) + 1
//   seeds.png  8-bit 0/255 seed mask
// Geometry-only seeds therefore decode with a valid d0 but invalid flow/d1.

inline FlowImage field_to_flow_image(const SceneFlowField& field) {
  FlowImage img(field.width(), field.height());
  for (int y = 0; y < field.height(); ++y)
    for (int x = 0; x < field.width(); ++x)
      if (field.valid(x, y) && field.motion_valid(x, y))
        img.set(x, y, field.data().at(x, y).u, field.data().at(x, y).v);
  return img;
}

inline DisparityImage field_to_disparity_image(const SceneFlowField& field, int which) {
  DisparityImage img(field.width(), field.height());
  for (int y = 0; y < field.height(); ++y)
    for (int x = 0; x < field.width(); ++x) {
      if (!field.valid(x, y)) continue;
      if (which == 1 && !field.motion_valid(x, y)) continue;
      float d = which == 0 ? field.data().at(x, y).d0 : field.data().at(x, y).d1;
      if (d > 0.f) img.set(x, y, d);
    }
  return img;
}

inline PngImage seed_mask_to_png(const SceneFlowField& field) {
  PngImage png;
  png.width = field.width();
  png.height = field.height();
  png.channels = 1;
  png.bit_depth = 8;
  png.samples.assign(static_cast<size_t>(png.width) * png.height, 0);
  for (int y = 0; y < png.height; ++y)
    for (int x = 0; x < png.width; ++x)
      if (field.is_seed(x, y)) png.at(x, y) = 255;
  return png;
}

inline PngImage residual_to_png(const Grid<float>& residual) {
  PngImage png;
  png.width = residual.width();
  png.height = residual.height();
  png.channels = 1;
  png.bit_depth = 16;
  png.samples.assign(static_cast<size_t>(png.width) * png.height, 0);
  for (int y = 0; y < png.height; ++y)
    for (int x = 0; x < png.width; ++x) {
      float r = residual.at(x, y);
      if (!std::isfinite(r)) continue;
      long raw = std::lround(static_cast<double>(r) * 256.0) + 1;
      if (raw > 65535) raw = 65535;
      png.at(x, y) = static_cast<uint16_t>(raw);
    }
  return png;
}

inline Grid<float> residual_from_png(const PngImage& png) {
  if (png.channels != 1 || png.bit_depth != 16)
    throw std::runtime_error("residual: expected 16-bit single-channel PNG");
  Grid<float> out(png.width, png.height, std::numeric_limits<float>::infinity());
  for (int y = 0; y < png.height; ++y)
    for (int x = 0; x < png.width; ++x) {
      uint16_t raw = png.at(x, y);
      if (raw > 0) out.at(x, y) = static_cast<float>((raw - 1) / 256.0);
    }
  return out;
}

inline void save_field(const std::string& dir, const SceneFlowField& field,
                       const Grid<float>* residual = nullptr) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  save_flow((fs::path(dir) / "flow.png").string(), field_to_flow_image(field));
  save_disparity((fs::path(dir) / "disp_0.png").string(), field_to_disparity_image(field, 0));
  save_disparity((fs::path(dir) / "disp_1.png").string(), field_to_disparity_image(field, 1));
  save_png((fs::path(dir) / "seeds.png").string(), seed_mask_to_png(field));
  if (residual)
    save_png((fs::path(dir) / "residual.png").string(), residual_to_png(*residual));
}

// Assembles a field from its raster parts. Pixel validity follows disp_0;
// motion validity additionally needs valid flow and disp_1.
inline SceneFlowField assemble_field(const DisparityImage& d0, const DisparityImage& d1,
                                     const FlowImage& flow, const PngImage* seeds = nullptr) {
  if (d0.width() != flow.width() || d0.height() != flow.height() ||
      d1.width() != flow.width() || d1.height() != flow.height())
    throw std::invalid_argument("assemble_field: dimension mismatch");
  SceneFlowField field(d0.width(), d0.height());
  for (int y = 0; y < field.height(); ++y)
    for (int x = 0; x < field.width(); ++x) {
      if (!d0.valid(x, y)) continue;
      bool motion = d1.valid(x, y) && flow.valid(x, y);
      SceneFlowVector sf;
      sf.d0 = d0.at(x, y);
      sf.d1 = motion ? d1.at(x, y) : 0.f;
      sf.u = motion ? flow.u(x, y) : 0.f;
      sf.v = motion ? flow.v(x, y) : 0.f;
      bool seed = seeds && seeds->at(x, y) != 0;
      field.set(x, y, sf, seed);
      if (!motion) field.motion_mask().at(x, y) = 0;
    }
  return field;
}

inline SceneFlowField load_field(const std::string& dir) {
  namespace fs = std::filesystem;
  DisparityImage d0 = load_disparity((fs::path(dir) / "disp_0.png").string());
  DisparityImage d1 = load_disparity((fs::path(dir) / "disp_1.png").string());
  FlowImage flow = load_flow((fs::path(dir) / "flow.png").string());
  PngImage seeds;
  SceneFlowField field;
  fs::path seed_path = fs::path(dir) / "seeds.png";
  if (fs::exists(seed_path)) {
    seeds = load_png(seed_path.string());
    field = assemble_field(d0, d1, flow, &seeds);
  } else {
    field = assemble_field(d0, d1, flow);
  }
  return field;
}

inline Grid<float> load_field_residual(const std::string& dir) {
  namespace fs = std::filesystem;
  return residual_from_png(load_png((fs::path(dir) / "residual.png").string()));
}

// Ground truth triplet: valid where all three rasters agree on validity.
inline SceneFlowField load_ground_truth(const std::string& flow_path,
                                        const std::string& disp0_path,
                                        const std::string& disp1_path) {
  FlowImage flow = load_flow(flow_path);
  DisparityImage d0 = load_disparity(disp0_path);
  DisparityImage d1 = load_disparity(disp1_path);
  if (d0.width() != flow.width() || d1.width() != flow.width() ||
      d0.height() != flow.height() || d1.height() != flow.height())
    throw std::runtime_error("ground truth rasters disagree on dimensions");
  SceneFlowField gt(flow.width(), flow.height());
  for (int y = 0; y < gt.height(); ++y)
    for (int x = 0; x < gt.width(); ++x) {
      if (!flow.valid(x, y) || !d0.valid(x, y) || !d1.valid(x, y)) continue;
      gt.set(x, y, {flow.u(x, y), flow.v(x, y), d0.at(x, y), d1.at(x, y)});
    }
  return gt;
}

}  // namespace fuseflow
