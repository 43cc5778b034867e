#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

#include "fuseflow/grid.hpp"

namespace fuseflow {

// SLIC-style k-means in (x, y, intensity) with compactness weighting.
// Grid-seeded, 10 assignment iterations, then connectivity enforcement:
// each label keeps its largest 4-connected fragment, orphan fragments merge
// into the largest adjacent segment. Labels come out contiguous 0..k-1.
inline Grid<int> segment_superpixels(const Image8& image, int superpixel_count,
                                     float compactness = 10.f) {
  const int w = image.width(), h = image.height();
  if (w == 0 || h == 0) throw std::invalid_argument("segment_superpixels: empty image");
  if (superpixel_count < 1) throw std::invalid_argument("segment_superpixels: count must be >= 1");

  float spacing = std::sqrt(static_cast<float>(w) * h / superpixel_count);
  int step = std::max(2, static_cast<int>(std::lround(spacing)));

  struct Center {
    float x, y, intensity;
  };
  std::vector<Center> centers;
  for (int y = step / 2; y < h; y += step)
    for (int x = step / 2; x < w; x += step)
      centers.push_back({static_cast<float>(x), static_cast<float>(y),
                         static_cast<float>(image.at(x, y))});
  if (centers.empty()) centers.push_back({w / 2.f, h / 2.f, 128.f});

  Grid<int> label(w, h, 0);
  Grid<float> best(w, h, std::numeric_limits<float>::infinity());
  float inv_s2 = 1.f / (spacing * spacing);
  float m2 = compactness * compactness;

  for (int iter = 0; iter < 10; ++iter) {
    best.fill(std::numeric_limits<float>::infinity());
    for (size_t c = 0; c < centers.size(); ++c) {
      const Center& ct = centers[c];
      int x0 = std::max(0, static_cast<int>(ct.x) - step);
      int x1 = std::min(w - 1, static_cast<int>(ct.x) + step);
      int y0 = std::max(0, static_cast<int>(ct.y) - step);
      int y1 = std::min(h - 1, static_cast<int>(ct.y) + step);
      for (int y = y0; y <= y1; ++y)
        for (int x = x0; x <= x1; ++x) {
          float di = image.at(x, y) - ct.intensity;
          float dx = x - ct.x, dy = y - ct.y;
          float d = di * di + (dx * dx + dy * dy) * inv_s2 * m2;
          if (d < best.at(x, y)) {
            best.at(x, y) = d;
            label.at(x, y) = static_cast<int>(c);
          }
        }
    }
    // recompute centers
    std::vector<double> sx(centers.size(), 0), sy(centers.size(), 0), si(centers.size(), 0);
    std::vector<int> n(centers.size(), 0);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        int c = label.at(x, y);
        sx[c] += x;
        sy[c] += y;
        si[c] += image.at(x, y);
        n[c]++;
      }
    for (size_t c = 0; c < centers.size(); ++c)
      if (n[c] > 0)
        centers[c] = {static_cast<float>(sx[c] / n[c]), static_cast<float>(sy[c] / n[c]),
                      static_cast<float>(si[c] / n[c])};
  }

  // connectivity enforcement: flood-fill fragments of equal label
  Grid<int> fragment(w, h, -1);
  std::vector<int> frag_label, frag_size;
  std::vector<int> stack;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      if (fragment.at(x, y) >= 0) continue;
      int id = static_cast<int>(frag_label.size());
      int lab = label.at(x, y);
      frag_label.push_back(lab);
      frag_size.push_back(0);
      stack.push_back(y * w + x);
      fragment.at(x, y) = id;
      while (!stack.empty()) {
        int idx = stack.back();
        stack.pop_back();
        frag_size[id]++;
        int fx = idx % w, fy = idx / w;
        const int dx4[4] = {-1, 1, 0, 0}, dy4[4] = {0, 0, -1, 1};
        for (int k = 0; k < 4; ++k) {
          int nx = fx + dx4[k], ny = fy + dy4[k];
          if (nx < 0 || nx >= w || ny < 0 || ny >= h) continue;
          if (fragment.at(nx, ny) >= 0 || label.at(nx, ny) != lab) continue;
          fragment.at(nx, ny) = id;
          stack.push_back(ny * w + nx);
        }
      }
    }

  // main fragment per label = the largest one
  std::vector<int> main_frag(centers.size(), -1);
  for (size_t f = 0; f < frag_label.size(); ++f) {
    int lab = frag_label[f];
    if (main_frag[lab] < 0 || frag_size[f] > frag_size[main_frag[lab]])
      main_frag[lab] = static_cast<int>(f);
  }

  // Orphan fragments merge as a whole into the largest adjacent surviving
  // segment, which keeps every segment 4-connected. Iterate because an orphan
  // may initially border only other orphans.
  std::vector<int> seg_size(centers.size(), 0);
  for (size_t f = 0; f < frag_label.size(); ++f)
    if (static_cast<int>(f) == main_frag[frag_label[f]]) seg_size[frag_label[f]] = frag_size[f];

  Grid<uint8_t> orphan(w, h, 0);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      orphan.at(x, y) = fragment.at(x, y) != main_frag[label.at(x, y)] ? 1 : 0;

  bool changed = true;
  while (changed) {
    changed = false;
    std::vector<int> adopt(frag_label.size(), -1);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        if (!orphan.at(x, y)) continue;
        int f = fragment.at(x, y);
        const int dx4[4] = {-1, 1, 0, 0}, dy4[4] = {0, 0, -1, 1};
        for (int k = 0; k < 4; ++k) {
          int nx = x + dx4[k], ny = y + dy4[k];
          if (nx < 0 || nx >= w || ny < 0 || ny >= h || orphan.at(nx, ny)) continue;
          int lab = label.at(nx, ny);
          if (adopt[f] < 0 || seg_size[lab] > seg_size[adopt[f]] ||
              (seg_size[lab] == seg_size[adopt[f]] && lab < adopt[f]))
            adopt[f] = lab;
        }
      }
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        if (!orphan.at(x, y)) continue;
        int f = fragment.at(x, y);
        if (adopt[f] < 0) continue;
        label.at(x, y) = adopt[f];
        orphan.at(x, y) = 0;
        changed = true;
      }
    for (size_t f = 0; f < adopt.size(); ++f)
      if (adopt[f] >= 0 && frag_label[f] >= 0) {
        seg_size[adopt[f]] += frag_size[f];
        frag_label[f] = -1;  // consumed
      }
  }

  // compact labels to 0..k-1
  std::vector<int> remap(centers.size(), -1);
  int next = 0;
  Grid<int> out(w, h, 0);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      int lab = label.at(x, y);
      if (remap[lab] < 0) remap[lab] = next++;
      out.at(x, y) = remap[lab];
    }
  return out;
}

}  // namespace fuseflow
