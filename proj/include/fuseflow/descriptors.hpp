#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#if defined(__SSE2__)
#include <emmintrin.h>
#endif

#include "fuseflow/grid.hpp"

namespace fuseflow {

struct PatchSpec {
  int radius = 3;  // 3 -> 7x7 comparison window
};

// Dense per-pixel gradient-orientation descriptors, 8-bit quantized.
// Layout: 8 orientation bins over a 4x4 grid of 2x2-pixel cells centered at
// the pixel (dim = 128). Histograms are L1-normalized, then scaled by 512 and
// clamped to 8 bits.
class DescriptorField {
 public:
  static constexpr int kDim = 128;

  DescriptorField() = default;
  DescriptorField(int width, int height)
      : w_(width), h_(height),
        data_(static_cast<size_t>(width) * height * kDim, 0) {}

  int width() const { return w_; }
  int height() const { return h_; }
  int dim() const { return kDim; }

  uint8_t* at(int x, int y) {
    return data_.data() + (static_cast<size_t>(y) * w_ + x) * kDim;
  }
  const uint8_t* at(int x, int y) const {
    return data_.data() + (static_cast<size_t>(y) * w_ + x) * kDim;
  }
  const uint8_t* at_clamped(int x, int y) const {
    x = x < 0 ? 0 : (x >= w_ ? w_ - 1 : x);
    y = y < 0 ? 0 : (y >= h_ ? h_ - 1 : y);
    return at(x, y);
  }

  bool operator==(const DescriptorField&) const = default;

 private:
  int w_ = 0;
  int h_ = 0;
  std::vector<uint8_t> data_;
};

inline DescriptorField compute_dense_descriptors(const Image8& image) {
  if (image.empty()) throw std::invalid_argument("compute_dense_descriptors: empty image");
  const int w = image.width(), h = image.height();

  // Gradients by central differences with clamped sampling; each pixel gets an
  // orientation bin and a magnitude.
  Grid<float> mag(w, h, 0.f);
  Grid<uint8_t> bin(w, h, 0);
  constexpr float kTwoPi = 6.28318530717958648f;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      float gx = 0.5f * (static_cast<float>(image.at_clamped(x + 1, y)) -
                         static_cast<float>(image.at_clamped(x - 1, y)));
      float gy = 0.5f * (static_cast<float>(image.at_clamped(x, y + 1)) -
                         static_cast<float>(image.at_clamped(x, y - 1)));
      float m = std::sqrt(gx * gx + gy * gy);
      mag.at(x, y) = m;
      if (m > 0.f) {
        float theta = std::atan2(gy, gx);
        if (theta < 0.f) theta += kTwoPi;
        int b = static_cast<int>(theta * (8.0f / kTwoPi));
        bin.at(x, y) = static_cast<uint8_t>(b > 7 ? 7 : b);
      }
    }
  }

  DescriptorField field(w, h);
  std::vector<float> hist(DescriptorField::kDim);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      std::fill(hist.begin(), hist.end(), 0.f);
      for (int cj = 0; cj < 4; ++cj) {
        for (int ci = 0; ci < 4; ++ci) {
          int cell = cj * 4 + ci;
          for (int py = 0; py < 2; ++py) {
            for (int px = 0; px < 2; ++px) {
              int sx = std::clamp(x - 4 + 2 * ci + px, 0, w - 1);
              int sy = std::clamp(y - 4 + 2 * cj + py, 0, h - 1);
              hist[cell * 8 + bin.at(sx, sy)] += mag.at(sx, sy);
            }
          }
        }
      }
      float sum = 0.f;
      for (float v : hist) sum += v;
      uint8_t* dst = field.at(x, y);
      if (sum > 0.f) {
        float scale = 512.0f / sum;
        for (int i = 0; i < DescriptorField::kDim; ++i) {
          int q = static_cast<int>(std::lround(hist[i] * scale));
          dst[i] = static_cast<uint8_t>(q > 255 ? 255 : q);
        }
      }
      // all-zero gradients leave an all-zero descriptor
    }
  }
  return field;
}

namespace detail {

#if defined(__SSE2__)
inline int descriptor_distance_sq(const uint8_t* a, const uint8_t* b) {
  __m128i acc = _mm_setzero_si128();
  const __m128i zero = _mm_setzero_si128();
  for (int i = 0; i < DescriptorField::kDim; i += 16) {
    __m128i va = _mm_loadu_si128(reinterpret_cast<const __m128i*>(a + i));
    __m128i vb = _mm_loadu_si128(reinterpret_cast<const __m128i*>(b + i));
    __m128i lo = _mm_sub_epi16(_mm_unpacklo_epi8(va, zero), _mm_unpacklo_epi8(vb, zero));
    __m128i hi = _mm_sub_epi16(_mm_unpackhi_epi8(va, zero), _mm_unpackhi_epi8(vb, zero));
    acc = _mm_add_epi32(acc, _mm_madd_epi16(lo, lo));
    acc = _mm_add_epi32(acc, _mm_madd_epi16(hi, hi));
  }
  acc = _mm_add_epi32(acc, _mm_shuffle_epi32(acc, _MM_SHUFFLE(1, 0, 3, 2)));
  acc = _mm_add_epi32(acc, _mm_shuffle_epi32(acc, _MM_SHUFFLE(2, 3, 0, 1)));
  return _mm_cvtsi128_si32(acc);
}
#else
inline int descriptor_distance_sq(const uint8_t* a, const uint8_t* b) {
  int acc = 0;
  for (int i = 0; i < DescriptorField::kDim; ++i) {
    int d = static_cast<int>(a[i]) - static_cast<int>(b[i]);
    acc += d * d;
  }
  return acc;
}
#endif

inline float descriptor_distance(const uint8_t* a, const uint8_t* b) {
  return std::sqrt(static_cast<float>(descriptor_distance_sq(a, b)));
}

// Patch cost with both centers already integral. Samples outside the image
// clamp to the border; fully interior patches take the unclamped fast path.
inline float patch_cost_int(const DescriptorField& A, const DescriptorField& B,
                            int ax, int ay, int bx, int by, int radius) {
  float cost = 0.f;
  const int side = 2 * radius + 1;
  bool interior = ax >= radius && ay >= radius && ax + radius < A.width() &&
                  ay + radius < A.height() && bx >= radius && by >= radius &&
                  bx + radius < B.width() && by + radius < B.height();
  if (interior) {
    for (int oy = -radius; oy <= radius; ++oy) {
      const uint8_t* ra = A.at(ax - radius, ay + oy);
      const uint8_t* rb = B.at(bx - radius, by + oy);
      for (int ox = 0; ox < side; ++ox)
        cost += descriptor_distance(ra + ox * DescriptorField::kDim,
                                    rb + ox * DescriptorField::kDim);
    }
    return cost;
  }
  for (int oy = -radius; oy <= radius; ++oy)
    for (int ox = -radius; ox <= radius; ++ox)
      cost += descriptor_distance(A.at_clamped(ax + ox, ay + oy),
                                  B.at_clamped(bx + ox, by + oy));
  return cost;
}

}  // namespace detail

// Sum over the patch window of Euclidean descriptor distances. The target
// coordinate is sampled at the nearest integer pixel; the whole patch then
// reads the integer grid with border clamping.
inline float patch_match_cost(const DescriptorField& A, const DescriptorField& B,
                              PixelCoord pA, float pBx, float pBy,
                              const PatchSpec& patch = {}) {
  int bx = static_cast<int>(std::lround(pBx));
  int by = static_cast<int>(std::lround(pBy));
  return detail::patch_cost_int(A, B, pA.x, pA.y, bx, by, patch.radius);
}

}  // namespace fuseflow
