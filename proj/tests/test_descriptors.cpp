#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "fuseflow/descriptors.hpp"
#include "fuseflow/random.hpp"

using namespace fuseflow;

namespace {

Image8 random_image(int w, int h, uint64_t seed) {
  Rng rng(seed);
  Image8 img(w, h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      img.at(x, y) = static_cast<uint8_t>(rng.below(256));
  return img;
}

// Brute-force oracle: direct summation over patch offsets and descriptor
// dimensions, independent of the library's inner loop.
double patch_cost_oracle(const DescriptorField& A, const DescriptorField& B, int ax, int ay,
                         double bx, double by, int radius) {
  int bxi = static_cast<int>(std::lround(bx));
  int byi = static_cast<int>(std::lround(by));
  double total = 0.0;
  for (int oy = -radius; oy <= radius; ++oy)
    for (int ox = -radius; ox <= radius; ++ox) {
      const uint8_t* a = A.at_clamped(ax + ox, ay + oy);
      const uint8_t* b = B.at_clamped(bxi + ox, byi + oy);
      double acc = 0.0;
      for (int i = 0; i < 128; ++i) {
        double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
        acc += d * d;
      }
      total += std::sqrt(acc);
    }
  return total;
}

}  // namespace

TEST_CASE("constant image yields all-equal (all-zero) descriptors") {
  Image8 img(20, 16, 77);
  DescriptorField field = compute_dense_descriptors(img);
  const uint8_t* first = field.at(0, 0);
  for (int y = 0; y < 16; ++y)
    for (int x = 0; x < 20; ++x) {
      const uint8_t* d = field.at(x, y);
      for (int i = 0; i < 128; ++i) {
        CHECK(d[i] == first[i]);
        CHECK(d[i] == 0);
      }
    }
}

TEST_CASE("descriptor field has H x W x 128 layout") {
  Image8 img = random_image(13, 9, 5);
  DescriptorField field = compute_dense_descriptors(img);
  CHECK(field.width() == 13);
  CHECK(field.height() == 9);
  CHECK(field.dim() == 128);
}

TEST_CASE("shifting the image shifts interior descriptors exactly") {
  const int w = 40, h = 30, shift = 3;
  Image8 big = random_image(w + shift, h, 11);
  Image8 a(w, h), b(w, h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      a.at(x, y) = big.at(x, y);
      b.at(x, y) = big.at(x + shift, y);
    }
  DescriptorField fa = compute_dense_descriptors(a);
  DescriptorField fb = compute_dense_descriptors(b);
  // stay clear of the 8x8 support plus the gradient halo on either side
  for (int y = 6; y < h - 6; ++y)
    for (int x = 6; x < w - 6 - shift; ++x) {
      const uint8_t* da = fa.at(x + shift, y);
      const uint8_t* db = fb.at(x, y);
      for (int i = 0; i < 128; ++i) REQUIRE(da[i] == db[i]);
    }
}

TEST_CASE("descriptor computation is deterministic") {
  Image8 img = random_image(24, 24, 3);
  CHECK(compute_dense_descriptors(img) == compute_dense_descriptors(img));
}

TEST_CASE("patch cost of identical operands is zero") {
  Image8 img = random_image(16, 16, 21);
  DescriptorField f = compute_dense_descriptors(img);
  CHECK(patch_match_cost(f, f, {8, 8}, 8.f, 8.f) == 0.f);
}

TEST_CASE("radius 0 reduces to a single descriptor distance") {
  Image8 a = random_image(16, 16, 2);
  Image8 b = random_image(16, 16, 9);
  DescriptorField fa = compute_dense_descriptors(a);
  DescriptorField fb = compute_dense_descriptors(b);
  PatchSpec p0{0};
  float got = patch_match_cost(fa, fb, {5, 7}, 9.f, 4.f, p0);
  const uint8_t* da = fa.at(5, 7);
  const uint8_t* db = fb.at(9, 4);
  double acc = 0;
  for (int i = 0; i < 128; ++i) {
    double d = static_cast<double>(da[i]) - db[i];
    acc += d * d;
  }
  CHECK(got == Catch::Approx(std::sqrt(acc)).epsilon(1e-6));
}

TEST_CASE("patch cost equals the brute-force oracle on random fields") {
  Image8 a = random_image(16, 16, 31);
  Image8 b = random_image(16, 16, 32);
  DescriptorField fa = compute_dense_descriptors(a);
  DescriptorField fb = compute_dense_descriptors(b);
  Rng rng(100);
  for (int trial = 0; trial < 30; ++trial) {
    int ax = static_cast<int>(rng.below(16)), ay = static_cast<int>(rng.below(16));
    float bx = static_cast<float>(rng.uniform(-3.0, 18.0));
    float by = static_cast<float>(rng.uniform(-3.0, 18.0));
    float got = patch_match_cost(fa, fb, {ax, ay}, bx, by);
    double want = patch_cost_oracle(fa, fb, ax, ay, bx, by, 3);
    CHECK(got == Catch::Approx(want).epsilon(1e-6));
  }
}

TEST_CASE("patch cost is symmetric for integral coordinates") {
  Image8 a = random_image(20, 20, 41);
  Image8 b = random_image(20, 20, 42);
  DescriptorField fa = compute_dense_descriptors(a);
  DescriptorField fb = compute_dense_descriptors(b);
  Rng rng(50);
  for (int trial = 0; trial < 20; ++trial) {
    int ax = static_cast<int>(rng.below(20)), ay = static_cast<int>(rng.below(20));
    int bx = static_cast<int>(rng.below(20)), by = static_cast<int>(rng.below(20));
    float c1 = patch_match_cost(fa, fb, {ax, ay}, static_cast<float>(bx), static_cast<float>(by));
    float c2 = patch_match_cost(fb, fa, {bx, by}, static_cast<float>(ax), static_cast<float>(ay));
    CHECK(c1 == Catch::Approx(c2).epsilon(1e-6));
  }
}

TEST_CASE("patch cost is nonnegative and zero only for identical patches") {
  Image8 a = random_image(24, 24, 61);
  Image8 b = a;
  b.at(20, 20) = static_cast<uint8_t>(b.at(20, 20) ^ 0x40);  // perturb one pixel
  DescriptorField fa = compute_dense_descriptors(a);
  DescriptorField fb = compute_dense_descriptors(b);
  // patch at (2,2) influences pixels up to (2+3)+4 plus the gradient halo,
  // still well clear of (20,20)
  float same = patch_match_cost(fa, fb, {2, 2}, 2.f, 2.f);
  float diff = patch_match_cost(fa, fb, {20, 20}, 20.f, 20.f);
  CHECK(same == 0.f);
  CHECK(diff > 0.f);
}
