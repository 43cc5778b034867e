#include <catch2/catch_amalgamated.hpp>

#include "fuseflow/kitti_io.hpp"
#include "fuseflow/random.hpp"

using namespace fuseflow;

TEST_CASE("disparity codec follows the raw/256 convention") {
  PngImage png;
  png.width = 2;
  png.height = 1;
  png.channels = 1;
  png.bit_depth = 16;
  png.samples = {12800, 0};
  DisparityImage img = decode_disparity(png);
  CHECK(img.valid(0, 0));
  CHECK(img.at(0, 0) == Catch::Approx(50.0));
  CHECK_FALSE(img.valid(1, 0));  // raw 0 is the invalid sentinel

  PngImage back = encode_disparity(img);
  CHECK(back.samples == png.samples);
}

TEST_CASE("disparity decode rejects wrong formats") {
  PngImage png;
  png.width = 1;
  png.height = 1;
  png.channels = 1;
  png.bit_depth = 8;
  png.samples = {10};
  CHECK_THROWS(decode_disparity(png));
  png.bit_depth = 16;
  png.channels = 3;
  png.samples = {10, 10, 10};
  CHECK_THROWS(decode_disparity(png));
}

TEST_CASE("flow codec zero point and unit step") {
  PngImage png;
  png.width = 2;
  png.height = 1;
  png.channels = 3;
  png.bit_depth = 16;
  png.samples = {32768, 32768, 1, static_cast<uint16_t>(32768 + 64), 32768, 1};
  FlowImage img = decode_flow(png);
  CHECK(img.valid(0, 0));
  CHECK(img.u(0, 0) == 0.0f);
  CHECK(img.v(0, 0) == 0.0f);
  CHECK(img.u(1, 0) == 1.0f);

  PngImage back = encode_flow(img);
  CHECK(back.samples == png.samples);
}

TEST_CASE("codec round trips are byte-exact across the value range") {
  Rng rng(99);
  DisparityImage disp(64, 48);
  for (int y = 0; y < 48; ++y)
    for (int x = 0; x < 64; ++x)
      if (rng.uniform01() < 0.85)
        disp.set(x, y, static_cast<float>(rng.uniform(1.0 / 256.0, 255.9)));
  std::vector<uint8_t> bytes = encode_png(encode_disparity(disp));
  DisparityImage decoded = decode_disparity(decode_png(bytes));
  std::vector<uint8_t> bytes2 = encode_png(encode_disparity(decoded));
  CHECK(bytes == bytes2);

  FlowImage flow(64, 48);
  for (int y = 0; y < 48; ++y)
    for (int x = 0; x < 64; ++x)
      if (rng.uniform01() < 0.85)
        flow.set(x, y, static_cast<float>(rng.uniform(-511.0, 511.0)),
                 static_cast<float>(rng.uniform(-511.0, 511.0)));
  std::vector<uint8_t> fbytes = encode_png(encode_flow(flow));
  FlowImage fdecoded = decode_flow(decode_png(fbytes));
  std::vector<uint8_t> fbytes2 = encode_png(encode_flow(fdecoded));
  CHECK(fbytes == fbytes2);
}

TEST_CASE("sparsify_depth keeps the valid pixel nearest the cell center") {
  DisparityImage dense(10, 10);
  // cell (0,0)..(4,4), center (2,2): candidates at (0,0) and (2,3)
  dense.set(0, 0, 11.f);
  dense.set(2, 3, 22.f);
  SparseDepthMap map = sparsify_depth(dense, 5);
  REQUIRE(map.size() == 1);
  CHECK(map.entries()[0].x == 2);
  CHECK(map.entries()[0].y == 3);
  CHECK(map.entries()[0].disparity == 22.f);
}

TEST_CASE("sparsify_depth obeys the one-per-cell bound and preserves values") {
  Rng rng(4242);
  DisparityImage dense(53, 37);
  for (int y = 0; y < 37; ++y)
    for (int x = 0; x < 53; ++x)
      if (rng.uniform01() < 0.4) dense.set(x, y, static_cast<float>(rng.uniform(0.5, 90.0)));
  SparseDepthMap map = sparsify_depth(dense, 5);
  size_t cells = ((53 + 4) / 5) * ((37 + 4) / 5);
  CHECK(map.size() <= cells);
  for (const auto& e : map.entries()) {
    REQUIRE(dense.valid(e.x, e.y));
    CHECK(dense.at(e.x, e.y) == e.disparity);
  }

  // rule-based oracle: per cell, scan for the nearest valid pixel row-major
  for (int cy = 0; cy < 37; cy += 5)
    for (int cx = 0; cx < 53; cx += 5) {
      long best = -1;
      int bx = -1, by = -1;
      for (int y = cy; y < std::min(cy + 5, 37); ++y)
        for (int x = cx; x < std::min(cx + 5, 53); ++x) {
          if (!dense.valid(x, y)) continue;
          long dx = x - (cx + 2), dy = y - (cy + 2);
          long d2 = dx * dx + dy * dy;
          if (best < 0 || d2 < best) {
            best = d2;
            bx = x;
            by = y;
          }
        }
      bool found = false;
      for (const auto& e : map.entries())
        if (e.x >= cx && e.x < cx + 5 && e.y >= cy && e.y < cy + 5) {
          found = true;
          CHECK(e.x == bx);
          CHECK(e.y == by);
        }
      CHECK(found == (best >= 0));
    }
}

TEST_CASE("sparsify_depth rejects even windows") {
  DisparityImage dense(10, 10);
  CHECK_THROWS_AS(sparsify_depth(dense, 4), std::invalid_argument);
  CHECK_THROWS_AS(sparsify_depth(dense, 1), std::invalid_argument);
}

TEST_CASE("tie at equal distance goes to the row-major earliest pixel") {
  DisparityImage dense(5, 5);
  // both at distance 1 from center (2,2): (2,1) comes before (1,2) row-major
  dense.set(1, 2, 5.f);
  dense.set(2, 1, 7.f);
  SparseDepthMap map = sparsify_depth(dense, 5);
  REQUIRE(map.size() == 1);
  CHECK(map.entries()[0].x == 2);
  CHECK(map.entries()[0].y == 1);
}

TEST_CASE("extract_sparse_measurements lists valid pixels row-major") {
  DisparityImage img(6, 4);
  img.set(5, 0, 1.f);
  img.set(0, 2, 2.f);
  img.set(3, 2, 3.f);
  SparseDepthMap map = extract_sparse_measurements(img);
  REQUIRE(map.size() == 3);
  CHECK(map.entries()[0].x == 5);
  CHECK(map.entries()[1].disparity == 2.f);
  CHECK(map.entries()[2].x == 3);

  DisparityImage empty(6, 4);
  CHECK(extract_sparse_measurements(empty).empty());
}

TEST_CASE("dewarp splats along the flow and z-buffers collisions") {
  DisparityImage d1(32, 32);
  FlowImage flow(32, 32);

  SECTION("basic splat") {
    d1.set(10, 10, 20.f);
    flow.set(10, 10, 5.f, 0.f);
    DisparityImage out = dewarp_future_depth(d1, flow);
    REQUIRE(out.valid(15, 10));
    CHECK(out.at(15, 10) == 20.f);
    CHECK(out.valid_count() == 1);
  }
  SECTION("collision keeps the larger disparity") {
    d1.set(1, 1, 20.f);
    flow.set(1, 1, 2.f, 0.f);
    d1.set(5, 1, 35.f);
    flow.set(5, 1, -2.f, 0.f);
    DisparityImage out = dewarp_future_depth(d1, flow);
    REQUIRE(out.valid(3, 1));
    CHECK(out.at(3, 1) == 35.f);
  }
  SECTION("invalid flow contributes nothing") {
    d1.set(4, 4, 9.f);
    DisparityImage out = dewarp_future_depth(d1, flow);
    CHECK(out.valid_count() == 0);
  }
  SECTION("out-of-bounds targets are dropped and count never grows") {
    Rng rng(7);
    for (int y = 0; y < 32; ++y)
      for (int x = 0; x < 32; ++x)
        if (rng.uniform01() < 0.3) {
          d1.set(x, y, static_cast<float>(rng.uniform(1.0, 60.0)));
          flow.set(x, y, static_cast<float>(rng.uniform(-40.0, 40.0)),
                   static_cast<float>(rng.uniform(-40.0, 40.0)));
        }
    DisparityImage out = dewarp_future_depth(d1, flow);
    CHECK(out.valid_count() <= d1.valid_count());
  }
}

TEST_CASE("dewarp oracle comparison on random inputs") {
  Rng rng(1234);
  DisparityImage d1(24, 18);
  FlowImage flow(24, 18);
  for (int y = 0; y < 18; ++y)
    for (int x = 0; x < 24; ++x) {
      if (rng.uniform01() < 0.5) d1.set(x, y, static_cast<float>(rng.uniform(1.0, 50.0)));
      if (rng.uniform01() < 0.8)
        flow.set(x, y, static_cast<float>(rng.uniform(-6.0, 6.0)),
                 static_cast<float>(rng.uniform(-6.0, 6.0)));
    }
  DisparityImage out = dewarp_future_depth(d1, flow);

  // independent rule evaluation
  DisparityImage oracle(24, 18);
  for (int y = 0; y < 18; ++y)
    for (int x = 0; x < 24; ++x) {
      if (!d1.valid(x, y) || !flow.valid(x, y)) continue;
      int tx = static_cast<int>(std::lround(x + flow.u(x, y)));
      int ty = static_cast<int>(std::lround(y + flow.v(x, y)));
      if (tx < 0 || tx >= 24 || ty < 0 || ty >= 18) continue;
      if (!oracle.valid(tx, ty) || d1.at(x, y) > oracle.at(tx, ty))
        oracle.set(tx, ty, d1.at(x, y));
    }
  CHECK(out == oracle);
}
