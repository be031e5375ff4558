#include <cmath>
#include <limits>
#include <vector>

#include "doctest.h"
#include "fabg/depth_pipeline.hpp"
#include "fabg/random.hpp"

using namespace fabg;

namespace {

const double kInf = std::numeric_limits<double>::infinity();

DepthMap constant_map(int h, int w, double v) { return DepthMap{h, w, std::vector<double>(h * w, v)}; }

}  // namespace

TEST_CASE("gaussian kernel closed form") {
  const auto k = build_gaussian_kernel(1.0, 3);
  CHECK(std::abs(k.raw_weight(0, 0) - 1.0 / (2.0 * kPi)) < 1e-12);
  CHECK(k.raw_weight(1, 1) / k.raw_weight(0, 0) == doctest::Approx(std::exp(-1.0)).epsilon(1e-12));
  CHECK(default_gaussian_radius(1.0) == 3);
  CHECK(default_gaussian_radius(0.1) == 1);
  CHECK(default_gaussian_radius(1.5) == 5);
}

TEST_CASE("gaussian kernel normalization grid and symmetry") {
  for (double sigma : {0.5, 1.0, 2.0, 5.0}) {
    for (int radius : {1, 2, 3, 7}) {
      const auto k = build_gaussian_kernel(sigma, radius);
      double sum = 0.0;
      for (double w : k.weights) sum += w;
      CHECK(std::abs(sum - 1.0) < 1e-12);
      for (int dy = -radius; dy <= radius; ++dy) {
        for (int dx = -radius; dx <= radius; ++dx) {
          CHECK(k.weight(dx, dy) == k.weight(-dx, dy));
          CHECK(k.weight(dx, dy) == k.weight(dy, dx));
        }
      }
    }
  }
  CHECK_THROWS_AS(build_gaussian_kernel(0.0, 2), std::invalid_argument);
  CHECK_THROWS_AS(build_gaussian_kernel(1.0, 0), std::invalid_argument);
}

TEST_CASE("filtering a constant plane is the identity") {
  const auto k = build_gaussian_kernel(1.0);
  const auto r = filter_depth(constant_map(9, 11, 2.5), k);
  CHECK(r.unresolved == 0);
  for (double v : r.depth.values) CHECK(v == doctest::Approx(2.5).epsilon(1e-14));
}

TEST_CASE("impulse response equals the kernel") {
  const int radius = 2;
  const auto k = build_gaussian_kernel(1.0, radius);
  DepthMap m = constant_map(11, 11, 0.0);
  m.at(5, 5) = 1.0;
  const auto r = filter_depth(m, k);
  for (int dy = -radius; dy <= radius; ++dy) {
    for (int dx = -radius; dx <= radius; ++dx) {
      CHECK(std::abs(r.depth.at(5 + dy, 5 + dx) - k.weight(dx, dy)) < 1e-15);
    }
  }
  CHECK(r.depth.at(0, 0) == 0.0);
}

TEST_CASE("invalid pixels are filled from valid neighbours") {
  const auto k = build_gaussian_kernel(1.0, 1);
  DepthMap m = constant_map(5, 5, 1.5);
  m.at(2, 2) = kInf;
  const auto r = filter_depth(m, k);
  CHECK(r.unresolved == 0);
  CHECK(r.depth.at(2, 2) == doctest::Approx(1.5));
  CHECK_FALSE(r.all_invalid);
}

TEST_CASE("isolated invalid region stays unresolved until resolve_invalid") {
  const auto k = build_gaussian_kernel(0.5, 1);
  DepthMap m = constant_map(7, 7, kInf);
  m.at(0, 0) = 1.0;
  const auto r = filter_depth(m, k);
  CHECK(r.unresolved > 0);
  const auto fixed = resolve_invalid(r.depth, 4.0);
  for (double v : fixed.values) CHECK(std::isfinite(v));
  CHECK(fixed.at(6, 6) == 4.0);
}

TEST_CASE("all-invalid input is flagged") {
  const auto r = filter_depth(constant_map(4, 4, kInf), build_gaussian_kernel(1.0));
  CHECK(r.all_invalid);
  CHECK(r.unresolved == 16);
}

TEST_CASE("filtering commutes with adding a constant") {
  Rng rng(9);
  DepthMap m{8, 10, {}};
  for (int i = 0; i < 80; ++i) m.values.push_back(1.0 + rng.uniform());
  DepthMap shifted = m;
  for (double& v : shifted.values) v += 0.75;
  const auto k = build_gaussian_kernel(1.2);
  const auto a = filter_depth(m, k), b = filter_depth(shifted, k);
  for (std::size_t i = 0; i < a.depth.values.size(); ++i) {
    CHECK(b.depth.values[i] == doctest::Approx(a.depth.values[i] + 0.75).epsilon(1e-12));
  }
}

TEST_CASE("RGB patch statistics are local") {
  const int h = 36, w = 48;  // 2x2 pixels per cell
  std::vector<float> left(h * w * 3, 0.0f), right(h * w * 3, 0.0f);
  RgbFeatureExtractor rgb;
  const auto base = rgb(RgbView{h, w, left}, RgbView{h, w, right});
  CHECK(base.channels == kRgbFeatureChannels);
  // zero images: every cell identical
  for (int c = 0; c < base.channels; ++c) {
    for (double v : base.channel(c)) CHECK(v == base.at(c, 0, 0));
  }
  // change the patch of cell (4, 7) only
  for (int y = 8; y < 10; ++y)
    for (int x = 14; x < 16; ++x) left[(y * w + x) * 3 + 1] = 0.8f;
  const auto changed = rgb(RgbView{h, w, left}, RgbView{h, w, right});
  int differing_cells = 0;
  for (int y = 0; y < kFeatureHeight; ++y) {
    for (int x = 0; x < kFeatureWidth; ++x) {
      bool diff = false;
      for (int c = 0; c < changed.channels; ++c) diff = diff || changed.at(c, y, x) != base.at(c, y, x);
      if (diff) {
        ++differing_cells;
        CHECK(y == 4);
        CHECK(x == 7);
      }
    }
  }
  CHECK(differing_cells == 1);
  CHECK_THROWS_AS(rgb(RgbView{10, 10, std::vector<float>(300)}, RgbView{10, 10, std::vector<float>(300)}),
                  std::invalid_argument);
}

TEST_CASE("depth features") {
  DepthFeatureExtractor ext;
  const auto flat = ext(constant_map(36, 48, 1.2));
  CHECK(flat.channels == kDepthFeatureChannels);
  CHECK(flat.height == kFeatureHeight);
  CHECK(flat.width == kFeatureWidth);
  for (int c = 0; c < flat.channels; ++c) {
    for (double v : flat.channel(c)) CHECK(v == doctest::Approx(flat.at(c, 0, 0)).epsilon(1e-12));
  }
  const auto doubled = ext(constant_map(36, 48, 2.4));
  CHECK(doubled != flat);
  auto bad = constant_map(36, 48, 1.0);
  bad.at(3, 3) = kInf;
  CHECK_THROWS_AS(ext(bad), std::invalid_argument);
}

TEST_CASE("fusion shapes and slicing") {
  const int h = 72, w = 96;
  std::vector<float> img(h * w * 3, 0.3f);
  RgbFeatureExtractor rgb;
  DepthFeatureExtractor dep;
  const auto a = rgb(RgbView{h, w, img}, RgbView{h, w, img});
  const auto b = dep(constant_map(h, w, 1.0));
  const auto fused = fuse_features(a, b);
  CHECK(fused.channels == kFusedFeatureChannels);
  CHECK(fused.values.size() == 512u * 18 * 24);
  CHECK(fused.channels_slice(0, kRgbFeatureChannels) == a);
  CHECK(fused.channels_slice(kRgbFeatureChannels, kDepthFeatureChannels) == b);

  FeatureTensor odd = b;
  odd.height = 9;
  odd.values.resize(odd.channels * odd.plane());
  CHECK_THROWS_AS(fuse_features(a, odd), std::invalid_argument);

  const auto pooled = average_pool(fused);
  CHECK(pooled.size() == 512);
}

TEST_CASE("perception pipeline tolerates invalid depth") {
  Observation obs;
  obs.height = 36;
  obs.width = 48;
  obs.rgb_left.assign(36 * 48 * 3, 0.5f);
  obs.rgb_right = obs.rgb_left;
  obs.depth.assign(36 * 48, 1.0f);
  obs.depth[100] = std::numeric_limits<float>::infinity();
  for (std::size_t i = 0; i < obs.rgb_left.size(); ++i) obs.rgb_left[i] = static_cast<float>((i * 37 % 101) / 100.0);
  PerceptionPipeline p;
  const auto pooled = p.pooled(obs);
  CHECK(pooled.size() == 512);
  for (double v : pooled) CHECK(std::isfinite(v));
  const auto reference = average_pool(p.fused(obs));
  for (std::size_t c = 0; c < pooled.size(); ++c) CHECK(std::abs(pooled[c] - reference[c]) < 1e-12);
}
