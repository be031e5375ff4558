#include <cmath>
#include <vector>

#include "doctest.h"
#include "fabg/depth_pipeline.hpp"
#include "fabg/kernels.hpp"
#include "fabg/random.hpp"

using namespace fabg;
namespace k = fabg::kernels;

namespace {

std::vector<double> random_vector(Rng& rng, std::size_t n, double lo = -1.0, double hi = 1.0) {
  std::vector<double> v(n);
  for (auto& x : v) x = lo + (hi - lo) * rng.uniform();
  return v;
}

}  // namespace

TEST_CASE("gaussian_filter serial and parallel agree bit for bit") {
  Rng rng(1);
  const k::PlaneShape shape{37, 53};
  auto in = random_vector(rng, shape.size(), 0.5, 3.0);
  for (std::size_t i = 0; i < in.size(); i += 7) in[i] = std::numeric_limits<double>::infinity();
  const auto kernel = build_gaussian_kernel(1.3);
  std::vector<double> a(in.size()), b(in.size());
  const auto ua = k::serial::gaussian_filter(in, shape, kernel.weights, kernel.radius, INFINITY, a);
  const auto ub = k::parallel::gaussian_filter(in, shape, kernel.weights, kernel.radius, INFINITY, b);
  CHECK(ua == ub);
  CHECK(a == b);
}

TEST_CASE("conv2d_replicate and pooling agree") {
  Rng rng(2);
  const k::PlaneShape shape{20, 27};
  const int c_in = 3, c_out = 5;
  const auto in = random_vector(rng, c_in * shape.size());
  const auto w = random_vector(rng, static_cast<std::size_t>(c_out) * c_in * 9);
  const auto bias = random_vector(rng, c_out);
  for (auto act : {k::Activation::kNone, k::Activation::kTanh, k::Activation::kRelu}) {
    std::vector<double> a(c_out * shape.size()), b(a.size());
    k::serial::conv2d_replicate(in, c_in, shape, w, bias, c_out, 3, act, a);
    k::parallel::conv2d_replicate(in, c_in, shape, w, bias, c_out, 3, act, b);
    CHECK(a == b);
  }
  const k::PlaneShape out_shape{6, 8};
  std::vector<double> pa(c_in * out_shape.size()), pb(pa.size());
  k::serial::adaptive_avg_pool(in, c_in, shape, out_shape, pa);
  k::parallel::adaptive_avg_pool(in, c_in, shape, out_shape, pb);
  CHECK(pa == pb);
}

TEST_CASE("pooling averages exact cells") {
  // 4x4 -> 2x2: each output is the mean of a 2x2 block
  std::vector<double> in(16);
  for (int i = 0; i < 16; ++i) in[i] = i;
  std::vector<double> out(4);
  k::serial::adaptive_avg_pool(in, 1, {4, 4}, {2, 2}, out);
  CHECK(out[0] == doctest::Approx((0 + 1 + 4 + 5) / 4.0));
  CHECK(out[3] == doctest::Approx((10 + 11 + 14 + 15) / 4.0));
}

TEST_CASE("gram, cross and matmul agree and are correct") {
  Rng rng(3);
  const std::size_t n = 41, f = 13, d = 7;
  const auto x = random_vector(rng, n * f);
  const auto y = random_vector(rng, n * d);

  std::vector<double> ga(f * f), gb(f * f);
  k::serial::gram(x, n, f, ga);
  k::parallel::gram(x, n, f, gb);
  CHECK(ga == gb);
  double ref = 0.0;
  for (std::size_t r = 0; r < n; ++r) ref += x[r * f + 2] * x[r * f + 5];
  CHECK(ga[2 * f + 5] == doctest::Approx(ref).epsilon(1e-12));
  CHECK(ga[2 * f + 5] == ga[5 * f + 2]);

  std::vector<double> ca(d * f), cb(d * f);
  k::serial::cross(y, d, x, n, f, ca);
  k::parallel::cross(y, d, x, n, f, cb);
  CHECK(ca == cb);

  std::vector<double> ma(d * f), mb(d * f);
  const auto a = random_vector(rng, d * n);
  k::serial::matmul(a, d, n, x, f, ma);
  k::parallel::matmul(a, d, n, x, f, mb);
  CHECK(ma == mb);
  double m01 = 0.0;
  for (std::size_t p = 0; p < n; ++p) m01 += a[p] * x[p * f + 1];
  CHECK(ma[1] == doctest::Approx(m01).epsilon(1e-12));
}

TEST_CASE("dtw_l1 basics") {
  const std::vector<double> a{0, 1, 2}, b{0, 1, 2};
  CHECK(k::dtw_l1(a, 3, b, 3, 1) == 0.0);
  const std::vector<double> c{0, 0, 1, 2};
  CHECK(k::dtw_l1(a, 3, c, 4, 1) == 0.0);  // repetition costs nothing
  const std::vector<double> d{1, 1, 1};
  CHECK(k::dtw_l1(a, 3, d, 3, 1) == doctest::Approx(2.0));
}

TEST_CASE("dtw_batch serial and parallel agree") {
  Rng rng(4);
  std::vector<std::vector<double>> as, bs;
  std::vector<k::DtwJob> jobs;
  for (int i = 0; i < 25; ++i) {
    const std::size_t na = 1 + rng.next() % 30, nb = 1 + rng.next() % 30;
    as.push_back(random_vector(rng, na * 3));
    bs.push_back(random_vector(rng, nb * 3));
  }
  for (std::size_t i = 0; i < as.size(); ++i) {
    jobs.push_back({as[i], as[i].size() / 3, bs[i], bs[i].size() / 3, 3});
  }
  std::vector<double> sa(jobs.size()), pa(jobs.size());
  k::serial::dtw_batch(jobs, sa);
  k::parallel::dtw_batch(jobs, pa);
  CHECK(sa == pa);
  for (std::size_t i = 0; i < jobs.size(); ++i) {
    CHECK(sa[i] == k::dtw_l1(jobs[i].a, jobs[i].na, jobs[i].b, jobs[i].nb, 3));
  }
}

TEST_CASE("patch statistics and depth stack agree across kernel sets") {
  Rng rng(5);
  const int h = 48, w = 60;
  std::vector<float> left(h * w * 3), right(h * w * 3);
  for (auto& v : left) v = static_cast<float>(rng.uniform());
  for (auto& v : right) v = static_cast<float>(rng.uniform());
  RgbFeatureExtractor rgb;
  const RgbView l{h, w, left}, r{h, w, right};
  CHECK(rgb.patch_statistics(l, r, false) == rgb.patch_statistics(l, r, true));

  DepthMap depth{h, w, random_vector(rng, static_cast<std::size_t>(h) * w, 0.5, 3.0)};
  DepthFeatureExtractor ext;
  CHECK(ext(depth, false) == ext(depth, true));
}
