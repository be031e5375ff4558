// Serial reference vs OpenMP kernels on desk-scale and reference shapes.
#include <benchmark/benchmark.h>

#include <vector>

#include "fabg/depth_pipeline.hpp"
#include "fabg/kernels.hpp"
#include "fabg/random.hpp"

namespace {

using namespace fabg;

std::vector<double> random_values(std::size_t n, std::uint64_t seed, double lo = 0.0, double hi = 1.0) {
  Rng rng(seed);
  std::vector<double> v(n);
  for (auto& x : v) x = lo + (hi - lo) * rng.uniform();
  return v;
}

kernels::PlaneShape shape_arg(const benchmark::State& state) {
  return {static_cast<int>(state.range(0)), static_cast<int>(state.range(1))};
}

template <bool Parallel>
void BM_GaussianFilter(benchmark::State& state) {
  const auto shape = shape_arg(state);
  auto in = random_values(shape.size(), 1, 0.5, 3.0);
  for (std::size_t i = 0; i < in.size(); i += 97) in[i] = kInvalidDepth;
  const auto kernel = build_gaussian_kernel(1.0);
  std::vector<double> out(in.size());
  for (auto _ : state) {
    if constexpr (Parallel) {
      kernels::parallel::gaussian_filter(in, shape, kernel.weights, kernel.radius, kInvalidDepth, out);
    } else {
      kernels::serial::gaussian_filter(in, shape, kernel.weights, kernel.radius, kInvalidDepth, out);
    }
    benchmark::DoNotOptimize(out.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<long long>(shape.size()));
}

template <bool Parallel>
void BM_DepthStem(benchmark::State& state) {
  const auto shape = shape_arg(state);
  const int c_out = 8;
  auto in = random_values(shape.size(), 2);
  auto w = random_values(static_cast<std::size_t>(c_out) * 9, 3, -0.5, 0.5);
  auto b = random_values(c_out, 4, -0.1, 0.1);
  std::vector<double> out(shape.size() * c_out);
  for (auto _ : state) {
    if constexpr (Parallel) {
      kernels::parallel::conv2d_replicate(in, 1, shape, w, b, c_out, 3, kernels::Activation::kTanh, out);
    } else {
      kernels::serial::conv2d_replicate(in, 1, shape, w, b, c_out, 3, kernels::Activation::kTanh, out);
    }
    benchmark::DoNotOptimize(out.data());
  }
}

template <bool Parallel>
void BM_Gram(benchmark::State& state) {
  const std::size_t n = static_cast<std::size_t>(state.range(0));
  const std::size_t f = static_cast<std::size_t>(state.range(1));
  auto x = random_values(n * f, 5, -1.0, 1.0);
  std::vector<double> out(f * f);
  for (auto _ : state) {
    if constexpr (Parallel) {
      kernels::parallel::gram(x, n, f, out);
    } else {
      kernels::serial::gram(x, n, f, out);
    }
    benchmark::DoNotOptimize(out.data());
  }
}

template <bool Parallel>
void BM_DtwBatch(benchmark::State& state) {
  const std::size_t len = static_cast<std::size_t>(state.range(0));
  const std::size_t pairs = 16;
  std::vector<std::vector<double>> a(pairs), b(pairs);
  std::vector<kernels::DtwJob> jobs(pairs);
  for (std::size_t i = 0; i < pairs; ++i) {
    a[i] = random_values(len, 10 + i);
    b[i] = random_values(len, 100 + i);
    jobs[i] = {a[i], len, b[i], len, 1};
  }
  std::vector<double> out(pairs);
  for (auto _ : state) {
    if constexpr (Parallel) {
      kernels::parallel::dtw_batch(jobs, out);
    } else {
      kernels::serial::dtw_batch(jobs, out);
    }
    benchmark::DoNotOptimize(out.data());
  }
}

}  // namespace

BENCHMARK(BM_GaussianFilter<false>)->Name("gaussian_filter/serial")->Args({72, 96})->Args({480, 640});
BENCHMARK(BM_GaussianFilter<true>)->Name("gaussian_filter/parallel")->Args({72, 96})->Args({480, 640});
BENCHMARK(BM_DepthStem<false>)->Name("depth_stem/serial")->Args({72, 96})->Args({480, 640});
BENCHMARK(BM_DepthStem<true>)->Name("depth_stem/parallel")->Args({72, 96})->Args({480, 640});
BENCHMARK(BM_Gram<false>)->Name("gram/serial")->Args({1000, 573});
BENCHMARK(BM_Gram<true>)->Name("gram/parallel")->Args({1000, 573});
BENCHMARK(BM_DtwBatch<false>)->Name("dtw_batch/serial")->Arg(300);
BENCHMARK(BM_DtwBatch<true>)->Name("dtw_batch/parallel")->Arg(300);

BENCHMARK_MAIN();
