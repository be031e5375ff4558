#include "fabg/depth_pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "fabg/kernels.hpp"
#include "fabg/random.hpp"

namespace fabg {

namespace {

constexpr int kHistogramBins = 8;
constexpr int kStatsPerPlane = 2 + kHistogramBins;

std::vector<double> seeded_normals(Rng& rng, std::size_t n, double stddev) {
  std::vector<double> out(n);
  for (auto& v : out) v = rng.normal() * stddev;
  return out;
}

void check_rgb(const RgbView& img, const char* name) {
  if (img.height < kFeatureHeight || img.width < kFeatureWidth) {
    throw std::invalid_argument(std::string(name) + " smaller than the 18x24 feature grid");
  }
  if (img.pixels.size() != static_cast<std::size_t>(img.height) * img.width * 3) {
    throw std::invalid_argument(std::string(name) + " pixel buffer does not match its shape");
  }
}

// Statistics of one colour channel of one patch. Gradients use central
// differences clamped to the patch so neighbouring cells never leak in.
void plane_statistics(const RgbView& img, int ch, int y0, int y1, int x0, int x1, double* out) {
  const auto px = [&](int y, int x) {
    return static_cast<double>(img.pixels[(static_cast<std::size_t>(y) * img.width + x) * 3 + ch]);
  };
  const double count = static_cast<double>((y1 - y0) * (x1 - x0));
  double sum = 0.0;
  for (int y = y0; y < y1; ++y)
    for (int x = x0; x < x1; ++x) sum += px(y, x);
  const double mean = sum / count;
  double var = 0.0;
  double hist[kHistogramBins] = {};
  for (int y = y0; y < y1; ++y) {
    for (int x = x0; x < x1; ++x) {
      const double d = px(y, x) - mean;
      var += d * d;
      const double gx = px(y, std::min(x + 1, x1 - 1)) - px(y, std::max(x - 1, x0));
      const double gy = px(std::min(y + 1, y1 - 1), x) - px(std::max(y - 1, y0), x);
      const double mag = std::hypot(gx, gy);
      if (mag == 0.0) continue;
      const double theta = std::atan2(gy, gx);  // [-pi, pi]
      int bin = static_cast<int>(std::floor((theta + kPi) / (2.0 * kPi) * kHistogramBins));
      bin = std::clamp(bin, 0, kHistogramBins - 1);
      hist[bin] += mag;
    }
  }
  out[0] = mean;
  out[1] = var / count;
  for (int b = 0; b < kHistogramBins; ++b) out[2 + b] = hist[b] / count;
}

}  // namespace

DepthMap depth_from_observation(const Observation& obs) {
  DepthMap d;
  d.height = obs.height;
  d.width = obs.width;
  d.values.assign(obs.depth.begin(), obs.depth.end());
  return d;
}

double gaussian_density(double sigma, double x, double y) {
  return 1.0 / (2.0 * kPi * sigma * sigma) * std::exp(-(x * x + y * y) / (2.0 * sigma * sigma));
}

int default_gaussian_radius(double sigma) {
  return std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
}

GaussianKernel build_gaussian_kernel(double sigma, int radius) {
  if (!(sigma > 0.0) || !std::isfinite(sigma)) throw std::invalid_argument("sigma must be positive");
  if (radius < 1) throw std::invalid_argument("radius must be >= 1");
  GaussianKernel k;
  k.sigma = sigma;
  k.radius = radius;
  const int side = k.side();
  k.raw.resize(static_cast<std::size_t>(side) * side);
  for (int dy = -radius; dy <= radius; ++dy)
    for (int dx = -radius; dx <= radius; ++dx)
      k.raw[static_cast<std::size_t>(dy + radius) * side + (dx + radius)] = gaussian_density(sigma, dx, dy);
  // Sum symmetric pairs smallest-first for a tight unit sum.
  std::vector<double> sorted = k.raw;
  std::sort(sorted.begin(), sorted.end());
  double total = 0.0;
  for (double v : sorted) total += v;
  k.weights.resize(k.raw.size());
  for (std::size_t i = 0; i < k.raw.size(); ++i) k.weights[i] = k.raw[i] / total;
  return k;
}

GaussianKernel build_gaussian_kernel(double sigma) {
  if (!(sigma > 0.0)) throw std::invalid_argument("sigma must be positive");
  return build_gaussian_kernel(sigma, default_gaussian_radius(sigma));
}

FilterResult filter_depth(const DepthMap& depth, const GaussianKernel& kernel, double invalid_marker) {
  if (depth.height < 1 || depth.width < 1 ||
      depth.values.size() != static_cast<std::size_t>(depth.height) * depth.width) {
    throw std::invalid_argument("depth plane does not match its shape");
  }
  FilterResult result;
  result.depth.height = depth.height;
  result.depth.width = depth.width;
  result.depth.values.resize(depth.values.size());
  result.all_invalid = std::all_of(depth.values.begin(), depth.values.end(), [&](double v) {
    return kernels::is_invalid_depth(v, invalid_marker);
  });
  if (result.all_invalid) {
    std::fill(result.depth.values.begin(), result.depth.values.end(), invalid_marker);
    result.unresolved = depth.values.size();
    return result;
  }
  result.unresolved = kernels::parallel::gaussian_filter(
      depth.values, {depth.height, depth.width}, kernel.weights, kernel.radius, invalid_marker,
      result.depth.values);
  return result;
}

DepthMap resolve_invalid(DepthMap depth, double fill, double invalid_marker) {
  for (double& v : depth.values) {
    if (kernels::is_invalid_depth(v, invalid_marker)) v = fill;
  }
  return depth;
}

FeatureTensor FeatureTensor::channels_slice(int first, int count) const {
  if (first < 0 || count < 0 || first + count > channels) {
    throw std::out_of_range("channel slice out of range");
  }
  FeatureTensor out;
  out.channels = count;
  out.height = height;
  out.width = width;
  out.values.assign(values.begin() + static_cast<std::ptrdiff_t>(first * plane()),
                    values.begin() + static_cast<std::ptrdiff_t>((first + count) * plane()));
  return out;
}

// ---------------------------------------------------------------------------

RgbFeatureExtractor::RgbFeatureExtractor(std::uint64_t seed) {
  Rng rng(seed);
  projection_ = seeded_normals(rng, static_cast<std::size_t>(kRgbFeatureChannels - kStatCount) * kStatCount,
                               1.0 / std::sqrt(static_cast<double>(kStatCount)));
}

std::vector<double> RgbFeatureExtractor::patch_statistics(const RgbView& left, const RgbView& right,
                                                          bool use_parallel) const {
  check_rgb(left, "rgb_left");
  check_rgb(right, "rgb_right");
  if (left.height != right.height || left.width != right.width) {
    throw std::invalid_argument("rgb_left and rgb_right shapes differ");
  }
  const std::size_t cells = static_cast<std::size_t>(kFeatureHeight) * kFeatureWidth;
  std::vector<double> stats(kStatCount * cells);
  const int h = left.height, w = left.width;

#pragma omp parallel for collapse(2) schedule(static) if (use_parallel)
  for (int i = 0; i < kFeatureHeight; ++i) {
    for (int j = 0; j < kFeatureWidth; ++j) {
      const int y0 = kernels::cell_begin(i, kFeatureHeight, h);
      const int y1 = kernels::cell_begin(i + 1, kFeatureHeight, h);
      const int x0 = kernels::cell_begin(j, kFeatureWidth, w);
      const int x1 = kernels::cell_begin(j + 1, kFeatureWidth, w);
      double cell[kStatCount];
      for (int eye = 0; eye < 2; ++eye) {
        const RgbView& img = eye == 0 ? left : right;
        for (int ch = 0; ch < 3; ++ch) plane_statistics(img, ch, y0, y1, x0, x1, &cell[(eye * 3 + ch) * kStatsPerPlane]);
      }
      const double count = static_cast<double>((y1 - y0) * (x1 - x0));
      for (int ch = 0; ch < 3; ++ch) {
        double diff = 0.0;
        for (int y = y0; y < y1; ++y) {
          for (int x = x0; x < x1; ++x) {
            const std::size_t p = (static_cast<std::size_t>(y) * w + x) * 3 + ch;
            diff += std::abs(static_cast<double>(left.pixels[p]) - right.pixels[p]);
          }
        }
        cell[6 * kStatsPerPlane + ch] = diff / count;
      }
      const std::size_t idx = static_cast<std::size_t>(i) * kFeatureWidth + j;
      for (int s = 0; s < kStatCount; ++s) stats[s * cells + idx] = cell[s];
    }
  }
  return stats;
}

FeatureTensor RgbFeatureExtractor::operator()(const RgbView& left, const RgbView& right) const {
  const auto stats = patch_statistics(left, right);
  FeatureTensor out;
  out.channels = kRgbFeatureChannels;
  const std::size_t plane = out.plane();
  out.values.assign(static_cast<std::size_t>(kRgbFeatureChannels) * plane, 0.0);
  std::copy(stats.begin(), stats.end(), out.values.begin());
  const int projected = kRgbFeatureChannels - kStatCount;
  kernels::parallel::matmul(projection_, projected, kStatCount, stats, plane,
                            std::span<double>(out.values).subspan(kStatCount * plane));
  return out;
}

std::vector<double> RgbFeatureExtractor::pooled(const RgbView& left, const RgbView& right) const {
  const auto stats = patch_statistics(left, right);
  const std::size_t plane = static_cast<std::size_t>(kFeatureHeight) * kFeatureWidth;
  std::vector<double> out(kRgbFeatureChannels, 0.0);
  for (int s = 0; s < kStatCount; ++s) {
    double sum = 0.0;
    for (std::size_t i = 0; i < plane; ++i) sum += stats[s * plane + i];
    out[s] = sum / static_cast<double>(plane);
  }
  // The projection is linear, so it commutes with the spatial mean.
  const int projected = kRgbFeatureChannels - kStatCount;
  kernels::serial::matmul(projection_, projected, kStatCount, std::span<const double>(out).first(kStatCount), 1,
                          std::span<double>(out).subspan(kStatCount));
  return out;
}

// ---------------------------------------------------------------------------

DepthFeatureExtractor::DepthFeatureExtractor(DepthFeatureConfig config) : config_(config) {
  if (!(config_.max_range > 0.0)) throw std::invalid_argument("max_range must be positive");
  if (config_.stem_channels < 1 || config_.mid_channels < 1) {
    throw std::invalid_argument("channel counts must be positive");
  }
  Rng rng(config_.seed);
  const auto c1 = static_cast<std::size_t>(config_.stem_channels);
  const auto c2 = static_cast<std::size_t>(config_.mid_channels);
  w1_ = seeded_normals(rng, c1 * 9, 2.0 / 3.0);
  b1_ = seeded_normals(rng, c1, 0.5);
  w2_ = seeded_normals(rng, c2 * c1 * 9, 1.0 / std::sqrt(9.0 * c1));
  b2_ = seeded_normals(rng, c2, 0.1);
  w3_ = seeded_normals(rng, kDepthFeatureChannels * c2, 1.0 / std::sqrt(static_cast<double>(c2)));
  b3_ = seeded_normals(rng, kDepthFeatureChannels, 0.1);
}

FeatureTensor DepthFeatureExtractor::operator()(const DepthMap& filtered, bool use_parallel) const {
  if (filtered.height < kFeatureHeight || filtered.width < kFeatureWidth) {
    throw std::invalid_argument("depth plane smaller than the 18x24 feature grid");
  }
  std::vector<double> x(filtered.values.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double v = filtered.values[i];
    if (!std::isfinite(v)) throw std::invalid_argument("unresolved invalid depth pixel at index " + std::to_string(i));
    x[i] = v / config_.max_range;
  }
  const kernels::PlaneShape full{filtered.height, filtered.width};
  const kernels::PlaneShape grid{kFeatureHeight, kFeatureWidth};
  const int c1 = config_.stem_channels, c2 = config_.mid_channels;

  std::vector<double> stem(full.size() * c1), pooled(grid.size() * c1), mid(grid.size() * c2);
  FeatureTensor out;
  out.channels = kDepthFeatureChannels;
  out.values.resize(grid.size() * kDepthFeatureChannels);
  if (use_parallel) {
    namespace k = kernels::parallel;
    k::conv2d_replicate(x, 1, full, w1_, b1_, c1, 3, kernels::Activation::kTanh, stem);
    k::adaptive_avg_pool(stem, c1, full, grid, pooled);
    k::conv2d_replicate(pooled, c1, grid, w2_, b2_, c2, 3, kernels::Activation::kTanh, mid);
    k::conv2d_replicate(mid, c2, grid, w3_, b3_, kDepthFeatureChannels, 1, kernels::Activation::kTanh, out.values);
  } else {
    namespace k = kernels::serial;
    k::conv2d_replicate(x, 1, full, w1_, b1_, c1, 3, kernels::Activation::kTanh, stem);
    k::adaptive_avg_pool(stem, c1, full, grid, pooled);
    k::conv2d_replicate(pooled, c1, grid, w2_, b2_, c2, 3, kernels::Activation::kTanh, mid);
    k::conv2d_replicate(mid, c2, grid, w3_, b3_, kDepthFeatureChannels, 1, kernels::Activation::kTanh, out.values);
  }
  return out;
}

// ---------------------------------------------------------------------------

FeatureTensor fuse_features(const FeatureTensor& rgb, const FeatureTensor& depth) {
  if (rgb.height != depth.height || rgb.width != depth.width) {
    throw std::invalid_argument("spatial shape mismatch: " + std::to_string(rgb.height) + "x" +
                                std::to_string(rgb.width) + " vs " + std::to_string(depth.height) +
                                "x" + std::to_string(depth.width));
  }
  FeatureTensor out;
  out.channels = rgb.channels + depth.channels;
  out.height = rgb.height;
  out.width = rgb.width;
  out.values.reserve(rgb.values.size() + depth.values.size());
  out.values.insert(out.values.end(), rgb.values.begin(), rgb.values.end());
  out.values.insert(out.values.end(), depth.values.begin(), depth.values.end());
  return out;
}

std::vector<double> average_pool(const FeatureTensor& features) {
  std::vector<double> out(features.channels);
  for (int c = 0; c < features.channels; ++c) {
    double sum = 0.0;
    for (double v : features.channel(c)) sum += v;
    out[c] = sum / static_cast<double>(features.plane());
  }
  return out;
}

PerceptionPipeline::PerceptionPipeline(PerceptionConfig config)
    : config_(config),
      kernel_(build_gaussian_kernel(config.sigma, config.radius.value_or(default_gaussian_radius(config.sigma)))),
      rgb_(config.rgb_seed),
      depth_(config.depth) {}

FeatureTensor PerceptionPipeline::fused(const Observation& obs) const {
  const RgbView left{obs.height, obs.width, obs.rgb_left};
  const RgbView right{obs.height, obs.width, obs.rgb_right};
  auto filtered = filter_depth(depth_from_observation(obs), kernel_, kInvalidDepth);
  const DepthMap resolved = resolve_invalid(std::move(filtered.depth), config_.invalid_fill, kInvalidDepth);
  return fuse_features(rgb_(left, right), depth_(resolved));
}

std::vector<double> PerceptionPipeline::pooled(const Observation& obs) const {
  const RgbView left{obs.height, obs.width, obs.rgb_left};
  const RgbView right{obs.height, obs.width, obs.rgb_right};
  auto filtered = filter_depth(depth_from_observation(obs), kernel_, kInvalidDepth);
  const DepthMap resolved = resolve_invalid(std::move(filtered.depth), config_.invalid_fill, kInvalidDepth);
  auto out = rgb_.pooled(left, right);
  const auto depth = average_pool(depth_(resolved));
  out.insert(out.end(), depth.begin(), depth.end());
  return out;
}

}  // namespace fabg
