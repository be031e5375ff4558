#pragma once

#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <vector>

#include "fabg/core_model.hpp"

namespace fabg {

/// Single-channel depth plane in meters, double precision for filtering.
struct DepthMap {
  int height = 0;
  int width = 0;
  std::vector<double> values;

  double at(int y, int x) const { return values[static_cast<std::size_t>(y) * width + x]; }
  double& at(int y, int x) { return values[static_cast<std::size_t>(y) * width + x]; }
};

DepthMap depth_from_observation(const Observation& obs);

/// Normalized 2-D Gaussian, (2*radius+1)^2 weights, row-major by dy then dx.
struct GaussianKernel {
  double sigma = 1.0;
  int radius = 1;
  std::vector<double> raw;      // density values before normalization
  std::vector<double> weights;  // raw / sum(raw)

  int side() const { return 2 * radius + 1; }
  double weight(int dx, int dy) const {
    return weights[static_cast<std::size_t>(dy + radius) * side() + (dx + radius)];
  }
  double raw_weight(int dx, int dy) const {
    return raw[static_cast<std::size_t>(dy + radius) * side() + (dx + radius)];
  }
};

/// (1 / (2 pi sigma^2)) exp(-(x^2 + y^2) / (2 sigma^2))
double gaussian_density(double sigma, double x, double y);

/// ceil(3 sigma), at least 1.
int default_gaussian_radius(double sigma);

/// Throws std::invalid_argument for sigma <= 0 or radius < 1.
GaussianKernel build_gaussian_kernel(double sigma, int radius);
GaussianKernel build_gaussian_kernel(double sigma);

struct FilterResult {
  DepthMap depth;
  std::size_t unresolved = 0;  // pixels with no valid neighbour, still invalid
  bool all_invalid = false;    // input had no valid pixel at all
};

/// Edge-replicated convolution that skips invalid pixels and renormalizes.
FilterResult filter_depth(const DepthMap& depth, const GaussianKernel& kernel,
                          double invalid_marker = std::numeric_limits<double>::infinity());

/// Replaces every remaining invalid pixel with `fill`.
DepthMap resolve_invalid(DepthMap depth, double fill,
                         double invalid_marker = std::numeric_limits<double>::infinity());

inline constexpr int kFeatureHeight = 18;
inline constexpr int kFeatureWidth = 24;
inline constexpr int kRgbFeatureChannels = 384;
inline constexpr int kDepthFeatureChannels = 128;
inline constexpr int kFusedFeatureChannels = kRgbFeatureChannels + kDepthFeatureChannels;

/// channels x 18 x 24, channel-major.
struct FeatureTensor {
  int channels = 0;
  int height = kFeatureHeight;
  int width = kFeatureWidth;
  std::vector<double> values;

  std::size_t plane() const { return static_cast<std::size_t>(height) * width; }
  double at(int c, int y, int x) const {
    return values[c * plane() + static_cast<std::size_t>(y) * width + x];
  }
  std::span<const double> channel(int c) const {
    return std::span<const double>(values).subspan(c * plane(), plane());
  }
  /// Slice of consecutive channels [first, first + count).
  FeatureTensor channels_slice(int first, int count) const;

  bool operator==(const FeatureTensor&) const = default;
};

/// Interleaved H x W x 3 image in [0,1].
struct RgbView {
  int height = 0;
  int width = 0;
  std::span<const float> pixels;
};

/// Stand-in for the pretrained backbone: each 18x24 cell summarizes its own
/// image patch (per-eye, per-colour mean, variance and an 8-bin gradient
/// orientation histogram, plus the mean absolute left/right difference) and
/// the 63 statistics are expanded to 384 channels by a fixed seeded
/// projection. The first 63 channels are the raw statistics.
class RgbFeatureExtractor {
 public:
  static constexpr int kStatCount = 63;

  explicit RgbFeatureExtractor(std::uint64_t seed = 0x5eed0001);

  /// Throws std::invalid_argument on shape mismatch or images smaller than
  /// the 18x24 grid.
  FeatureTensor operator()(const RgbView& left, const RgbView& right) const;

  /// Spatial mean of operator() per channel, without building the map.
  std::vector<double> pooled(const RgbView& left, const RgbView& right) const;

  /// Per-cell statistics only (kStatCount x 18 x 24), serial reference.
  std::vector<double> patch_statistics(const RgbView& left, const RgbView& right,
                                       bool use_parallel = true) const;

 private:
  std::vector<double> projection_;  // (384 - 63) x 63
};

struct DepthFeatureConfig {
  double max_range = 4.0;  // meters; depth is divided by this before the stack
  int stem_channels = 8;   // 3x3 conv at full resolution
  int mid_channels = 32;   // 3x3 conv on the 18x24 grid
  std::uint64_t seed = 0x5eed0002;
};

/// Fixed-weight stack: 3x3 conv + tanh at full resolution, adaptive average
/// pool to 18x24, 3x3 conv + tanh, 1x1 conv + tanh to 128 channels.
/// Replicate padding keeps a constant input spatially constant.
class DepthFeatureExtractor {
 public:
  explicit DepthFeatureExtractor(DepthFeatureConfig config = {});

  /// Throws std::invalid_argument if any pixel is still invalid.
  FeatureTensor operator()(const DepthMap& filtered, bool use_parallel = true) const;

  const DepthFeatureConfig& config() const { return config_; }

 private:
  DepthFeatureConfig config_;
  std::vector<double> w1_, b1_, w2_, b2_, w3_, b3_;
};

/// Channel concatenation, RGB first. Throws std::invalid_argument when the
/// spatial shapes differ.
FeatureTensor fuse_features(const FeatureTensor& rgb, const FeatureTensor& depth);

/// Spatial mean per channel.
std::vector<double> average_pool(const FeatureTensor& features);

struct PerceptionConfig {
  double sigma = 1.0;
  std::optional<int> radius;  // default ceil(3 sigma)
  double invalid_fill = 4.0;  // meters, used for pixels the filter cannot fill
  std::uint64_t rgb_seed = 0x5eed0001;
  DepthFeatureConfig depth;
};

/// Observation -> filtered depth -> dual-path features -> fused 512x18x24.
class PerceptionPipeline {
 public:
  explicit PerceptionPipeline(PerceptionConfig config = {});

  FeatureTensor fused(const Observation& obs) const;
  /// 512 spatially pooled fused features; equals average_pool(fused(obs))
  /// up to rounding.
  std::vector<double> pooled(const Observation& obs) const;

  const PerceptionConfig& config() const { return config_; }

 private:
  PerceptionConfig config_;
  GaussianKernel kernel_;
  RgbFeatureExtractor rgb_;
  DepthFeatureExtractor depth_;
};

}  // namespace fabg
