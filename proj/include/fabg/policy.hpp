#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "fabg/core_model.hpp"
#include "fabg/depth_pipeline.hpp"

namespace fabg {

/// Everything a policy may look at when queried at `query_tick`.
/// `observation_tick` = query_tick - perception delay; negative means the
/// scene has not started yet and is at rest at its first frame.
struct PolicyQuery {
  Tick query_tick = 0;
  Tick observation_tick = 0;
  const Episode* scene = nullptr;
  ActionFrame previous{};  // last commanded frame
};

/// Observation features -> k-frame chunk. predict() enforces the contract:
/// exactly k frames, every frame clamped into its valid range.
class ChunkPolicy {
 public:
  explicit ChunkPolicy(std::size_t k);
  virtual ~ChunkPolicy() = default;

  std::size_t chunk_length() const { return k_; }
  ActionChunk predict(const PolicyQuery& query) const;

 protected:
  virtual ActionChunk do_predict(const PolicyQuery& query) const = 0;

 private:
  std::size_t k_;
};

struct OracleSpec {
  std::shared_ptr<const Episode> source;
  double noise_sigma = 0.0;
  std::uint64_t seed = 0;
  /// Ticks of future the observation reveals. actions[i] shows
  /// source[t + min(i, foresight)]; unset means unlimited lookahead.
  std::optional<int> foresight;
};

void validate_oracle_spec(const OracleSpec& spec);

/// Ground-truth chunk from tick t plus seeded Gaussian noise, clamped.
/// Negative t reads the first frame (scene at rest). Throws
/// std::out_of_range("t beyond episode end") for t >= source length.
ActionChunk oracle_predict(const OracleSpec& spec, Tick t, std::size_t k);

class OraclePolicy final : public ChunkPolicy {
 public:
  OraclePolicy(OracleSpec spec, std::size_t k);
  const OracleSpec& spec() const { return spec_; }

 protected:
  ActionChunk do_predict(const PolicyQuery& query) const override;

 private:
  OracleSpec spec_;
};

// ---------------------------------------------------------------------------
// Linear chunk predictor

struct TrainingInfo {
  int epochs = 0;
  double learning_rate = 0.0;
  double lambda = 0.0;
  double initial_loss = 0.0;
  double final_loss = 0.0;
  std::vector<double> loss_history;  // one entry per epoch, before the update
};

/// y = W x + b with W: (k*61) x F row-major.
struct LinearModel {
  std::size_t k = 0;
  std::size_t feature_dim = 0;
  std::vector<double> weights;
  std::vector<double> bias;
  TrainingInfo info;

  std::size_t output_dim() const { return k * kActionDim; }
  std::vector<double> apply(std::span<const double> x) const;
  bool finite() const;
};

LinearModel make_zero_model(std::size_t k, std::size_t feature_dim);

/// Dense supervised set: x is n x F, y is n x D, both row-major.
struct Dataset {
  std::size_t feature_dim = 0;
  std::size_t target_dim = 0;
  std::vector<double> x;
  std::vector<double> y;

  std::size_t size() const { return feature_dim == 0 ? 0 : x.size() / feature_dim; }
  std::span<const double> features(std::size_t i) const {
    return std::span<const double>(x).subspan(i * feature_dim, feature_dim);
  }
  std::span<const double> target(std::size_t i) const {
    return std::span<const double>(y).subspan(i * target_dim, target_dim);
  }
  void add(std::span<const double> features, std::span<const double> target);
};

class TrainingDiverged : public std::runtime_error {
 public:
  TrainingDiverged(int epoch, double loss);
  int epoch() const { return epoch_; }

 private:
  int epoch_;
};

struct TrainOptions {
  double lambda = 0.0;
  double learning_rate = 1e-3;
  int epochs = 20000;
  bool standardize = true;  // train on z-scored features, fold the scaling back
};

/// Mean squared chunk error (summed over the k*61 outputs, averaged over
/// samples) plus lambda * ||W||^2, by full-batch gradient descent.
LinearModel train_linear_policy(const Dataset& data, std::size_t k, const TrainOptions& options);

/// Loss and gradient of a model on a dataset, in raw feature space.
struct LossGradient {
  double loss = 0.0;
  std::vector<double> grad_w;
  std::vector<double> grad_b;
};
LossGradient loss_and_gradient(const LinearModel& model, const Dataset& data, double lambda);

/// Central difference (f(x+e) - f(x-e)) / 2e.
double central_difference(const std::function<double(double)>& f, double x, double epsilon);

/// Max relative error between the analytic gradient and central finite
/// differences over every weight and bias entry (or `max_entries` of them
/// chosen with `seed`). Relative error is |a - n| / max(|a|, |n|, 1e-8).
double policy_gradient_check(const Dataset& sample, const LinearModel& model, double epsilon,
                             double lambda = 0.0, std::size_t max_entries = 0,
                             std::uint64_t seed = 1);

/// Average chunk MSE per output element.
double chunk_mse(const LinearModel& model, const Dataset& data);
double zero_baseline_mse(const Dataset& data);

/// Feature layout shared by training and inference: 512 pooled fused
/// features followed by the previous frame.
inline constexpr std::size_t kLearnedFeatureDim = kFusedFeatureChannels + kActionDim;

std::vector<double> policy_features(std::span<const double> pooled, const ActionFrame& previous);

/// Samples every `stride` ticks of every episode. Features use the
/// observation at tick s and frame s-1 (frame 0 at s = 0); the target is
/// slice_chunk(episode, s, k). Episodes must carry observations.
Dataset build_training_set(const std::vector<Episode>& episodes, std::size_t k,
                           const PerceptionPipeline& perception, std::size_t stride = 1);

/// Learned policy: perception on the observation at the query's observation
/// tick, then the linear model. Pooled features are cached per tick.
class LinearChunkPolicy final : public ChunkPolicy {
 public:
  LinearChunkPolicy(LinearModel model, PerceptionConfig perception = {});
  const LinearModel& model() const { return model_; }

 protected:
  ActionChunk do_predict(const PolicyQuery& query) const override;

 private:
  LinearModel model_;
  PerceptionPipeline perception_;
  mutable std::mutex cache_mutex_;
  mutable const Episode* cached_scene_ = nullptr;
  mutable std::map<Tick, std::vector<double>> cache_;
};

/// Sidecar: "FABP" | u16 version | u16 k | u32 F | W | b, float32 LE.
/// Throws FormatError subclasses from episode_io on malformed input.
std::vector<std::byte> encode_policy(const LinearModel& model);
LinearModel decode_policy(std::span<const std::byte> bytes);
void write_policy(const LinearModel& model, const std::filesystem::path& path);
LinearModel read_policy(const std::filesystem::path& path);

}  // namespace fabg
