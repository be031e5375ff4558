#include "fabg/policy.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include <Eigen/Eigenvalues>

#include "fabg/byte_io.hpp"
#include "fabg/episode_io.hpp"
#include "fabg/kernels.hpp"
#include "fabg/random.hpp"

namespace fabg {

ChunkPolicy::ChunkPolicy(std::size_t k) : k_(k) {
  if (k == 0) throw std::invalid_argument("chunk length must be >= 1");
}

ActionChunk ChunkPolicy::predict(const PolicyQuery& query) const {
  ActionChunk chunk = do_predict(query);
  if (chunk.actions.size() != k_) {
    throw std::logic_error("policy returned " + std::to_string(chunk.actions.size()) +
                           " frames, expected " + std::to_string(k_));
  }
  for (auto& frame : chunk.actions) frame = clamp_frame(frame);
  return chunk;
}

// ---------------------------------------------------------------------------
// Oracle

void validate_oracle_spec(const OracleSpec& spec) {
  if (!spec.source) throw std::invalid_argument("oracle source episode missing");
  if (spec.source->frames.empty()) throw std::invalid_argument("oracle source episode is empty");
  if (!(spec.noise_sigma >= 0.0) || !std::isfinite(spec.noise_sigma)) {
    throw std::invalid_argument("noise_sigma must be finite and >= 0");
  }
  if (spec.foresight && *spec.foresight < 0) throw std::invalid_argument("foresight must be >= 0");
}

ActionChunk oracle_predict(const OracleSpec& spec, Tick t, std::size_t k) {
  validate_oracle_spec(spec);
  if (k == 0) throw std::invalid_argument("chunk length must be >= 1");
  const auto& frames = spec.source->frames;
  const Tick last = static_cast<Tick>(frames.size()) - 1;
  if (t > last) throw std::out_of_range("t beyond episode end");

  ActionChunk chunk;
  chunk.origin_tick = t;
  chunk.actions.reserve(k);
  for (std::size_t i = 0; i < k; ++i) {
    Tick offset = static_cast<Tick>(i);
    if (spec.foresight) offset = std::min<Tick>(offset, *spec.foresight);
    Tick src = t + offset;
    if (src > last) {
      src = last;
      chunk.padded = true;
    }
    chunk.actions.push_back(frames[static_cast<std::size_t>(std::max<Tick>(src, 0))]);
  }
  if (spec.noise_sigma > 0.0) {
    Rng rng(derive_seed(spec.seed, static_cast<std::uint64_t>(t)));
    for (auto& frame : chunk.actions) {
      for (std::size_t d = 0; d < kActionDim; ++d) {
        frame[d] = static_cast<float>(frame[d] + spec.noise_sigma * rng.normal());
      }
    }
  }
  for (auto& frame : chunk.actions) frame = clamp_frame(frame);
  return chunk;
}

OraclePolicy::OraclePolicy(OracleSpec spec, std::size_t k) : ChunkPolicy(k), spec_(std::move(spec)) {
  validate_oracle_spec(spec_);
}

ActionChunk OraclePolicy::do_predict(const PolicyQuery& query) const {
  return oracle_predict(spec_, query.observation_tick, chunk_length());
}

// ---------------------------------------------------------------------------
// Linear model

std::vector<double> LinearModel::apply(std::span<const double> x) const {
  if (x.size() != feature_dim) {
    throw std::invalid_argument("feature vector has " + std::to_string(x.size()) + " entries, expected " +
                                std::to_string(feature_dim));
  }
  std::vector<double> y(bias);
  for (std::size_t r = 0; r < y.size(); ++r) {
    const double* w = &weights[r * feature_dim];
    double acc = 0.0;
    for (std::size_t j = 0; j < feature_dim; ++j) acc += w[j] * x[j];
    y[r] += acc;
  }
  return y;
}

bool LinearModel::finite() const {
  const auto ok = [](double v) { return std::isfinite(v); };
  return std::all_of(weights.begin(), weights.end(), ok) && std::all_of(bias.begin(), bias.end(), ok);
}

LinearModel make_zero_model(std::size_t k, std::size_t feature_dim) {
  if (k == 0 || feature_dim == 0) throw std::invalid_argument("k and feature_dim must be >= 1");
  LinearModel m;
  m.k = k;
  m.feature_dim = feature_dim;
  m.weights.assign(m.output_dim() * feature_dim, 0.0);
  m.bias.assign(m.output_dim(), 0.0);
  return m;
}

void Dataset::add(std::span<const double> f, std::span<const double> t) {
  if (feature_dim == 0 && target_dim == 0) {
    feature_dim = f.size();
    target_dim = t.size();
  }
  if (f.size() != feature_dim || t.size() != target_dim) {
    throw std::invalid_argument("sample dimension mismatch");
  }
  x.insert(x.end(), f.begin(), f.end());
  y.insert(y.end(), t.begin(), t.end());
}

TrainingDiverged::TrainingDiverged(int epoch, double loss)
    : std::runtime_error("training diverged at epoch " + std::to_string(epoch) + " (loss " +
                         std::to_string(loss) + ")"),
      epoch_(epoch) {}

namespace {

void check_dataset(const Dataset& data, std::size_t k) {
  if (data.size() == 0) throw std::invalid_argument("empty dataset");
  if (data.x.size() != data.size() * data.feature_dim || data.y.size() != data.size() * data.target_dim) {
    throw std::invalid_argument("dataset buffers do not match their dimensions");
  }
  if (data.target_dim != k * kActionDim) {
    throw std::invalid_argument("target dimension " + std::to_string(data.target_dim) + " != k*61 = " +
                                std::to_string(k * kActionDim));
  }
  for (double v : data.y) {
    if (!std::isfinite(v)) throw std::invalid_argument("non-finite target value");
  }
  for (double v : data.x) {
    if (!std::isfinite(v)) throw std::invalid_argument("non-finite feature value");
  }
}

}  // namespace

// Training works on centered (and optionally scaled) features z = (x - mu) / s,
// so the bias decouples: its optimum is the mean target and gradient descent
// only has to move V. Each epoch needs V*G with G = Z^T Z, which makes the
// cost independent of the sample count.
LinearModel train_linear_policy(const Dataset& data, std::size_t k, const TrainOptions& options) {
  check_dataset(data, k);
  if (!(options.lambda >= 0.0)) throw std::invalid_argument("lambda must be >= 0");
  if (!(options.learning_rate > 0.0)) throw std::invalid_argument("learning rate must be > 0");
  if (options.epochs < 0) throw std::invalid_argument("epochs must be >= 0");

  const std::size_t n = data.size(), f = data.feature_dim, d = data.target_dim;
  const double inv_n = 1.0 / static_cast<double>(n);

  std::vector<double> mu(f, 0.0), scale(f, 1.0);
  for (std::size_t s = 0; s < n; ++s)
    for (std::size_t j = 0; j < f; ++j) mu[j] += data.x[s * f + j];
  for (double& v : mu) v *= inv_n;
  if (options.standardize) {
    std::vector<double> var(f, 0.0);
    for (std::size_t s = 0; s < n; ++s)
      for (std::size_t j = 0; j < f; ++j) {
        const double c = data.x[s * f + j] - mu[j];
        var[j] += c * c;
      }
    for (std::size_t j = 0; j < f; ++j) {
      const double sd = std::sqrt(var[j] * inv_n);
      scale[j] = sd > 1e-12 ? sd : 1.0;
    }
  }
  std::vector<double> z(n * f);
  for (std::size_t s = 0; s < n; ++s)
    for (std::size_t j = 0; j < f; ++j) z[s * f + j] = (data.x[s * f + j] - mu[j]) / scale[j];

  std::vector<double> ybar(d, 0.0);
  for (std::size_t s = 0; s < n; ++s)
    for (std::size_t r = 0; r < d; ++r) ybar[r] += data.y[s * d + r];
  for (double& v : ybar) v *= inv_n;

  // Outputs whose target never varies keep V = 0 exactly; leave them out.
  std::vector<std::size_t> active;
  double residual = 0.0;  // sum of squared centered targets
  for (std::size_t r = 0; r < d; ++r) {
    bool varies = false;
    for (std::size_t s = 0; s < n; ++s) {
      const double c = data.y[s * d + r] - ybar[r];
      residual += c * c;
      varies = varies || data.y[s * d + r] != data.y[r];
    }
    if (varies) active.push_back(r);
  }
  const std::size_t a = active.size();

  std::vector<double> gram(f * f), yc(n * a), cross(a * f);
  kernels::parallel::gram(z, n, f, gram);
  for (std::size_t s = 0; s < n; ++s)
    for (std::size_t i = 0; i < a; ++i) yc[s * a + i] = data.y[s * d + active[i]] - ybar[active[i]];
  kernels::parallel::cross(yc, a, z, n, f, cross);

  // Gradient descent on V is rotation-equivariant: in the eigenbasis
  // G = Q diag(ev) Q^T every coordinate u = (V Q)_ij follows its own scalar
  // recursion, so an epoch costs O(a f) instead of a matmul. The iterates
  // are those of plain full-batch descent on V.
  using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  const Eigen::SelfAdjointEigenSolver<RowMatrix> eig(Eigen::Map<const RowMatrix>(gram.data(), f, f));
  if (eig.info() != Eigen::Success) throw std::runtime_error("eigen decomposition of the feature Gram matrix failed");
  const RowMatrix& q = eig.eigenvectors();
  std::vector<double> ev(f);
  for (std::size_t j = 0; j < f; ++j) ev[j] = std::max(0.0, eig.eigenvalues()[static_cast<Eigen::Index>(j)]);
  RowMatrix rotated = Eigen::Map<const RowMatrix>(cross.data(), a, f) * q;
  std::vector<double> dq(rotated.data(), rotated.data() + a * f);

  std::vector<double> u(a * f, 0.0);
  const auto loss_now = [&] {
    double quad = 0.0, lin = 0.0, norm = 0.0;
    for (std::size_t i = 0; i < a; ++i) {
      for (std::size_t j = 0; j < f; ++j) {
        const double x = u[i * f + j];
        quad += ev[j] * x * x;
        lin += x * dq[i * f + j];
        norm += x * x;
      }
    }
    return (quad - 2.0 * lin + residual) * inv_n + options.lambda * norm;
  };

  TrainingInfo info;
  info.epochs = options.epochs;
  info.learning_rate = options.learning_rate;
  info.lambda = options.lambda;
  info.loss_history.reserve(static_cast<std::size_t>(options.epochs));
  for (int epoch = 0; epoch < options.epochs; ++epoch) {
    const double loss = loss_now();
    if (!std::isfinite(loss)) throw TrainingDiverged(epoch, loss);
    info.loss_history.push_back(loss);
    for (std::size_t i = 0; i < a; ++i) {
      for (std::size_t j = 0; j < f; ++j) {
        double& x = u[i * f + j];
        const double g = 2.0 * inv_n * (ev[j] * x - dq[i * f + j]) + 2.0 * options.lambda * x;
        x -= options.learning_rate * g;
      }
    }
  }
  info.final_loss = loss_now();
  if (!std::isfinite(info.final_loss)) throw TrainingDiverged(options.epochs, info.final_loss);
  info.initial_loss = info.loss_history.empty() ? info.final_loss : info.loss_history.front();

  const RowMatrix back = Eigen::Map<const RowMatrix>(u.data(), a, f) * q.transpose();
  std::vector<double> v(back.data(), back.data() + a * f);

  LinearModel model = make_zero_model(k, f);
  model.info = std::move(info);
  for (std::size_t i = 0; i < a; ++i) {
    const std::size_t r = active[i];
    for (std::size_t j = 0; j < f; ++j) model.weights[r * f + j] = v[i * f + j] / scale[j];
  }
  for (std::size_t r = 0; r < d; ++r) {
    double shift = 0.0;
    for (std::size_t j = 0; j < f; ++j) shift += model.weights[r * f + j] * mu[j];
    model.bias[r] = ybar[r] - shift;
  }
  return model;
}

LossGradient loss_and_gradient(const LinearModel& model, const Dataset& data, double lambda) {
  check_dataset(data, model.k);
  if (data.feature_dim != model.feature_dim) throw std::invalid_argument("feature dimension mismatch");
  const std::size_t n = data.size(), f = data.feature_dim, d = data.target_dim;
  LossGradient out;
  out.grad_w.assign(d * f, 0.0);
  out.grad_b.assign(d, 0.0);
  const double inv_n = 1.0 / static_cast<double>(n);
  for (std::size_t s = 0; s < n; ++s) {
    const auto x = data.features(s);
    const auto pred = model.apply(x);
    for (std::size_t r = 0; r < d; ++r) {
      const double e = pred[r] - data.y[s * d + r];
      out.loss += e * e * inv_n;
      out.grad_b[r] += 2.0 * e * inv_n;
      for (std::size_t j = 0; j < f; ++j) out.grad_w[r * f + j] += 2.0 * e * x[j] * inv_n;
    }
  }
  for (std::size_t i = 0; i < model.weights.size(); ++i) {
    out.loss += lambda * model.weights[i] * model.weights[i];
    out.grad_w[i] += 2.0 * lambda * model.weights[i];
  }
  return out;
}

double central_difference(const std::function<double(double)>& fn, double x, double epsilon) {
  return (fn(x + epsilon) - fn(x - epsilon)) / (2.0 * epsilon);
}

double policy_gradient_check(const Dataset& sample, const LinearModel& model, double epsilon, double lambda,
                             std::size_t max_entries, std::uint64_t seed) {
  if (!(epsilon > 0.0) || epsilon > 1e-2) throw std::invalid_argument("epsilon must be in (0, 1e-2]");
  const LossGradient analytic = loss_and_gradient(model, sample, lambda);
  const std::size_t nw = model.weights.size();
  const std::size_t total = nw + model.bias.size();

  std::vector<std::size_t> entries(total);
  std::iota(entries.begin(), entries.end(), std::size_t{0});
  if (max_entries > 0 && max_entries < total) {
    Rng rng(seed);
    for (std::size_t i = 0; i < max_entries; ++i) {
      const std::size_t j = i + static_cast<std::size_t>(rng.next() % (total - i));
      std::swap(entries[i], entries[j]);
    }
    entries.resize(max_entries);
  }

  // An entry only moves its own output row, so the other rows' terms cancel
  // exactly in the difference; leaving them out keeps rounding error small.
  const std::size_t f = model.feature_dim, n = sample.size();
  LinearModel probe = model;
  const auto row_loss = [&](std::size_t r) {
    double loss = 0.0;
    for (std::size_t s = 0; s < n; ++s) {
      const auto x = sample.features(s);
      double pred = probe.bias[r];
      for (std::size_t j = 0; j < f; ++j) pred += probe.weights[r * f + j] * x[j];
      const double err = pred - sample.y[s * sample.target_dim + r];
      loss += err * err / static_cast<double>(n);
    }
    for (std::size_t j = 0; j < f; ++j) loss += lambda * probe.weights[r * f + j] * probe.weights[r * f + j];
    return loss;
  };
  double worst = 0.0;
  for (std::size_t e : entries) {
    double& slot = e < nw ? probe.weights[e] : probe.bias[e - nw];
    const std::size_t row = e < nw ? e / f : e - nw;
    const double original = slot;
    const double numeric = central_difference(
        [&](double value) {
          slot = value;
          return row_loss(row);
        },
        original, epsilon);
    slot = original;
    const double exact = e < nw ? analytic.grad_w[e] : analytic.grad_b[e - nw];
    const double denom = std::max({std::abs(exact), std::abs(numeric), 1e-8});
    worst = std::max(worst, std::abs(exact - numeric) / denom);
  }
  return worst;
}

double chunk_mse(const LinearModel& model, const Dataset& data) {
  check_dataset(data, model.k);
  double sum = 0.0;
  for (std::size_t s = 0; s < data.size(); ++s) {
    const auto pred = model.apply(data.features(s));
    for (std::size_t r = 0; r < data.target_dim; ++r) {
      // The policy contract clamps, so score what would be executed.
      const double lo = r % kActionDim < kBlendshapeCount ? 0.0 : -static_cast<double>(static_cast<float>(kPi));
      const double hi = r % kActionDim < kBlendshapeCount ? 1.0 : static_cast<double>(static_cast<float>(kPi));
      const double e = std::clamp(pred[r], lo, hi) - data.y[s * data.target_dim + r];
      sum += e * e;
    }
  }
  return sum / static_cast<double>(data.y.size());
}

double zero_baseline_mse(const Dataset& data) {
  if (data.y.empty()) throw std::invalid_argument("empty dataset");
  double sum = 0.0;
  for (double v : data.y) sum += v * v;
  return sum / static_cast<double>(data.y.size());
}

std::vector<double> policy_features(std::span<const double> pooled, const ActionFrame& previous) {
  if (pooled.size() != static_cast<std::size_t>(kFusedFeatureChannels)) {
    throw std::invalid_argument("expected 512 pooled features");
  }
  std::vector<double> x(pooled.begin(), pooled.end());
  x.reserve(kLearnedFeatureDim);
  for (float v : previous.values) x.push_back(v);
  return x;
}

Dataset build_training_set(const std::vector<Episode>& episodes, std::size_t k,
                           const PerceptionPipeline& perception, std::size_t stride) {
  if (episodes.empty()) throw std::invalid_argument("empty corpus");
  if (stride == 0) throw std::invalid_argument("stride must be >= 1");
  struct Slot {
    const Episode* ep;
    Tick s;
  };
  std::vector<Slot> slots;
  for (const auto& ep : episodes) {
    if (!ep.has_observations()) throw std::invalid_argument("training episodes need observations");
    for (std::size_t s = 0; s < ep.size(); s += stride) slots.push_back({&ep, static_cast<Tick>(s)});
  }
  const std::size_t n = slots.size();
  Dataset data;
  data.feature_dim = kLearnedFeatureDim;
  data.target_dim = k * kActionDim;
  data.x.resize(n * data.feature_dim);
  data.y.resize(n * data.target_dim);

  std::vector<std::string> errors(n);
#pragma omp parallel for schedule(dynamic)
  for (long long i = 0; i < static_cast<long long>(n); ++i) {
    const auto [ep, s] = slots[static_cast<std::size_t>(i)];
    try {
      const Observation* obs = ep->observation_at(s);
      if (!obs) throw std::invalid_argument("missing observation at tick " + std::to_string(s));
      const auto x = policy_features(perception.pooled(*obs), ep->frames[static_cast<std::size_t>(std::max<Tick>(s - 1, 0))]);
      std::copy(x.begin(), x.end(), data.x.begin() + static_cast<std::ptrdiff_t>(i * data.feature_dim));
      const ActionChunk chunk = slice_chunk(*ep, s, k);
      for (std::size_t a = 0; a < k; ++a)
        for (std::size_t dd = 0; dd < kActionDim; ++dd)
          data.y[i * data.target_dim + a * kActionDim + dd] = chunk.actions[a][dd];
    } catch (const std::exception& e) {
      errors[static_cast<std::size_t>(i)] = e.what();
    }
  }
  for (const auto& e : errors) {
    if (!e.empty()) throw std::invalid_argument(e);
  }
  return data;
}

LinearChunkPolicy::LinearChunkPolicy(LinearModel model, PerceptionConfig perception)
    : ChunkPolicy(model.k), model_(std::move(model)), perception_(perception) {
  if (model_.feature_dim != kLearnedFeatureDim) {
    throw std::invalid_argument("learned policy expects " + std::to_string(kLearnedFeatureDim) + " features");
  }
  if (!model_.finite()) throw std::invalid_argument("learned policy has non-finite weights");
}

ActionChunk LinearChunkPolicy::do_predict(const PolicyQuery& query) const {
  if (!query.scene) throw std::invalid_argument("query without scene");
  const Tick s = std::max<Tick>(query.observation_tick, 0);
  std::vector<double> pooled;
  {
    std::lock_guard lock(cache_mutex_);
    if (cached_scene_ != query.scene) {
      cache_.clear();
      cached_scene_ = query.scene;
    }
    auto it = cache_.find(s);
    if (it != cache_.end()) pooled = it->second;
  }
  if (pooled.empty()) {
    const Observation* obs = query.scene->observation_at(s);
    if (!obs) throw std::runtime_error("no observation at tick " + std::to_string(s));
    pooled = perception_.pooled(*obs);
    std::lock_guard lock(cache_mutex_);
    cache_[s] = pooled;
  }
  const auto y = model_.apply(policy_features(pooled, query.previous));
  ActionChunk chunk;
  chunk.origin_tick = query.observation_tick;
  chunk.actions.resize(model_.k);
  for (std::size_t a = 0; a < model_.k; ++a)
    for (std::size_t d = 0; d < kActionDim; ++d) chunk.actions[a][d] = static_cast<float>(y[a * kActionDim + d]);
  return chunk;
}

// ---------------------------------------------------------------------------
// Sidecar

namespace {
constexpr std::uint16_t kPolicyVersion = 1;
constexpr std::size_t kPolicyHeaderBytes = 12;
}  // namespace

std::vector<std::byte> encode_policy(const LinearModel& model) {
  if (model.k == 0 || model.k > 0xffff) throw std::invalid_argument("k does not fit the sidecar");
  if (model.weights.size() != model.output_dim() * model.feature_dim || model.bias.size() != model.output_dim()) {
    throw std::invalid_argument("model buffers do not match k and feature_dim");
  }
  std::vector<std::byte> out;
  detail::ByteWriter w(out);
  w.tag("FABP");
  w.put<std::uint16_t>(kPolicyVersion);
  w.put<std::uint16_t>(static_cast<std::uint16_t>(model.k));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(model.feature_dim));
  for (double v : model.weights) w.put<float>(static_cast<float>(v));
  for (double v : model.bias) w.put<float>(static_cast<float>(v));
  return out;
}

LinearModel decode_policy(std::span<const std::byte> bytes) {
  detail::ByteReader in(bytes);
  if (!in.has(kPolicyHeaderBytes)) throw TruncatedError(kPolicyHeaderBytes, bytes.size());
  if (in.take_string(4) != "FABP") throw BadMagicError("bad magic: not a policy sidecar");
  const auto version = in.get<std::uint16_t>();
  if (version != kPolicyVersion) {
    throw UnsupportedVersionError("unsupported policy version " + std::to_string(version));
  }
  const auto k = in.get<std::uint16_t>();
  const auto f = in.get<std::uint32_t>();
  if (k == 0 || f == 0) throw InvalidValueError("policy k and F must be >= 1");
  LinearModel model = make_zero_model(k, f);
  const std::size_t expected = kPolicyHeaderBytes + (model.weights.size() + model.bias.size()) * sizeof(float);
  if (bytes.size() < expected) throw TruncatedError(expected, bytes.size());
  for (double& v : model.weights) v = in.get<float>();
  for (double& v : model.bias) v = in.get<float>();
  if (!model.finite()) throw InvalidValueError("non-finite policy weight");
  return model;
}

void write_policy(const LinearModel& model, const std::filesystem::path& path) {
  write_file_bytes(path, encode_policy(model));
}

LinearModel read_policy(const std::filesystem::path& path) { return decode_policy(read_file_bytes(path)); }

}  // namespace fabg
