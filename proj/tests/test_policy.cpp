#include <cmath>
#include <filesystem>
#include <memory>
#include <vector>

#include "doctest.h"
#include "fabg/episode_io.hpp"
#include "fabg/policy.hpp"
#include "test_util.hpp"

using namespace fabg;

namespace {

OracleSpec oracle_for(const Episode& ep, double sigma, std::uint64_t seed = 0) {
  OracleSpec s;
  s.source = std::make_shared<Episode>(ep);
  s.noise_sigma = sigma;
  s.seed = seed;
  return s;
}

Dataset random_dataset(Rng& rng, std::size_t n, std::size_t f, std::size_t k) {
  Dataset d;
  d.feature_dim = f;
  d.target_dim = k * kActionDim;
  std::vector<double> x(f), y(d.target_dim);
  for (std::size_t s = 0; s < n; ++s) {
    for (auto& v : x) v = rng.normal();
    for (auto& v : y) v = rng.uniform();
    d.add(x, y);
  }
  return d;
}

LinearModel random_model(Rng& rng, std::size_t k, std::size_t f) {
  auto m = make_zero_model(k, f);
  for (auto& w : m.weights) w = 0.1 * rng.normal();
  for (auto& b : m.bias) b = 0.1 * rng.normal();
  return m;
}

}  // namespace

TEST_CASE("zero-noise oracle equals slice_chunk") {
  const auto ep = testutil::ramp_episode(30, 0.03);
  const auto spec = oracle_for(ep, 0.0);
  for (Tick t : {0, 5, 27, 29}) CHECK(oracle_predict(spec, t, 6).actions == slice_chunk(ep, t, 6).actions);
  // before the scene starts: the initial frame at rest
  const auto pre = oracle_predict(spec, -3, 4);
  for (const auto& f : pre.actions) CHECK(f == ep.frames[0]);
  CHECK_THROWS_AS(oracle_predict(spec, 30, 4), std::out_of_range);
}

TEST_CASE("oracle foresight") {
  const auto ep = testutil::ramp_episode(30, 0.03);
  auto spec = oracle_for(ep, 0.0);
  spec.foresight = 2;
  const auto c = oracle_predict(spec, 10, 5);
  CHECK(c.actions[0] == ep.frames[10]);
  CHECK(c.actions[2] == ep.frames[12]);
  CHECK(c.actions[4] == ep.frames[12]);
  spec.foresight = 0;
  for (const auto& f : oracle_predict(spec, 10, 5).actions) CHECK(f == ep.frames[10]);
  spec.foresight = -1;
  CHECK_THROWS(validate_oracle_spec(spec));
}

TEST_CASE("oracle noise is deterministic and has the requested spread") {
  const auto ep = testutil::scalar_episode(std::vector<double>(5, 0.5));
  const auto a = oracle_predict(oracle_for(ep, 0.05, 7), 2, 3);
  const auto b = oracle_predict(oracle_for(ep, 0.05, 7), 2, 3);
  CHECK(a == b);
  CHECK(a != oracle_predict(oracle_for(ep, 0.05, 8), 2, 3));

  double sum = 0.0, sq = 0.0;
  int n = 0;
  for (std::uint64_t seed = 0; seed < 4000; ++seed) {
    const auto c = oracle_predict(oracle_for(ep, 0.05, seed), 1, 1);
    const double e = c.actions[0][kJawOpen] - 0.5;
    sum += e;
    sq += e * e;
    ++n;
  }
  const double mean = sum / n;
  const double sd = std::sqrt(sq / n - mean * mean);
  CHECK(std::abs(sd - 0.05) < 0.05 * 0.05);
  CHECK(std::abs(mean) < 0.005);
}

TEST_CASE("predict clamps and checks the chunk length") {
  auto ep = testutil::scalar_episode(std::vector<double>(4, 1.0));
  OraclePolicy p(oracle_for(ep, 0.5, 1), 4);
  PolicyQuery q;
  q.query_tick = 0;
  q.observation_tick = 0;
  q.scene = &ep;
  const auto c = p.predict(q);
  REQUIRE(c.size() == 4);
  for (const auto& f : c.actions) CHECK(is_valid_frame(f));
}

TEST_CASE("central difference error scales with epsilon squared") {
  const auto cube = [](double x) { return x * x * x; };
  const double x = 0.7, exact = 3.0 * x * x;
  const double e1 = std::abs(central_difference(cube, x, 1e-2) - exact);
  const double e2 = std::abs(central_difference(cube, x, 2e-2) - exact);
  CHECK(e2 / e1 == doctest::Approx(4.0).epsilon(1e-4));
}

TEST_CASE("analytic gradient matches finite differences") {
  Rng rng(11);
  const auto data = random_dataset(rng, 6, 4, 1);
  const auto model = random_model(rng, 1, 4);
  CHECK(policy_gradient_check(data, model, 1e-5) < 1e-5);
  CHECK(policy_gradient_check(data, model, 1e-5, 0.3) < 1e-5);
  CHECK_THROWS_AS(policy_gradient_check(data, model, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(policy_gradient_check(data, model, 0.1), std::invalid_argument);
}

TEST_CASE("gradient at the optimum is zero") {
  // single sample, target equals the bias, zero weights
  Dataset d;
  d.feature_dim = 2;
  d.target_dim = kActionDim;
  std::vector<double> y(kActionDim, 0.25);
  d.add(std::vector<double>{1.0, -2.0}, y);
  auto m = make_zero_model(1, 2);
  m.bias = y;
  const auto lg = loss_and_gradient(m, d, 0.0);
  CHECK(lg.loss == 0.0);
  for (double g : lg.grad_w) CHECK(g == 0.0);
  for (double g : lg.grad_b) CHECK(g == 0.0);
}

TEST_CASE("constant target converges") {
  Rng rng(12);
  auto data = random_dataset(rng, 40, 8, 1);
  for (auto& v : data.y) v = 0.3;
  const auto m = train_linear_policy(data, 1, TrainOptions{});
  CHECK(loss_and_gradient(m, data, 0.0).loss < 1e-6);
}

TEST_CASE("single sample is fit exactly") {
  Rng rng(13);
  const auto data = random_dataset(rng, 1, 5, 2);
  const auto m = train_linear_policy(data, 2, TrainOptions{});
  CHECK(loss_and_gradient(m, data, 0.0).loss <= 1e-8);
}

TEST_CASE("training loss decreases and ridge shrinks weights") {
  Rng rng(14);
  Dataset data;
  data.feature_dim = 6;
  data.target_dim = kActionDim;
  for (int s = 0; s < 60; ++s) {
    std::vector<double> x(6), y(kActionDim, 0.0);
    for (auto& v : x) v = rng.normal();
    y[kJawOpen] = 0.5 + 0.1 * x[0] - 0.05 * x[3];
    data.add(x, y);
  }
  TrainOptions o;
  o.learning_rate = 0.05;
  o.epochs = 300;
  const auto free = train_linear_policy(data, 1, o);
  for (std::size_t i = 1; i < free.info.loss_history.size(); ++i) {
    CHECK(free.info.loss_history[i] <= free.info.loss_history[i - 1] + 1e-15);
  }
  CHECK(free.info.final_loss < 1e-8);
  CHECK(free.weights[kJawOpen * 6 + 0] == doctest::Approx(0.1).epsilon(1e-3));

  // ridge acts on the standardized weights: about 1 / (1 + lambda) of the fit
  o.lambda = 50.0;
  o.learning_rate = 0.01;
  const auto ridge = train_linear_policy(data, 1, o);
  const auto norm = [](const LinearModel& m) {
    double s = 0.0;
    for (double w : m.weights) s += w * w;
    return std::sqrt(s);
  };
  CHECK(norm(ridge) < 0.05 * norm(free));
  o.lambda = -1.0;
  CHECK_THROWS_AS(train_linear_policy(data, 1, o), std::invalid_argument);
}

TEST_CASE("divergence is reported") {
  Rng rng(15);
  auto data = random_dataset(rng, 20, 4, 1);
  TrainOptions o;
  o.learning_rate = 1e3;
  o.epochs = 2000;
  CHECK_THROWS_AS(train_linear_policy(data, 1, o), TrainingDiverged);
}

TEST_CASE("policy sidecar round trip and errors") {
  Rng rng(16);
  auto m = random_model(rng, 2, 3);
  for (auto& w : m.weights) w = static_cast<float>(w);
  for (auto& b : m.bias) b = static_cast<float>(b);
  const auto path = std::filesystem::temp_directory_path() / "fabg_test_policy.fabp";
  write_policy(m, path);
  const auto back = read_policy(path);
  CHECK(back.k == 2);
  CHECK(back.feature_dim == 3);
  CHECK(back.weights == m.weights);
  CHECK(back.bias == m.bias);
  std::filesystem::remove(path);

  auto bytes = encode_policy(m);
  CHECK(bytes.size() == 12 + 4 * (m.weights.size() + m.bias.size()));
  auto bad = bytes;
  bad[0] = std::byte{'Z'};
  CHECK_THROWS_AS(decode_policy(bad), BadMagicError);
  bad = bytes;
  bad.resize(bad.size() - 1);
  CHECK_THROWS_AS(decode_policy(bad), TruncatedError);
  bad = bytes;
  bad[4] = std::byte{2};
  CHECK_THROWS_AS(decode_policy(bad), UnsupportedVersionError);
}

TEST_CASE("chunk mse against the zero baseline") {
  Rng rng(17);
  const auto data = random_dataset(rng, 10, 3, 1);
  const auto zero = make_zero_model(1, 3);
  CHECK(chunk_mse(zero, data) == doctest::Approx(zero_baseline_mse(data)));
  auto fitted = train_linear_policy(data, 1, TrainOptions{});
  CHECK(chunk_mse(fitted, data) < zero_baseline_mse(data));
}

TEST_CASE("policy features layout") {
  std::vector<double> pooled(kFusedFeatureChannels, 0.5);
  ActionFrame prev;
  prev[3] = 0.25f;
  const auto f = policy_features(pooled, prev);
  CHECK(f.size() == kLearnedFeatureDim);
  CHECK(f[0] == 0.5);
  CHECK(f[kFusedFeatureChannels + 3] == 0.25);
}
