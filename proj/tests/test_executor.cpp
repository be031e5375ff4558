#include <cmath>
#include <filesystem>
#include <memory>

#include "doctest.h"
#include "fabg/executor.hpp"
#include "fabg/scenario.hpp"
#include "test_util.hpp"

using namespace fabg;

namespace {

std::shared_ptr<OraclePolicy> perfect_oracle(const Episode& ep, std::size_t k, std::optional<int> foresight = {}) {
  OracleSpec s;
  s.source = std::make_shared<Episode>(ep);
  s.foresight = foresight;
  return std::make_shared<OraclePolicy>(s, k);
}

// Every chunk is a constant frame whose jawOpen is the query tick's parity.
class ParityPolicy final : public ChunkPolicy {
 public:
  using ChunkPolicy::ChunkPolicy;

 protected:
  ActionChunk do_predict(const PolicyQuery& q) const override {
    ActionFrame f;
    f[kJawOpen] = static_cast<float>(q.query_tick & 1);
    ActionChunk c;
    c.origin_tick = q.query_tick;
    c.actions.assign(chunk_length(), f);
    return c;
  }
};

class ThrowingPolicy final : public ChunkPolicy {
 public:
  using ChunkPolicy::ChunkPolicy;

 protected:
  ActionChunk do_predict(const PolicyQuery& q) const override {
    if (q.query_tick == 7) throw std::runtime_error("boom");
    ActionChunk c;
    c.actions.assign(chunk_length(), ActionFrame{});
    return c;
  }
};

}  // namespace

TEST_CASE("strategy names and validation") {
  CHECK(parse_strategy_kind("pdlc") == StrategyKind::kPDLC);
  CHECK(parse_strategy_kind("NoTE") == StrategyKind::kNoTE);
  CHECK_THROWS_AS(parse_strategy_kind("ensemble"), std::invalid_argument);
  StrategyConfig c{StrategyKind::kPDLC, 20, 0.1, 3};
  CHECK(c.label() == "PDLC(k=20,n=3)");
  c.pdlc_offset = 20;
  CHECK_THROWS_AS(validate_strategy(c), std::invalid_argument);
  c = StrategyConfig{StrategyKind::kTE, 0, 0.1, 0};
  CHECK_THROWS_AS(validate_strategy(c), std::invalid_argument);
}

TEST_CASE("NoTE with zero latency tiles the demonstration exactly") {
  const auto ep = testutil::ramp_episode(47, 0.02);
  const auto p = perfect_oracle(ep, 10);
  const auto tr = run_no_te(*p, ep, LatencyModel{}, 10);
  CHECK(tr.commanded == ep.frames);
  CHECK(tr.query_ticks == std::vector<Tick>{0, 10, 20, 30, 40});
  CHECK(tr.chunk_boundaries == tr.query_ticks);
}

TEST_CASE("NoTE holds the initial frame until the first chunk arrives") {
  auto ep = testutil::scalar_episode(std::vector<double>(20, 0.6));
  ep.frames[0][kJawOpen] = 0.1f;
  const auto p = perfect_oracle(ep, 5);
  const auto tr = run_no_te(*p, ep, LatencyModel{0, 1, 1}, 5);
  CHECK(tr.commanded[0] == ep.frames[0]);
  CHECK(tr.commanded[1] == ep.frames[0]);
  CHECK(tr.commanded[2] == ep.frames[0]);  // chunk from query 0 arrives: actions[0] = frame 0
  CHECK(tr.commanded[3][kJawOpen] == doctest::Approx(0.6));
  CHECK(tr.chunk_boundaries.front() == 2);
}

TEST_CASE("stale observation under NoTE gives a sawtooth error") {
  const auto ep = testutil::ramp_episode(60, 0.01);
  const auto p = perfect_oracle(ep, 15, 0);
  const auto tr = run_no_te(*p, ep, LatencyModel{2, 0, 0}, 15);
  for (Tick t = 15; t < 60; ++t) {
    const int phase = static_cast<int>(t % 15);
    // chunk queried at the boundary holds frame (boundary - 2)
    const double err = ep.frames[t][kJawOpen] - tr.commanded[t][kJawOpen];
    CHECK(err == doctest::Approx(0.01 * (phase + 2)).epsilon(1e-5));
  }
}

TEST_CASE("TE weights") {
  const auto ep = testutil::scalar_episode(std::vector<double>(8, 0.0));
  ParityPolicy p(2);
  SUBCASE("m = 0 averages evenly") {
    const auto tr = run_te(p, ep, LatencyModel{}, 2, 0.0);
    for (Tick t = 1; t < 8; ++t) CHECK(tr.commanded[t][kJawOpen] == doctest::Approx(0.5));
    CHECK(tr.contributors[3] == 2);
  }
  SUBCASE("m = ln 2 weights the oldest most") {
    const auto tr = run_te(p, ep, LatencyModel{}, 2, std::log(2.0));
    // odd t: oldest (t-1) predicts 0, newest 1 -> 0.5 / 1.5
    CHECK(tr.commanded[3][kJawOpen] == doctest::Approx(1.0 / 3.0));
    CHECK(tr.commanded[4][kJawOpen] == doctest::Approx(2.0 / 3.0));
    CHECK(tr.envelope_lo[3][kJawOpen] == 0.0f);
    CHECK(tr.envelope_hi[3][kJawOpen] == 1.0f);
  }
}

TEST_CASE("TE stays inside the envelope of its contributors") {
  const auto ep = generate(testutil::spec(ScenarioKind::kRapidCycle, 200));
  OracleSpec s;
  s.source = std::make_shared<Episode>(ep);
  s.noise_sigma = 0.05;
  s.seed = 3;
  OraclePolicy p(s, 20);
  const auto tr = run_te(p, ep, LatencyModel{1, 1, 1}, 20, 0.1);
  for (std::size_t t = 0; t < tr.size(); ++t) {
    for (std::size_t d = 0; d < kActionDim; ++d) {
      CHECK(tr.commanded[t][d] >= tr.envelope_lo[t][d]);
      CHECK(tr.commanded[t][d] <= tr.envelope_hi[t][d]);
    }
  }
}

TEST_CASE("PDLC with n = L reproduces the demonstration") {
  for (auto kind : {ScenarioKind::kStep, ScenarioKind::kRapidCycle, ScenarioKind::kTrackingSine}) {
    const auto ep = generate(testutil::spec(kind, 90));
    for (LatencyModel l : {LatencyModel{0, 0, 0}, LatencyModel{1, 1, 1}, LatencyModel{2, 2, 1}}) {
      const auto p = perfect_oracle(ep, 20);
      const auto tr = run_pdlc(*p, ep, l, 20, l.total());
      CHECK(tr.commanded == ep.frames);
    }
  }
}

TEST_CASE("PDLC with n = 0 shifts by the full delay") {
  const auto ep = generate(testutil::spec(ScenarioKind::kRapidCycle, 60));
  const auto p = perfect_oracle(ep, 20);
  const auto tr = run_pdlc(*p, ep, LatencyModel{1, 1, 1}, 20, 0);
  for (Tick t = 0; t < 60; ++t) CHECK(tr.commanded[t] == ep.frames[std::max<Tick>(t - 3, 0)]);
}

TEST_CASE("query cadence") {
  const auto ep = testutil::ramp_episode(53);
  const auto p = perfect_oracle(ep, 10);
  const LatencyModel l{1, 1, 0};
  CHECK(run_no_te(*p, ep, l, 10).query_ticks.size() == 6);  // ceil(53 / 10)
  CHECK(run_te(*p, ep, l, 10, 0.1).query_ticks.size() == 53);
  CHECK(run_pdlc(*p, ep, l, 10, 2).query_ticks.size() == 53);
}

TEST_CASE("policy errors carry the tick") {
  const auto ep = testutil::ramp_episode(20);
  ThrowingPolicy p(4);
  try {
    run_pdlc(p, ep, LatencyModel{}, 4, 0);
    FAIL("expected PolicyFailure");
  } catch (const PolicyFailure& e) {
    CHECK(e.tick() == 7);
  }
}

TEST_CASE("compute_offset") {
  CHECK(compute_offset(LatencyModel{}, 30.0) == 0);
  CHECK(compute_offset(LatencyModel{1, 2, 3}, 30.0) == 6);
  OffsetSources only_inference{false, true, false};
  CHECK(compute_offset(LatencyModel{1, 2, 3}, 30.0, only_inference) == 2);
  CHECK(compute_offset(LatencySeconds{0.05, 0.03, 0.02}, 30.0) == 3);  // 100 ms
  CHECK(compute_offset(LatencySeconds{0.049, 0.0, 0.0}, 30.0) == 1);   // 1.47 ticks
  CHECK(compute_offset(LatencySeconds{0.05, 0.0, 0.0}, 30.0) == 2);    // 1.5 rounds up
  CHECK_THROWS(compute_offset(LatencyModel{}, 0.0));
  const auto l = latency_from_seconds(LatencySeconds{0.05, 0.03, 0.02}, 30.0);
  CHECK(l == LatencyModel{2, 1, 1});
}

TEST_CASE("PWM mapping") {
  const auto m = default_pwm_mapping();
  ActionFrame rest;
  const auto p0 = map_to_pwm(rest, m);
  CHECK(pwm_channel_name(13) == "jaw_open");
  CHECK(p0[13] == 1000.0);
  CHECK(p0[24] == 1500.0);
  ActionFrame f;
  f[kJawOpen] = 0.5f;
  f[kHeadYaw] = static_cast<float>(kPi / 4);
  const auto p = map_to_pwm(f, m);
  CHECK(p[13] == doctest::Approx(1500.0));
  CHECK(p[24] == doctest::Approx(1750.0).epsilon(1e-6));
  f[kHeadYaw] = static_cast<float>(kPi);
  CHECK(map_to_pwm(f, m)[24] == 2000.0);
}

TEST_CASE("trace CSV round trip") {
  const auto ep = generate(testutil::spec(ScenarioKind::kTrackingSine, 30));
  const auto p = perfect_oracle(ep, 5);
  const auto tr = run_no_te(*p, ep, LatencyModel{0, 1, 0}, 5);
  const auto path = std::filesystem::temp_directory_path() / "fabg_test_trace.csv";
  write_trace_csv(tr, path);
  const auto back = read_trace_csv(path, tr.rate_hz);
  CHECK(back.commanded == tr.commanded);
  CHECK(back.query_ticks == tr.query_ticks);
  CHECK(back.chunk_boundaries == tr.chunk_boundaries);
  std::filesystem::remove(path);
}
