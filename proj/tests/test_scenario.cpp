#include <cmath>

#include "doctest.h"
#include "fabg/json_util.hpp"
#include "fabg/scenario.hpp"
#include "test_util.hpp"

using namespace fabg;

TEST_CASE("names round trip") {
  for (auto k : {ScenarioKind::kStep, ScenarioKind::kSustainedOpen, ScenarioKind::kRapidCycle,
                 ScenarioKind::kTrackingSine, ScenarioKind::kGestureSwitch}) {
    CHECK(parse_scenario_kind(scenario_name(k)) == k);
  }
  CHECK_THROWS(parse_scenario_kind("wave"));
  CHECK(is_cyclic(ScenarioKind::kRapidCycle));
  CHECK_FALSE(is_cyclic(ScenarioKind::kStep));
}

TEST_CASE("step profile has exactly two discontinuities") {
  const auto ep = generate(testutil::spec(ScenarioKind::kStep, 120));
  REQUIRE(ep.size() == 120);
  CHECK(ep.frames[29][kJawOpen] == 0.0f);
  CHECK(ep.frames[30][kJawOpen] == 1.0f);
  CHECK(ep.frames[89][kJawOpen] == 1.0f);
  CHECK(ep.frames[90][kJawOpen] == 0.0f);
  int jumps = 0;
  for (std::size_t t = 1; t < ep.size(); ++t) jumps += ep.frames[t][kJawOpen] != ep.frames[t - 1][kJawOpen];
  CHECK(jumps == 2);
  for (const auto& f : ep.frames)
    for (std::size_t d = 0; d < kActionDim; ++d)
      if (d != kJawOpen) CHECK(f[d] == 0.0f);
  const auto s = stimulus_for(testutil::spec(ScenarioKind::kStep, 120));
  CHECK(s.onset == 30);
  CHECK(s.dim == kJawOpen);
}

TEST_CASE("cyclic profiles repeat with their period") {
  for (auto kind : {ScenarioKind::kRapidCycle, ScenarioKind::kTrackingSine}) {
    ScenarioSpec spec = testutil::spec(kind, 100);
    spec.period_ticks = 10;
    const auto ep = generate(spec);
    const auto dim = spec.driven_dim();
    for (std::size_t t = 0; t + 10 < ep.size(); ++t) {
      CHECK(ep.frames[t][dim] == doctest::Approx(ep.frames[t + 10][dim]).epsilon(1e-6));
    }
  }
  ScenarioSpec rc = testutil::spec(ScenarioKind::kRapidCycle, 20);
  const auto ep = generate(rc);
  CHECK(ep.frames[0][kJawOpen] == 0.0f);
  CHECK(ep.frames[5][kJawOpen] == 1.0f);
  CHECK(testutil::spec(ScenarioKind::kTrackingSine).driven_dim() == kHeadYaw);
}

TEST_CASE("sustained_open rises smoothly and holds") {
  const auto ep = generate(testutil::spec(ScenarioKind::kSustainedOpen, 120));
  CHECK(ep.frames[0][kJawOpen] == 0.0f);
  CHECK(ep.frames[60][kJawOpen] == 1.0f);
  for (std::size_t t = 1; t < ep.size(); ++t) {
    CHECK(std::abs(ep.frames[t][kJawOpen] - ep.frames[t - 1][kJawOpen]) < 0.2f);
  }
}

TEST_CASE("gesture_switch is seeded and valid") {
  ScenarioSpec spec = testutil::spec(ScenarioKind::kGestureSwitch, 150);
  spec.seed = 4;
  const auto a = generate(spec), b = generate(spec);
  CHECK(a == b);
  spec.seed = 5;
  CHECK(generate(spec) != a);
  validate_episode(a);
}

TEST_CASE("scenario validation") {
  ScenarioSpec s = testutil::spec(ScenarioKind::kStep, 0);
  CHECK_THROWS_AS(validate_scenario(s), std::invalid_argument);
  s = testutil::spec(ScenarioKind::kTrackingSine);
  s.target_dim = kJawOpen;
  CHECK_THROWS_AS(validate_scenario(s), std::invalid_argument);
  s = testutil::spec(ScenarioKind::kStep);
  s.amplitude = 1.5;
  CHECK_THROWS_AS(validate_scenario(s), std::invalid_argument);
}

TEST_CASE("scenario JSON") {
  const auto j = nlohmann::json::parse(R"({"kind":"rapid_cycle","duration_ticks":50,"target_dim":"jawOpen"})");
  const auto s = scenario_from_json(j);
  CHECK(s.kind == ScenarioKind::kRapidCycle);
  CHECK(s.duration_ticks == 50);
  CHECK(s.driven_dim() == kJawOpen);
  const auto back = scenario_from_json(to_json(s));
  CHECK(generate(back) == generate(s));
  try {
    scenario_from_json(nlohmann::json::parse(R"({"kind":"step","bogus":1})"), "$.scenarios[0]");
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.path()).find("$.scenarios[0]") == 0);
  }
}

TEST_CASE("corpus is deterministic and carries observations on request") {
  std::vector<ScenarioSpec> specs;
  for (int i = 0; i < 3; ++i) {
    ScenarioSpec s = testutil::spec(ScenarioKind::kStep, 12);
    s.seed = static_cast<std::uint64_t>(i);
    specs.push_back(s);
  }
  CorpusOptions plain;
  const auto a = build_corpus(specs, plain);
  CHECK(a == build_corpus(specs, plain));
  CHECK_FALSE(a[0].has_observations());
  CHECK(a[0] != a[1]);  // jitter differs per seed

  CorpusOptions obs;
  obs.observations = true;
  obs.obs_height = 36;
  obs.obs_width = 48;
  const auto b = build_corpus(specs, obs);
  REQUIRE(b[0].has_observations());
  const auto* o = b[0].observation_at(5);
  REQUIRE(o != nullptr);
  CHECK(o->height == 36);
  CHECK(o->tick == 5);
  validate_observation(*o);
  CHECK(b == build_corpus(specs, obs));
}
