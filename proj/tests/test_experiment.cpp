#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "fabg/experiment.hpp"

using namespace fabg;
namespace fs = std::filesystem;

namespace {

nlohmann::json small_config() {
  return nlohmann::json::parse(R"({
    "seed": 3,
    "trials": 5,
    "scenarios": [{"kind": "rapid_cycle", "duration_ticks": 60}],
    "strategies": [
      {"kind": "NoTE", "k": 10},
      {"kind": "TE", "k": 10, "m": 0.1},
      {"kind": "PDLC", "k": 10, "n": "auto"}
    ],
    "latencies": [{"perception": 1, "inference": 1, "communication": 1}],
    "policy": {"type": "oracle", "noise_sigma": 0.05, "foresight": "latency"}
  })");
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("fabg_test_" + name);
  fs::remove_all(dir);
  return dir;
}

}  // namespace

TEST_CASE("config parsing") {
  const auto c = parse_experiment_config(small_config());
  CHECK(c.trials == 5);
  CHECK(c.seed == 3);
  REQUIRE(c.strategies.size() == 3);
  CHECK(c.strategies[2].auto_offset);
  const auto resolved = c.strategies[2].resolve(c.latencies[0].resolve(30.0), 30.0);
  CHECK(resolved.pdlc_offset == 3);
  CHECK(latency_label(c.latencies[0].resolve(30.0)) == "p1_i1_c1");
}

TEST_CASE("config errors carry a JSON path") {
  auto j = small_config();
  j["strategies"][2]["n"] = 10;  // n == k
  try {
    parse_experiment_config(j);
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.path()) == "$.strategies[2].n");
  }

  j = small_config();
  j["trials"] = 0;
  CHECK_THROWS_AS(parse_experiment_config(j), ConfigError);

  j = small_config();
  j["surprise"] = true;
  CHECK_THROWS_AS(parse_experiment_config(j), ConfigError);

  j = small_config();
  j["latencies"][0] = {{"unit", "seconds"}, {"perception", 0.05}};
  const auto c = parse_experiment_config(j);
  CHECK(c.latencies[0].resolve(30.0) == LatencyModel{2, 0, 0});
}

TEST_CASE("run produces one row per cell, deterministically") {
  const auto config = parse_experiment_config(small_config());
  const auto a_dir = scratch("run_a"), b_dir = scratch("run_b");
  const auto a = run_experiment(config, a_dir);
  CHECK_FALSE(a.failed());
  CHECK(a.rows.size() == 15);
  CHECK(a.rows[0].strategy == "NoTE");
  CHECK(a.rows[5].strategy == "TE");
  CHECK(a.rows[14].seed == 3 + 14);
  CHECK(fs::exists(a_dir / "summary.csv"));
  CHECK(fs::exists(a_dir / "report.json"));
  CHECK(fs::exists(a_dir / "traces" / "cell_0000.csv"));

  RunOptions one_thread;
  one_thread.jobs = 1;
  run_experiment(config, b_dir, one_thread);
  CHECK(slurp(a_dir / "summary.csv") == slurp(b_dir / "summary.csv"));

  const auto rows = read_summary_csv(a_dir / "summary.csv");
  REQUIRE(rows.size() == 15);
  CHECK(rows[7].label == a.rows[7].label);
  CHECK(rows[7].metrics.dtw == doctest::Approx(a.rows[7].metrics.dtw).epsilon(1e-8));
  fs::remove_all(a_dir);
  fs::remove_all(b_dir);
}

TEST_CASE("percent reduction rounding") {
  CHECK(percent_reduction(22.95, 8.82).value() == 61.6);
  CHECK(percent_reduction(44.01, 8.82).value() == 80.0);  // 79.96 at one decimal
  CHECK(percent_reduction(10.0, 5.0).value() == 50.0);
  CHECK_FALSE(percent_reduction(0.0, 1.0).has_value());
}

TEST_CASE("compare_metric orderings") {
  const std::vector<std::string> dtw_order{"PDLC", "NoTE", "TE"};
  const auto ok = compare_metric("dtw", 8.82, 22.95, 44.01, dtw_order);
  CHECK(ok.matches);
  CHECK_FALSE(ok.tie);
  CHECK_FALSE(ok.contradiction);
  CHECK(ok.reduction_vs_note.value() == 61.6);

  const auto tie = compare_metric("dtw", 8.82, 22.95, 22.95, dtw_order);
  CHECK(tie.tie);
  CHECK_FALSE(tie.matches);

  const auto flipped = compare_metric("dtw", 8.82, 44.01, 22.95, dtw_order);
  CHECK(flipped.contradiction);
  CHECK_FALSE(flipped.matches);

  const auto missing = compare_metric("response_latency_s", std::nullopt, 0.3, 0.2, {"PDLC", "TE", "NoTE"});
  CHECK_FALSE(missing.comparable);
}

TEST_CASE("compare_strategies needs all three kinds") {
  const auto config = parse_experiment_config(small_config());
  const auto dir = scratch("cmp");
  const auto r = run_experiment(config, dir);
  auto rows = r.rows;
  const auto groups = compare_strategies(rows);
  REQUIRE(groups.size() == 1);
  CHECK(groups[0].metrics.size() == 3);
  CHECK(groups[0].metrics[0].matches);  // dtw: PDLC < NoTE < TE on rapid_cycle
  rows.erase(std::remove_if(rows.begin(), rows.end(), [](const SummaryRow& s) { return s.strategy == "TE"; }),
             rows.end());
  CHECK_THROWS_AS(compare_strategies(rows), MissingStrategyError);
  fs::remove_all(dir);
}
