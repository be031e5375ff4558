#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "fabg/depth_pipeline.hpp"
#include "fabg/executor.hpp"
#include "fabg/json_util.hpp"
#include "fabg/metrics.hpp"
#include "fabg/policy.hpp"
#include "fabg/scenario.hpp"

namespace fabg {

/// A latency model given in ticks, or in seconds converted per scenario
/// rate (each source rounded half-up).
struct LatencyEntry {
  std::optional<LatencyModel> ticks;
  std::optional<LatencySeconds> seconds;

  LatencyModel resolve(double rate_hz) const;
};

/// "p1_i1_c1"
std::string latency_label(const LatencyModel& latency);

struct StrategyEntry {
  StrategyConfig config;
  bool auto_offset = false;  // PDLC n = compute_offset(latency)
  OffsetSources sources;

  StrategyConfig resolve(const LatencyModel& latency, double rate_hz) const;
};

enum class PolicyType { kOracle, kLearned };
enum class ForesightMode { kUnlimited, kLatency, kFixed };

struct PolicyChoice {
  PolicyType type = PolicyType::kOracle;
  // oracle
  double noise_sigma = 0.0;
  ForesightMode foresight = ForesightMode::kUnlimited;
  int foresight_ticks = 0;
  // learned
  int train_episodes = 50;
  std::size_t stride = 2;
  TrainOptions train;
  CorpusOptions corpus;
  PerceptionConfig perception;
};

struct ExperimentConfig {
  std::vector<ScenarioSpec> scenarios;
  std::vector<StrategyEntry> strategies;
  std::vector<LatencyEntry> latencies;
  PolicyChoice policy;
  MetricOptions metrics;
  ExecutorOptions executor;
  int trials = 5;
  std::uint64_t seed = 0;
  bool write_traces = true;
  std::optional<std::string> output_dir;
};

/// Throws ConfigError with the JSON path of the offending entry.
ExperimentConfig parse_experiment_config(const nlohmann::json& j);
ExperimentConfig load_experiment_config(const std::filesystem::path& path);

/// One row of summary.csv.
struct SummaryRow {
  std::size_t cell = 0;
  std::size_t scenario_index = 0;
  std::string scenario;
  std::size_t strategy_index = 0;
  std::string strategy;  // NoTE, TE, PDLC
  std::string label;     // e.g. PDLC(k=20,n=3)
  std::size_t latency_index = 0;
  std::string latency;
  int trial = 0;
  std::uint64_t seed = 0;
  bool ok = true;
  MetricReport metrics;
};

std::string summary_csv_header();
std::string summary_csv_row(const SummaryRow& row);
std::vector<SummaryRow> read_summary_csv(const std::filesystem::path& path);

/// One metric compared across the three strategies.
struct MetricComparison {
  std::string metric;
  std::optional<double> pdlc, note, te;  // means; nullopt when no trial detected
  std::string expected;                  // e.g. "PDLC < NoTE < TE"
  std::string observed;                  // e.g. "PDLC < TE = NoTE"
  bool comparable = true;
  bool matches = false;
  bool tie = false;
  bool contradiction = false;
  std::optional<double> reduction_vs_note;  // percent, one decimal
  std::optional<double> reduction_vs_te;
};

/// (baseline - pdlc) / baseline * 100, rounded half away from zero to one
/// decimal; nullopt for a zero baseline.
std::optional<double> percent_reduction(double baseline, double pdlc);

/// Compares means where lower is better. `expected` lists the kinds best
/// first, e.g. {"PDLC", "NoTE", "TE"}.
MetricComparison compare_metric(const std::string& metric, std::optional<double> pdlc, std::optional<double> note,
                                std::optional<double> te, const std::vector<std::string>& expected);

struct GroupComparison {
  std::size_t scenario_index = 0;
  std::string scenario;
  std::string latency;
  std::vector<MetricComparison> metrics;  // dtw, response_latency_s, completion_time_s
  bool flagged() const;
};

class MissingStrategyError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Groups rows by (scenario, latency) and compares trial means. Throws
/// MissingStrategyError when a group lacks NoTE, TE or PDLC rows.
std::vector<GroupComparison> compare_strategies(const std::vector<SummaryRow>& rows);

nlohmann::json to_json(const GroupComparison& g);
/// Human-readable table.
std::string format_comparisons(const std::vector<GroupComparison>& groups);

struct RunOptions {
  int jobs = 0;  // 0 = OpenMP default
};

struct CellFailure {
  std::size_t cell = 0;
  std::string error;
};

struct ExperimentResult {
  std::vector<SummaryRow> rows;
  std::vector<CellFailure> failures;
  std::vector<GroupComparison> comparisons;
  std::vector<std::string> files;  // relative to the output directory
  bool failed() const { return !failures.empty(); }
};

/// Runs every scenario x strategy x latency x trial cell and writes
/// summary.csv, averages.csv, curves_<dim>.csv, traces/cell_<i>.csv and
/// report.json into `out_dir`. Cell errors are recorded, other cells go on.
ExperimentResult run_experiment(const ExperimentConfig& config, const std::filesystem::path& out_dir,
                                const RunOptions& options = {});

}  // namespace fabg
