#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fabg/core_model.hpp"
#include "fabg/executor.hpp"
#include "fabg/scenario.hpp"
#include "json.hpp"

namespace fabg {

/// DTW between two frame sequences, L1 cost over all 61 dims or over `dim`
/// only. Throws std::invalid_argument for an empty sequence.
double dtw(std::span<const ActionFrame> a, std::span<const ActionFrame> b,
           std::optional<std::size_t> dim = std::nullopt);
double dtw(std::span<const double> a, std::span<const double> b);

/// Seconds from onset to the first tick >= onset where
/// |command - baseline| >= threshold * amplitude; nullopt when never.
/// The baseline is the mean command over [0, onset), or the stimulus
/// baseline when onset is 0. Comparison happens at float32, the precision
/// traces are stored in.
std::optional<double> response_latency(const ExecutionTrace& trace, const Stimulus& stimulus,
                                       double threshold_fraction = 0.1);

/// Seconds between the first lo crossing (at or after onset) and the first
/// hi crossing at or after it; nullopt when either never happens.
std::optional<double> completion_time(const ExecutionTrace& trace, const Stimulus& stimulus,
                                      double lo_fraction = 0.1, double hi_fraction = 0.9);

struct BoundaryJumps {
  double boundary = 0.0;  // max L-inf jump into a chunk-boundary tick (0 for none)
  double within = 0.0;    // max L-inf jump into any other tick
};

/// Jumps |c[t] - c[t-1]| for t >= 1, split by whether t is a boundary.
BoundaryJumps boundary_discontinuity(const ExecutionTrace& trace);

/// Sum of squared second differences over all dims or one.
double smoothness(const ExecutionTrace& trace, std::optional<std::size_t> dim = std::nullopt);

struct MetricOptions {
  bool all_dims = false;  // DTW/error/smoothness over all 61 dims instead of the driven one
  double response_threshold = 0.1;
  double completion_lo = 0.1;
  double completion_hi = 0.9;
  bool per_dim = false;  // also report DTW for every dimension
};

void validate_metric_options(const MetricOptions& options);

struct MetricReport {
  double dtw = 0.0;
  std::optional<double> response_latency_s;
  std::optional<double> completion_time_s;
  double max_boundary_jump = 0.0;
  double max_within_jump = 0.0;
  double smoothness = 0.0;
  double max_abs_error = 0.0;  // pointwise, same dims as dtw
  std::vector<double> per_dim_dtw;
};

MetricReport evaluate(const ExecutionTrace& trace, const Episode& demonstration, const Stimulus& stimulus,
                      const MetricOptions& options = {});

/// Keys: dtw, response_latency_s, completion_time_s (null = not detected),
/// max_boundary_jump, max_within_jump, smoothness, max_abs_error,
/// per_dim_dtw (only when present).
nlohmann::json to_json(const MetricReport& report);
MetricReport metric_report_from_json(const nlohmann::json& j);

/// CSV columns matching metric_csv_row(); "NA" marks not-detected.
std::string metric_csv_header();
std::string metric_csv_row(const MetricReport& report);

/// "%.9g"
std::string format_number(double v);

/// DTW of many (trace, demonstration) pairs, fanned out with OpenMP.
std::vector<double> dtw_many(const std::vector<const ExecutionTrace*>& traces,
                             const std::vector<const Episode*>& demonstrations,
                             std::optional<std::size_t> dim, bool parallel = true);

}  // namespace fabg
