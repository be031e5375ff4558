#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "fabg/core_model.hpp"
#include "fabg/policy.hpp"

namespace fabg {

enum class StrategyKind { kNoTE, kTE, kPDLC };

std::string_view strategy_name(StrategyKind kind);  // "NoTE", "TE", "PDLC"
/// Case-insensitive; throws std::invalid_argument for unknown names.
StrategyKind parse_strategy_kind(std::string_view name);

struct StrategyConfig {
  StrategyKind kind = StrategyKind::kPDLC;
  std::size_t k = 20;
  double te_decay = 0.1;  // m, TE only
  int pdlc_offset = 0;    // n, PDLC only

  /// "NoTE(k=20)", "TE(k=20,m=0.1)", "PDLC(k=20,n=3)"
  std::string label() const;
};

/// Throws std::invalid_argument: k >= 1, m finite and >= 0, 0 <= n < k.
void validate_strategy(const StrategyConfig& config);

struct ExecutorOptions {
  /// TE and PDLC: the query loop is already running before tick 0, so
  /// chunks arrive from tick 0 on and no hold gap exists. Pre-roll queries
  /// are not recorded. false = hold the initial frame until the first
  /// in-window chunk arrives.
  bool prime_pipeline = true;
};

/// One commanded frame per tick plus query/boundary events. TE runs also
/// record the per-dimension envelope of the predictions that were averaged.
struct ExecutionTrace {
  float rate_hz = 30.0f;
  std::vector<ActionFrame> commanded;
  std::vector<Tick> query_ticks;
  std::vector<Tick> chunk_boundaries;
  std::vector<ActionFrame> envelope_lo;
  std::vector<ActionFrame> envelope_hi;
  std::vector<int> contributors;  // TE: predictions averaged per tick (0 = hold)

  std::size_t size() const { return commanded.size(); }
  bool queried_at(Tick t) const;
  bool boundary_at(Tick t) const;
  /// Values of one dimension over time.
  std::vector<double> channel(std::size_t dim) const;
};

class PolicyFailure : public std::runtime_error {
 public:
  PolicyFailure(Tick tick, const std::string& what);
  Tick tick() const { return tick_; }

 private:
  Tick tick_;
};

/// Plain chunking: query at 0, k, 2k, ...; each chunk starts executing when
/// it arrives (inference + communication delay later) and is consumed
/// index by index; the initial frame is held until the first arrival.
ExecutionTrace run_no_te(const ChunkPolicy& policy, const Episode& scenario, const LatencyModel& latency,
                         std::size_t k, const ExecutorOptions& options = {});

/// Temporal ensemble: query every tick; the command at t averages the
/// predictions for t of every chunk that arrived in [t-k+1, t], weights
/// exp(-m*i) with i = 0 for the oldest.
ExecutionTrace run_te(const ChunkPolicy& policy, const Episode& scenario, const LatencyModel& latency,
                      std::size_t k, double m, const ExecutorOptions& options = {});

/// PDLC: query every tick; the command at t is actions[n] of the chunk that
/// arrived at t.
ExecutionTrace run_pdlc(const ChunkPolicy& policy, const Episode& scenario, const LatencyModel& latency,
                        std::size_t k, int n, const ExecutorOptions& options = {});

ExecutionTrace execute(const StrategyConfig& strategy, const ChunkPolicy& policy, const Episode& scenario,
                       const LatencyModel& latency, const ExecutorOptions& options = {});

/// Which delay sources the PDLC offset compensates.
struct OffsetSources {
  bool perception = true;
  bool inference = true;
  bool communication = true;
};

/// Sum of the selected tick delays. Throws for rate_hz <= 0.
int compute_offset(const LatencyModel& latency, double rate_hz, const OffsetSources& sources = {});

struct LatencySeconds {
  double perception = 0.0;
  double inference = 0.0;
  double communication = 0.0;
};

/// round-half-up(total_seconds * rate_hz).
int compute_offset(const LatencySeconds& latency, double rate_hz, const OffsetSources& sources = {});
/// Converts each source separately with the same rounding.
LatencyModel latency_from_seconds(const LatencySeconds& latency, double rate_hz);

inline constexpr std::size_t kPwmChannels = 25;

struct PwmMapping {
  std::vector<double> matrix;   // 25 x 61 row-major
  std::vector<double> offsets;  // 25
  double pwm_min = 1000.0;
  double pwm_max = 2000.0;
};

/// Synthetic robot mapping: 22 blendshape channels (1000 us per unit
/// coefficient, offset 1000) and head roll/pitch/yaw (1000/pi us per radian,
/// offset 1500). Channel names: pwm_channel_name().
PwmMapping default_pwm_mapping();
std::string_view pwm_channel_name(std::size_t channel);

/// clamp(M * frame + offsets) into [pwm_min, pwm_max].
std::array<double, kPwmChannels> map_to_pwm(const ActionFrame& frame, const PwmMapping& mapping);

/// Header tick,dim_0..dim_60,queried,boundary; floats with 9 significant digits.
void write_trace_csv(const ExecutionTrace& trace, const std::filesystem::path& path);
std::string trace_csv(const ExecutionTrace& trace);
/// Reads a trace CSV (or any CSV with dim_<i> columns; absent dims are 0).
ExecutionTrace read_trace_csv(const std::filesystem::path& path, float rate_hz = 30.0f);

}  // namespace fabg
