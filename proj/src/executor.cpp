#include "fabg/executor.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <deque>
#include <fstream>
#include <sstream>

namespace fabg {

std::string_view strategy_name(StrategyKind kind) {
  switch (kind) {
    case StrategyKind::kNoTE: return "NoTE";
    case StrategyKind::kTE: return "TE";
    case StrategyKind::kPDLC: return "PDLC";
  }
  return "?";
}

StrategyKind parse_strategy_kind(std::string_view name) {
  std::string lower(name);
  for (char& c : lower) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  if (lower == "note") return StrategyKind::kNoTE;
  if (lower == "te") return StrategyKind::kTE;
  if (lower == "pdlc") return StrategyKind::kPDLC;
  throw std::invalid_argument("unknown strategy '" + std::string(name) + "' (expected NoTE, TE or PDLC)");
}

std::string StrategyConfig::label() const {
  std::ostringstream os;
  os << strategy_name(kind) << "(k=" << k;
  if (kind == StrategyKind::kTE) os << ",m=" << te_decay;
  if (kind == StrategyKind::kPDLC) os << ",n=" << pdlc_offset;
  os << ")";
  return os.str();
}

void validate_strategy(const StrategyConfig& config) {
  if (config.k < 1) throw std::invalid_argument("k must be >= 1");
  if (!std::isfinite(config.te_decay) || config.te_decay < 0.0) {
    throw std::invalid_argument("te_decay must be finite and >= 0");
  }
  if (config.pdlc_offset < 0) throw std::invalid_argument("pdlc_offset must be >= 0");
  if (static_cast<std::size_t>(config.pdlc_offset) >= config.k) {
    throw std::invalid_argument("pdlc_offset n = " + std::to_string(config.pdlc_offset) +
                                " must be < k = " + std::to_string(config.k));
  }
}

bool ExecutionTrace::queried_at(Tick t) const {
  return std::binary_search(query_ticks.begin(), query_ticks.end(), t);
}

bool ExecutionTrace::boundary_at(Tick t) const {
  return std::binary_search(chunk_boundaries.begin(), chunk_boundaries.end(), t);
}

std::vector<double> ExecutionTrace::channel(std::size_t dim) const {
  if (dim >= kActionDim) throw std::out_of_range("dim " + std::to_string(dim) + " out of range");
  std::vector<double> out;
  out.reserve(commanded.size());
  for (const auto& f : commanded) out.push_back(f[dim]);
  return out;
}

PolicyFailure::PolicyFailure(Tick tick, const std::string& what)
    : std::runtime_error("policy failed at tick " + std::to_string(tick) + ": " + what), tick_(tick) {}

namespace {

void check_inputs(const ChunkPolicy& policy, const Episode& scenario, const LatencyModel& latency,
                  std::size_t k) {
  if (scenario.frames.empty()) throw std::invalid_argument("scenario must have at least one tick");
  validate_latency(latency);
  if (k < 1) throw std::invalid_argument("k must be >= 1");
  if (policy.chunk_length() != k) {
    throw std::invalid_argument("policy chunk length " + std::to_string(policy.chunk_length()) +
                                " != k = " + std::to_string(k));
  }
}

// Issues queries and remembers the last commanded frame for policies that
// condition on it.
class QueryIssuer {
 public:
  QueryIssuer(const ChunkPolicy& policy, const Episode& scene, const LatencyModel& latency)
      : policy_(policy), scene_(scene), perception_(latency.perception), previous_(scene.frames.front()) {}

  ActionChunk issue(Tick q) {
    PolicyQuery query;
    query.query_tick = q;
    query.observation_tick = q - perception_;
    query.scene = &scene_;
    query.previous = previous_;
    try {
      return policy_.predict(query);
    } catch (const std::exception& e) {
      throw PolicyFailure(q, e.what());
    }
  }

  void commanded(const ActionFrame& frame) { previous_ = frame; }

 private:
  const ChunkPolicy& policy_;
  const Episode& scene_;
  Tick perception_;
  ActionFrame previous_;
};

ExecutionTrace empty_trace(const Episode& scenario) {
  ExecutionTrace trace;
  trace.rate_hz = scenario.rate_hz;
  trace.commanded.reserve(scenario.size());
  return trace;
}

}  // namespace

ExecutionTrace run_no_te(const ChunkPolicy& policy, const Episode& scenario, const LatencyModel& latency,
                         std::size_t k, const ExecutorOptions&) {
  check_inputs(policy, scenario, latency, k);
  const Tick horizon = static_cast<Tick>(scenario.size());
  const Tick d = latency.dispatch();
  const Tick stride = static_cast<Tick>(k);
  QueryIssuer issuer(policy, scenario, latency);
  ExecutionTrace trace = empty_trace(scenario);

  std::deque<std::pair<Tick, ActionChunk>> in_flight;  // (arrival, chunk)
  std::optional<ActionChunk> current;
  Tick current_arrival = 0;
  for (Tick t = 0; t < horizon; ++t) {
    if (t % stride == 0) {
      in_flight.emplace_back(t + d, issuer.issue(t));
      trace.query_ticks.push_back(t);
    }
    while (!in_flight.empty() && in_flight.front().first <= t) {
      current_arrival = in_flight.front().first;
      current = std::move(in_flight.front().second);
      in_flight.pop_front();
      trace.chunk_boundaries.push_back(current_arrival);
    }
    const ActionFrame frame = current ? current->actions[static_cast<std::size_t>(t - current_arrival)]
                                      : scenario.frames.front();
    trace.commanded.push_back(frame);
    issuer.commanded(frame);
  }
  return trace;
}

ExecutionTrace run_te(const ChunkPolicy& policy, const Episode& scenario, const LatencyModel& latency,
                      std::size_t k, double m, const ExecutorOptions& options) {
  check_inputs(policy, scenario, latency, k);
  if (!std::isfinite(m) || m < 0.0) throw std::invalid_argument("te_decay must be finite and >= 0");
  const Tick horizon = static_cast<Tick>(scenario.size());
  const Tick d = latency.dispatch();
  const Tick window = static_cast<Tick>(k);
  QueryIssuer issuer(policy, scenario, latency);
  ExecutionTrace trace = empty_trace(scenario);
  trace.chunk_boundaries.push_back(0);
  trace.envelope_lo.reserve(scenario.size());
  trace.envelope_hi.reserve(scenario.size());
  trace.contributors.reserve(scenario.size());

  // Chunks ordered by arrival tick; arrival = query tick + d.
  std::deque<std::pair<Tick, ActionChunk>> chunks;
  if (options.prime_pipeline) {
    for (Tick q = -(window - 1) - d; q < 0; ++q) chunks.emplace_back(q + d, issuer.issue(q));
  }
  std::vector<double> weights;
  for (Tick t = 0; t < horizon; ++t) {
    chunks.emplace_back(t + d, issuer.issue(t));
    trace.query_ticks.push_back(t);
    while (!chunks.empty() && chunks.front().first <= t - window) chunks.pop_front();

    // Oldest first: index i = 0 gets weight exp(0).
    std::size_t count = 0;
    for (const auto& [arrival, chunk] : chunks) {
      if (arrival > t) break;
      ++count;
    }
    ActionFrame frame = scenario.frames.front();
    ActionFrame lo = frame, hi = frame;
    if (count > 0) {
      weights.resize(count);
      double total = 0.0;
      for (std::size_t i = 0; i < count; ++i) {
        weights[i] = std::exp(-m * static_cast<double>(i));
        total += weights[i];
      }
      for (std::size_t dim = 0; dim < kActionDim; ++dim) {
        double acc = 0.0;
        float pmin = 0.0f, pmax = 0.0f;
        for (std::size_t i = 0; i < count; ++i) {
          const auto& [arrival, chunk] = chunks[i];
          const float p = chunk.actions[static_cast<std::size_t>(t - arrival)][dim];
          acc += weights[i] * static_cast<double>(p);
          pmin = i == 0 ? p : std::min(pmin, p);
          pmax = i == 0 ? p : std::max(pmax, p);
        }
        frame[dim] = static_cast<float>(acc / total);
        lo[dim] = pmin;
        hi[dim] = pmax;
      }
    }
    trace.commanded.push_back(frame);
    trace.envelope_lo.push_back(lo);
    trace.envelope_hi.push_back(hi);
    trace.contributors.push_back(static_cast<int>(count));
    issuer.commanded(frame);
  }
  return trace;
}

ExecutionTrace run_pdlc(const ChunkPolicy& policy, const Episode& scenario, const LatencyModel& latency,
                        std::size_t k, int n, const ExecutorOptions& options) {
  check_inputs(policy, scenario, latency, k);
  if (n < 0 || static_cast<std::size_t>(n) >= k) {
    throw std::invalid_argument("pdlc_offset n = " + std::to_string(n) + " must be in [0, k)");
  }
  const Tick horizon = static_cast<Tick>(scenario.size());
  const Tick d = latency.dispatch();
  QueryIssuer issuer(policy, scenario, latency);
  ExecutionTrace trace = empty_trace(scenario);
  trace.chunk_boundaries.push_back(0);

  // Only actions[n] of each chunk is ever used.
  std::deque<std::pair<Tick, ActionFrame>> in_flight;
  if (options.prime_pipeline) {
    for (Tick q = -d; q < 0; ++q) in_flight.emplace_back(q + d, issuer.issue(q).actions[n]);
  }
  ActionFrame selected = scenario.frames.front();
  for (Tick t = 0; t < horizon; ++t) {
    in_flight.emplace_back(t + d, issuer.issue(t).actions[n]);
    trace.query_ticks.push_back(t);
    while (!in_flight.empty() && in_flight.front().first <= t) {
      selected = in_flight.front().second;
      in_flight.pop_front();
    }
    trace.commanded.push_back(selected);
    issuer.commanded(selected);
  }
  return trace;
}

ExecutionTrace execute(const StrategyConfig& strategy, const ChunkPolicy& policy, const Episode& scenario,
                       const LatencyModel& latency, const ExecutorOptions& options) {
  validate_strategy(strategy);
  switch (strategy.kind) {
    case StrategyKind::kNoTE: return run_no_te(policy, scenario, latency, strategy.k, options);
    case StrategyKind::kTE: return run_te(policy, scenario, latency, strategy.k, strategy.te_decay, options);
    case StrategyKind::kPDLC:
      return run_pdlc(policy, scenario, latency, strategy.k, strategy.pdlc_offset, options);
  }
  throw std::logic_error("unreachable strategy kind");
}

// ---------------------------------------------------------------------------

int compute_offset(const LatencyModel& latency, double rate_hz, const OffsetSources& sources) {
  if (!(rate_hz > 0.0)) throw std::invalid_argument("rate_hz must be > 0");
  validate_latency(latency);
  return (sources.perception ? latency.perception : 0) + (sources.inference ? latency.inference : 0) +
         (sources.communication ? latency.communication : 0);
}

namespace {
int round_half_up(double x) { return static_cast<int>(std::floor(x + 0.5)); }

void check_seconds(double v, const char* name) {
  if (!std::isfinite(v) || v < 0.0) throw std::invalid_argument(std::string(name) + " must be finite and >= 0");
}
}  // namespace

int compute_offset(const LatencySeconds& latency, double rate_hz, const OffsetSources& sources) {
  if (!(rate_hz > 0.0)) throw std::invalid_argument("rate_hz must be > 0");
  check_seconds(latency.perception, "perception");
  check_seconds(latency.inference, "inference");
  check_seconds(latency.communication, "communication");
  const double total = (sources.perception ? latency.perception : 0.0) +
                       (sources.inference ? latency.inference : 0.0) +
                       (sources.communication ? latency.communication : 0.0);
  return round_half_up(total * rate_hz);
}

LatencyModel latency_from_seconds(const LatencySeconds& latency, double rate_hz) {
  if (!(rate_hz > 0.0)) throw std::invalid_argument("rate_hz must be > 0");
  check_seconds(latency.perception, "perception");
  check_seconds(latency.inference, "inference");
  check_seconds(latency.communication, "communication");
  return {round_half_up(latency.perception * rate_hz), round_half_up(latency.inference * rate_hz),
          round_half_up(latency.communication * rate_hz)};
}

// ---------------------------------------------------------------------------

namespace {

struct PwmChannel {
  std::string_view name;
  std::size_t dim;
};

constexpr std::array<PwmChannel, kPwmChannels> kPwmTable{{
    {"brow_down_left", 41},      {"brow_down_right", 42},      {"brow_inner_up", 43},
    {"brow_outer_up_left", 44},  {"brow_outer_up_right", 45},  {"eye_blink_left", 0},
    {"eye_blink_right", 7},      {"eye_wide_left", 6},         {"eye_wide_right", 13},
    {"eye_look_up_left", 4},     {"eye_look_up_right", 11},    {"cheek_squint_left", 47},
    {"cheek_squint_right", 48},  {"jaw_open", 17},             {"mouth_smile_left", 23},
    {"mouth_smile_right", 24},   {"mouth_frown_left", 25},     {"mouth_frown_right", 26},
    {"mouth_pucker", 20},        {"mouth_funnel", 19},         {"mouth_stretch_left", 29},
    {"mouth_stretch_right", 30}, {"head_roll", kHeadRoll},     {"head_pitch", kHeadPitch},
    {"head_yaw", kHeadYaw},
}};

}  // namespace

std::string_view pwm_channel_name(std::size_t channel) {
  if (channel >= kPwmChannels) throw std::out_of_range("pwm channel out of range");
  return kPwmTable[channel].name;
}

PwmMapping default_pwm_mapping() {
  PwmMapping m;
  m.matrix.assign(kPwmChannels * kActionDim, 0.0);
  m.offsets.assign(kPwmChannels, 0.0);
  for (std::size_t c = 0; c < kPwmChannels; ++c) {
    const std::size_t dim = kPwmTable[c].dim;
    const bool head = dim >= kBlendshapeCount;
    m.matrix[c * kActionDim + dim] = head ? 1000.0 / kPi : 1000.0;
    m.offsets[c] = head ? 1500.0 : 1000.0;
  }
  return m;
}

std::array<double, kPwmChannels> map_to_pwm(const ActionFrame& frame, const PwmMapping& mapping) {
  if (mapping.matrix.size() != kPwmChannels * kActionDim || mapping.offsets.size() != kPwmChannels) {
    throw std::invalid_argument("pwm mapping must be 25x61 with 25 offsets");
  }
  std::array<double, kPwmChannels> out{};
  for (std::size_t c = 0; c < kPwmChannels; ++c) {
    double acc = mapping.offsets[c];
    for (std::size_t d = 0; d < kActionDim; ++d) acc += mapping.matrix[c * kActionDim + d] * frame[d];
    out[c] = std::clamp(acc, mapping.pwm_min, mapping.pwm_max);
  }
  return out;
}

// ---------------------------------------------------------------------------

namespace {

void append_float(std::string& out, double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  out += buf;
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream is(line);
  while (std::getline(is, cell, ',')) {
    if (!cell.empty() && cell.back() == '\r') cell.pop_back();
    cells.push_back(cell);
  }
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

}  // namespace

std::string trace_csv(const ExecutionTrace& trace) {
  std::string out = "tick";
  for (std::size_t d = 0; d < kActionDim; ++d) out += ",dim_" + std::to_string(d);
  out += ",queried,boundary\n";
  for (std::size_t t = 0; t < trace.commanded.size(); ++t) {
    out += std::to_string(t);
    for (std::size_t d = 0; d < kActionDim; ++d) {
      out += ',';
      append_float(out, trace.commanded[t][d]);
    }
    out += trace.queried_at(static_cast<Tick>(t)) ? ",1" : ",0";
    out += trace.boundary_at(static_cast<Tick>(t)) ? ",1\n" : ",0\n";
  }
  return out;
}

void write_trace_csv(const ExecutionTrace& trace, const std::filesystem::path& path) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("cannot write " + path.string());
  f << trace_csv(trace);
  if (!f) throw std::runtime_error("write failed for " + path.string());
}

ExecutionTrace read_trace_csv(const std::filesystem::path& path, float rate_hz) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open " + path.string());
  std::string line;
  if (!std::getline(f, line)) throw std::runtime_error(path.string() + ": empty file");
  const auto header = split_csv_line(line);
  std::vector<std::pair<std::size_t, std::size_t>> dims;  // (column, dim)
  std::optional<std::size_t> queried_col, boundary_col;
  for (std::size_t c = 0; c < header.size(); ++c) {
    const std::string& h = header[c];
    if (h.rfind("dim_", 0) == 0) {
      std::size_t pos = 0;
      const std::size_t dim = std::stoul(h.substr(4), &pos);
      if (pos != h.size() - 4 || dim >= kActionDim) throw std::runtime_error(path.string() + ": bad column " + h);
      dims.emplace_back(c, dim);
    } else if (h == "queried") {
      queried_col = c;
    } else if (h == "boundary") {
      boundary_col = c;
    }
  }
  if (dims.empty()) throw std::runtime_error(path.string() + ": no dim_<i> columns");

  ExecutionTrace trace;
  trace.rate_hz = rate_hz;
  std::size_t row = 1;
  while (std::getline(f, line)) {
    ++row;
    if (line.empty() || line == "\r") continue;
    const auto cells = split_csv_line(line);
    if (cells.size() != header.size()) {
      throw std::runtime_error(path.string() + ": row " + std::to_string(row) + " has " +
                               std::to_string(cells.size()) + " cells, header has " +
                               std::to_string(header.size()));
    }
    ActionFrame frame;
    for (const auto& [col, dim] : dims) {
      char* end = nullptr;
      const double v = std::strtod(cells[col].c_str(), &end);
      if (end == cells[col].c_str() || *end != '\0') {
        throw std::runtime_error(path.string() + ": row " + std::to_string(row) + ": bad number '" + cells[col] + "'");
      }
      frame[dim] = static_cast<float>(v);
    }
    const Tick t = static_cast<Tick>(trace.commanded.size());
    if (queried_col && cells[*queried_col] == "1") trace.query_ticks.push_back(t);
    if (boundary_col && cells[*boundary_col] == "1") trace.chunk_boundaries.push_back(t);
    trace.commanded.push_back(frame);
  }
  return trace;
}

}  // namespace fabg
