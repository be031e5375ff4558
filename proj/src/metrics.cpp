#include "fabg/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <stdexcept>

#include "fabg/kernels.hpp"

namespace fabg {

namespace {

// Row-major copy of the selected dims.
std::vector<double> flatten(std::span<const ActionFrame> frames, std::optional<std::size_t> dim) {
  std::vector<double> out;
  if (dim) {
    if (*dim >= kActionDim) throw std::out_of_range("dim " + std::to_string(*dim) + " out of range");
    out.reserve(frames.size());
    for (const auto& f : frames) out.push_back(f[*dim]);
  } else {
    out.reserve(frames.size() * kActionDim);
    for (const auto& f : frames)
      for (float v : f.values) out.push_back(v);
  }
  return out;
}

void check_dim(std::size_t dim) {
  if (dim >= kActionDim) throw std::out_of_range("dim " + std::to_string(dim) + " out of range");
}

double baseline_of(const ExecutionTrace& trace, const Stimulus& s) {
  if (s.onset <= 0) return s.baseline;
  const std::size_t end = std::min<std::size_t>(static_cast<std::size_t>(s.onset), trace.size());
  double sum = 0.0;
  for (std::size_t t = 0; t < end; ++t) sum += trace.commanded[t][s.dim];
  return end == 0 ? s.baseline : sum / static_cast<double>(end);
}

// First tick >= from whose deviation reaches fraction * amplitude.
std::optional<std::size_t> first_crossing(const ExecutionTrace& trace, const Stimulus& s, double baseline,
                                          double fraction, std::size_t from) {
  const float level = static_cast<float>(fraction * s.amplitude);
  for (std::size_t t = from; t < trace.size(); ++t) {
    const float dev = static_cast<float>(std::abs(trace.commanded[t][s.dim] - baseline));
    if (dev >= level) return t;
  }
  return std::nullopt;
}

void check_stimulus(const ExecutionTrace& trace, const Stimulus& s) {
  check_dim(s.dim);
  if (!(s.amplitude > 0.0) || !std::isfinite(s.amplitude)) {
    throw std::invalid_argument("stimulus amplitude must be > 0");
  }
  if (s.onset < 0) throw std::invalid_argument("stimulus onset must be >= 0");
  if (!(trace.rate_hz > 0.0f)) throw std::invalid_argument("trace rate_hz must be > 0");
}

}  // namespace

double dtw(std::span<const ActionFrame> a, std::span<const ActionFrame> b, std::optional<std::size_t> dim) {
  if (a.empty() || b.empty()) throw std::invalid_argument("dtw needs non-empty sequences");
  const auto fa = flatten(a, dim), fb = flatten(b, dim);
  return kernels::dtw_l1(fa, a.size(), fb, b.size(), dim ? 1 : kActionDim);
}

double dtw(std::span<const double> a, std::span<const double> b) {
  if (a.empty() || b.empty()) throw std::invalid_argument("dtw needs non-empty sequences");
  return kernels::dtw_l1(a, a.size(), b, b.size(), 1);
}

std::optional<double> response_latency(const ExecutionTrace& trace, const Stimulus& stimulus,
                                       double threshold_fraction) {
  check_stimulus(trace, stimulus);
  if (!(threshold_fraction > 0.0 && threshold_fraction < 1.0)) {
    throw std::invalid_argument("threshold_fraction must be in (0,1)");
  }
  const double base = baseline_of(trace, stimulus);
  const auto hit = first_crossing(trace, stimulus, base, threshold_fraction, static_cast<std::size_t>(stimulus.onset));
  if (!hit) return std::nullopt;
  return static_cast<double>(static_cast<Tick>(*hit) - stimulus.onset) / trace.rate_hz;
}

std::optional<double> completion_time(const ExecutionTrace& trace, const Stimulus& stimulus, double lo_fraction,
                                      double hi_fraction) {
  check_stimulus(trace, stimulus);
  if (!(lo_fraction > 0.0 && lo_fraction < hi_fraction && hi_fraction < 1.0)) {
    throw std::invalid_argument("need 0 < lo < hi < 1");
  }
  const double base = baseline_of(trace, stimulus);
  const auto lo = first_crossing(trace, stimulus, base, lo_fraction, static_cast<std::size_t>(stimulus.onset));
  if (!lo) return std::nullopt;
  const auto hi = first_crossing(trace, stimulus, base, hi_fraction, *lo);
  if (!hi) return std::nullopt;
  return static_cast<double>(*hi - *lo) / trace.rate_hz;
}

BoundaryJumps boundary_discontinuity(const ExecutionTrace& trace) {
  if (trace.size() < 2) throw std::invalid_argument("boundary_discontinuity needs at least 2 ticks");
  BoundaryJumps out;
  for (std::size_t t = 1; t < trace.size(); ++t) {
    double jump = 0.0;
    for (std::size_t d = 0; d < kActionDim; ++d) {
      jump = std::max(jump, std::abs(static_cast<double>(trace.commanded[t][d]) - trace.commanded[t - 1][d]));
    }
    double& slot = trace.boundary_at(static_cast<Tick>(t)) ? out.boundary : out.within;
    slot = std::max(slot, jump);
  }
  return out;
}

double smoothness(const ExecutionTrace& trace, std::optional<std::size_t> dim) {
  if (dim) check_dim(*dim);
  double sum = 0.0;
  for (std::size_t t = 1; t + 1 < trace.size(); ++t) {
    const auto& p = trace.commanded[t - 1];
    const auto& c = trace.commanded[t];
    const auto& n = trace.commanded[t + 1];
    const auto term = [&](std::size_t d) {
      const double s = static_cast<double>(n[d]) - 2.0 * static_cast<double>(c[d]) + static_cast<double>(p[d]);
      return s * s;
    };
    if (dim) {
      sum += term(*dim);
    } else {
      for (std::size_t d = 0; d < kActionDim; ++d) sum += term(d);
    }
  }
  return sum;
}

void validate_metric_options(const MetricOptions& o) {
  if (!(o.response_threshold > 0.0 && o.response_threshold < 1.0)) {
    throw std::invalid_argument("response_threshold must be in (0,1)");
  }
  if (!(o.completion_lo > 0.0 && o.completion_lo < o.completion_hi && o.completion_hi < 1.0)) {
    throw std::invalid_argument("completion thresholds need 0 < lo < hi < 1");
  }
}

MetricReport evaluate(const ExecutionTrace& trace, const Episode& demonstration, const Stimulus& stimulus,
                      const MetricOptions& options) {
  validate_metric_options(options);
  if (trace.size() != demonstration.size()) {
    throw std::invalid_argument("trace and demonstration lengths differ");
  }
  const std::optional<std::size_t> dim =
      options.all_dims ? std::nullopt : std::optional<std::size_t>(stimulus.dim);
  MetricReport r;
  r.dtw = dtw(trace.commanded, demonstration.frames, dim);
  if (stimulus.amplitude > 0.0) {
    r.response_latency_s = response_latency(trace, stimulus, options.response_threshold);
    r.completion_time_s = completion_time(trace, stimulus, options.completion_lo, options.completion_hi);
  }
  if (trace.size() >= 2) {
    const auto jumps = boundary_discontinuity(trace);
    r.max_boundary_jump = jumps.boundary;
    r.max_within_jump = jumps.within;
  }
  r.smoothness = smoothness(trace, dim);
  for (std::size_t t = 0; t < trace.size(); ++t) {
    for (std::size_t d = 0; d < kActionDim; ++d) {
      if (dim && d != *dim) continue;
      r.max_abs_error = std::max(
          r.max_abs_error, std::abs(static_cast<double>(trace.commanded[t][d]) - demonstration.frames[t][d]));
    }
  }
  if (options.per_dim) {
    r.per_dim_dtw.resize(kActionDim);
    for (std::size_t d = 0; d < kActionDim; ++d) r.per_dim_dtw[d] = dtw(trace.commanded, demonstration.frames, d);
  }
  return r;
}

namespace {
nlohmann::json optional_json(const std::optional<double>& v) {
  return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
}
std::optional<double> optional_from(const nlohmann::json& j) {
  if (j.is_null()) return std::nullopt;
  return j.get<double>();
}
}  // namespace

nlohmann::json to_json(const MetricReport& r) {
  nlohmann::json j{{"dtw", r.dtw},
                   {"response_latency_s", optional_json(r.response_latency_s)},
                   {"completion_time_s", optional_json(r.completion_time_s)},
                   {"max_boundary_jump", r.max_boundary_jump},
                   {"max_within_jump", r.max_within_jump},
                   {"smoothness", r.smoothness},
                   {"max_abs_error", r.max_abs_error}};
  if (!r.per_dim_dtw.empty()) j["per_dim_dtw"] = r.per_dim_dtw;
  return j;
}

MetricReport metric_report_from_json(const nlohmann::json& j) {
  MetricReport r;
  r.dtw = j.at("dtw").get<double>();
  r.response_latency_s = optional_from(j.at("response_latency_s"));
  r.completion_time_s = optional_from(j.at("completion_time_s"));
  r.max_boundary_jump = j.at("max_boundary_jump").get<double>();
  r.max_within_jump = j.at("max_within_jump").get<double>();
  r.smoothness = j.at("smoothness").get<double>();
  r.max_abs_error = j.at("max_abs_error").get<double>();
  if (j.contains("per_dim_dtw")) r.per_dim_dtw = j["per_dim_dtw"].get<std::vector<double>>();
  return r;
}

std::string format_number(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

std::string metric_csv_header() {
  return "dtw,response_latency_s,completion_time_s,max_boundary_jump,max_within_jump,smoothness,max_abs_error";
}

std::string metric_csv_row(const MetricReport& r) {
  const auto opt = [](const std::optional<double>& v) { return v ? format_number(*v) : std::string("NA"); };
  return format_number(r.dtw) + "," + opt(r.response_latency_s) + "," + opt(r.completion_time_s) + "," +
         format_number(r.max_boundary_jump) + "," + format_number(r.max_within_jump) + "," +
         format_number(r.smoothness) + "," + format_number(r.max_abs_error);
}

std::vector<double> dtw_many(const std::vector<const ExecutionTrace*>& traces,
                             const std::vector<const Episode*>& demonstrations, std::optional<std::size_t> dim,
                             bool parallel) {
  if (traces.size() != demonstrations.size()) throw std::invalid_argument("dtw_many size mismatch");
  std::vector<std::vector<double>> a(traces.size()), b(traces.size());
  std::vector<kernels::DtwJob> jobs(traces.size());
  const std::size_t dims = dim ? 1 : kActionDim;
  for (std::size_t i = 0; i < traces.size(); ++i) {
    a[i] = flatten(traces[i]->commanded, dim);
    b[i] = flatten(demonstrations[i]->frames, dim);
    jobs[i] = {a[i], traces[i]->size(), b[i], demonstrations[i]->size(), dims};
  }
  std::vector<double> out(jobs.size());
  if (parallel) {
    kernels::parallel::dtw_batch(jobs, out);
  } else {
    kernels::serial::dtw_batch(jobs, out);
  }
  return out;
}

}  // namespace fabg
