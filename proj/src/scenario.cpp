#include "fabg/scenario.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <stdexcept>
#include <string>

#include "fabg/json_util.hpp"
#include "fabg/random.hpp"

namespace fabg {

namespace {

constexpr std::array<std::string_view, 5> kScenarioNames{"step", "sustained_open", "rapid_cycle",
                                                         "tracking_sine", "gesture_switch"};

// Raised-cosine edge: 0 for x <= 0, 1 for x >= 1.
double smooth_edge(double x) {
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  return 0.5 * (1.0 - std::cos(kPi * x));
}

// gesture_switch patterns: head pitch up/down, yaw left/right, open.
enum class Gesture { kUp, kDown, kLeft, kRight, kOpen };
constexpr int kGestureCount = 5;
constexpr double kGestureHeadScale = 0.4;  // radians at amplitude 1

void apply_gesture(Gesture g, double amplitude, std::size_t target, ActionFrame& f) {
  switch (g) {
    case Gesture::kUp: f[kHeadPitch] = static_cast<float>(kGestureHeadScale * amplitude); break;
    case Gesture::kDown: f[kHeadPitch] = static_cast<float>(-kGestureHeadScale * amplitude); break;
    case Gesture::kLeft: f[kHeadYaw] = static_cast<float>(kGestureHeadScale * amplitude); break;
    case Gesture::kRight: f[kHeadYaw] = static_cast<float>(-kGestureHeadScale * amplitude); break;
    case Gesture::kOpen: f[target] = static_cast<float>(amplitude); break;
  }
}

}  // namespace

std::string_view scenario_name(ScenarioKind kind) { return kScenarioNames[static_cast<std::size_t>(kind)]; }

ScenarioKind parse_scenario_kind(std::string_view name) {
  for (std::size_t i = 0; i < kScenarioNames.size(); ++i) {
    if (kScenarioNames[i] == name) return static_cast<ScenarioKind>(i);
  }
  throw std::invalid_argument("unknown scenario kind '" + std::string(name) + "'");
}

bool is_cyclic(ScenarioKind kind) {
  return kind == ScenarioKind::kRapidCycle || kind == ScenarioKind::kTrackingSine;
}

std::size_t ScenarioSpec::driven_dim() const {
  if (target_dim) return *target_dim;
  return kind == ScenarioKind::kTrackingSine ? kHeadYaw : kJawOpen;
}

void validate_scenario(const ScenarioSpec& spec) {
  if (spec.duration_ticks < 1) throw std::invalid_argument("duration_ticks must be >= 1");
  if (!(spec.rate_hz > 0.0f) || !std::isfinite(spec.rate_hz)) throw std::invalid_argument("rate_hz must be > 0");
  if (!(spec.amplitude >= 0.0 && spec.amplitude <= 1.0)) throw std::invalid_argument("amplitude must be in [0,1]");
  if (spec.driven_dim() >= kActionDim) throw std::invalid_argument("target_dim must be < 61");
  if (spec.kind == ScenarioKind::kTrackingSine && spec.driven_dim() < kBlendshapeCount) {
    throw std::invalid_argument("tracking_sine drives a head angle (target_dim 58..60)");
  }
  if ((is_cyclic(spec.kind) || spec.kind == ScenarioKind::kGestureSwitch) && spec.period_ticks < 2) {
    throw std::invalid_argument("period_ticks must be >= 2");
  }
}

Episode generate(const ScenarioSpec& spec) {
  validate_scenario(spec);
  const int n = spec.duration_ticks;
  const double a = spec.amplitude;
  const std::size_t dim = spec.driven_dim();
  Episode ep;
  ep.rate_hz = spec.rate_hz;
  ep.frames.resize(static_cast<std::size_t>(n));

  const int rise = n / 4, fall = 3 * n / 4;
  const int ramp = std::max(1, static_cast<int>(std::lround(0.5 * spec.rate_hz)));
  const int period = spec.period_ticks;

  int previous_gesture = -1;
  Rng gesture_rng(derive_seed(spec.seed, 0x6e57));
  for (int t = 0; t < n; ++t) {
    ActionFrame& f = ep.frames[static_cast<std::size_t>(t)];
    switch (spec.kind) {
      case ScenarioKind::kStep:
        f[dim] = t >= rise && t < fall ? static_cast<float>(a) : 0.0f;
        break;
      case ScenarioKind::kSustainedOpen: {
        const double up = smooth_edge(static_cast<double>(t - rise) / ramp);
        const double down = smooth_edge(static_cast<double>(fall - t) / ramp);
        f[dim] = static_cast<float>(a * std::min(up, down));
        break;
      }
      case ScenarioKind::kRapidCycle: {
        const double phase = static_cast<double>(t % period) / period;
        f[dim] = static_cast<float>(a * (phase <= 0.5 ? 2.0 * phase : 2.0 - 2.0 * phase));
        break;
      }
      case ScenarioKind::kTrackingSine: {
        const double phase = static_cast<double>(t % period) / period;
        f[dim] = static_cast<float>(a * std::sin(2.0 * kPi * phase));
        break;
      }
      case ScenarioKind::kGestureSwitch: {
        if (t % period == 0) {
          int g = static_cast<int>(gesture_rng.next() % kGestureCount);
          if (g == previous_gesture) g = (g + 1 + static_cast<int>(gesture_rng.next() % (kGestureCount - 1))) % kGestureCount;
          previous_gesture = g;
        }
        apply_gesture(static_cast<Gesture>(previous_gesture), a, dim, f);
        break;
      }
    }
  }
  return ep;
}

Stimulus stimulus_for(const ScenarioSpec& spec) {
  Stimulus s;
  s.dim = spec.driven_dim();
  s.amplitude = spec.amplitude;
  s.baseline = 0.0;
  if (spec.kind == ScenarioKind::kStep || spec.kind == ScenarioKind::kSustainedOpen) {
    s.onset = spec.duration_ticks / 4;
  }
  return s;
}

void validate_corpus_options(const CorpusOptions& o) {
  if (o.obs_height < 18 || o.obs_width < 24 || o.obs_height > 0xffff || o.obs_width > 0xffff) {
    throw std::invalid_argument("observation shape must be at least 18x24");
  }
  if (!(o.jitter_sigma >= 0.0) || !(o.depth_noise >= 0.0)) throw std::invalid_argument("noise scales must be >= 0");
  if (!(o.invalid_fraction >= 0.0 && o.invalid_fraction < 1.0)) {
    throw std::invalid_argument("invalid_fraction must be in [0,1)");
  }
}

Observation synthesize_observation(const ActionFrame& frame, std::size_t driven_dim, Tick tick,
                                   std::uint64_t seed, const CorpusOptions& options) {
  validate_corpus_options(options);
  const int h = options.obs_height, w = options.obs_width;
  Observation obs;
  obs.height = static_cast<std::uint16_t>(h);
  obs.width = static_cast<std::uint16_t>(w);
  obs.tick = tick;
  const std::size_t pixels = obs.pixel_count();
  obs.rgb_left.resize(pixels * 3);
  obs.rgb_right.resize(pixels * 3);
  obs.depth.resize(pixels);

  const double v = frame[driven_dim];
  const double pitch = frame[kHeadPitch] / kPi;
  const double yaw = frame[kHeadYaw] / kPi;
  Rng rng(derive_seed(seed, static_cast<std::uint64_t>(tick), 0x0b5));
  constexpr int kDisparity = 2;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const std::size_t p = static_cast<std::size_t>(y) * w + x;
      const double gx = static_cast<double>(x) / w, gy = static_cast<double>(y) / h;
      double depth = 1.0 + 0.5 * v + 0.05 * gx + options.depth_noise * rng.normal();
      if (rng.uniform() < options.invalid_fraction) depth = kInvalidDepth;
      obs.depth[p] = static_cast<float>(std::max(depth, 0.0));
      const auto shade = [&](double gxx) {
        return std::array<double, 3>{0.3 + 0.5 * v + 0.1 * gy, 0.5 + 0.3 * pitch + 0.1 * gxx,
                                     0.5 + 0.3 * yaw - 0.1 * gy};
      };
      const auto l = shade(gx);
      const auto r = shade(static_cast<double>(std::min(x + kDisparity, w - 1)) / w);
      for (int c = 0; c < 3; ++c) {
        obs.rgb_left[p * 3 + c] = static_cast<float>(std::clamp(l[c] + 0.01 * rng.normal(), 0.0, 1.0));
        obs.rgb_right[p * 3 + c] = static_cast<float>(std::clamp(r[c] + 0.01 * rng.normal(), 0.0, 1.0));
      }
    }
  }
  return obs;
}

std::vector<Episode> build_corpus(const std::vector<ScenarioSpec>& specs, const CorpusOptions& options) {
  if (specs.empty()) throw std::invalid_argument("corpus needs at least one spec");
  validate_corpus_options(options);
  std::vector<Episode> corpus(specs.size());
  std::vector<std::string> errors(specs.size());
#pragma omp parallel for schedule(dynamic)
  for (long long i = 0; i < static_cast<long long>(specs.size()); ++i) {
    const ScenarioSpec& spec = specs[static_cast<std::size_t>(i)];
    try {
      Episode ep = generate(spec);
      const std::size_t dim = spec.driven_dim();
      if (options.jitter_sigma > 0.0) {
        Rng rng(derive_seed(spec.seed, 0x717e));
        for (auto& f : ep.frames) {
          f[dim] = static_cast<float>(f[dim] + options.jitter_sigma * rng.normal());
          f = clamp_frame(f);
        }
      }
      if (options.observations) {
        ep.observations.resize(ep.frames.size());
        for (std::size_t t = 0; t < ep.frames.size(); ++t) {
          ep.observations[t] = synthesize_observation(ep.frames[t], dim, static_cast<Tick>(t), spec.seed, options);
        }
      }
      corpus[static_cast<std::size_t>(i)] = std::move(ep);
    } catch (const std::exception& e) {
      errors[static_cast<std::size_t>(i)] = "spec " + std::to_string(i) + ": " + e.what();
    }
  }
  for (const auto& e : errors) {
    if (!e.empty()) throw std::invalid_argument(e);
  }
  return corpus;
}

// ---------------------------------------------------------------------------

nlohmann::json to_json(const ScenarioSpec& spec) {
  nlohmann::json j{{"kind", scenario_name(spec.kind)},
                   {"duration_ticks", spec.duration_ticks},
                   {"rate_hz", spec.rate_hz},
                   {"target_dim", spec.driven_dim()},
                   {"amplitude", spec.amplitude},
                   {"period_ticks", spec.period_ticks},
                   {"seed", spec.seed}};
  return j;
}

ScenarioSpec scenario_from_json(const nlohmann::json& j, const std::string& path) {
  using namespace json_util;
  check_keys(j, path, {"kind", "duration_ticks", "rate_hz", "target_dim", "amplitude", "period_ticks", "seed"});
  ScenarioSpec spec;
  const std::string kind_path = member(path, "kind");
  try {
    spec.kind = parse_scenario_kind(string(require(j, "kind", path), kind_path));
  } catch (const ConfigError&) {
    throw;
  } catch (const std::invalid_argument& e) {
    throw ConfigError(kind_path, e.what());
  }
  if (j.contains("duration_ticks")) {
    spec.duration_ticks = static_cast<int>(ranged(j["duration_ticks"], member(path, "duration_ticks"), 1, 1 << 24));
  }
  if (j.contains("rate_hz")) {
    const double r = number(j["rate_hz"], member(path, "rate_hz"));
    if (!(r > 0.0)) throw ConfigError(member(path, "rate_hz"), "must be > 0");
    spec.rate_hz = static_cast<float>(r);
  }
  if (j.contains("target_dim")) {
    const auto& t = j["target_dim"];
    const std::string tp = member(path, "target_dim");
    if (t.is_string()) {
      const std::string name = t.get<std::string>();
      for (std::size_t d = 0; d < kActionDim && !spec.target_dim; ++d) {
        if (action_dim_name(d) == name) spec.target_dim = d;
      }
      if (!spec.target_dim) throw ConfigError(tp, "unknown dimension name '" + name + "'");
    } else {
      spec.target_dim = static_cast<std::size_t>(ranged(t, tp, 0, kActionDim - 1));
    }
  }
  if (j.contains("amplitude")) {
    spec.amplitude = number(j["amplitude"], member(path, "amplitude"));
    if (!(spec.amplitude >= 0.0 && spec.amplitude <= 1.0)) {
      throw ConfigError(member(path, "amplitude"), "must be in [0,1]");
    }
  }
  if (j.contains("period_ticks")) {
    spec.period_ticks = static_cast<int>(ranged(j["period_ticks"], member(path, "period_ticks"), 2, 1 << 24));
  }
  if (j.contains("seed")) spec.seed = unsigned_integer(j["seed"], member(path, "seed"));
  try {
    validate_scenario(spec);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(path, e.what());
  }
  return spec;
}

CorpusOptions corpus_options_from_json(const nlohmann::json& j, const std::string& path) {
  using namespace json_util;
  check_keys(j, path, {"observations", "obs_height", "obs_width", "jitter_sigma", "depth_noise", "invalid_fraction"});
  CorpusOptions o;
  o.observations = boolean_or(j, "observations", path, o.observations);
  if (j.contains("obs_height")) o.obs_height = static_cast<int>(ranged(j["obs_height"], member(path, "obs_height"), 18, 0xffff));
  if (j.contains("obs_width")) o.obs_width = static_cast<int>(ranged(j["obs_width"], member(path, "obs_width"), 24, 0xffff));
  o.jitter_sigma = number_or(j, "jitter_sigma", path, o.jitter_sigma);
  o.depth_noise = number_or(j, "depth_noise", path, o.depth_noise);
  o.invalid_fraction = number_or(j, "invalid_fraction", path, o.invalid_fraction);
  try {
    validate_corpus_options(o);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(path, e.what());
  }
  return o;
}

}  // namespace fabg
