#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "fabg/core_model.hpp"
#include "json.hpp"

namespace fabg {

enum class ScenarioKind { kStep, kSustainedOpen, kRapidCycle, kTrackingSine, kGestureSwitch };

std::string_view scenario_name(ScenarioKind kind);  // "step", "sustained_open", ...
ScenarioKind parse_scenario_kind(std::string_view name);
bool is_cyclic(ScenarioKind kind);  // rapid_cycle, tracking_sine

struct ScenarioSpec {
  ScenarioKind kind = ScenarioKind::kStep;
  int duration_ticks = 120;
  float rate_hz = 30.0f;
  /// Driven dimension; default jawOpen, head yaw for tracking_sine.
  std::optional<std::size_t> target_dim;
  double amplitude = 1.0;
  int period_ticks = 10;  // cyclic kinds and gesture_switch dwell
  std::uint64_t seed = 0;

  std::size_t driven_dim() const;
};

/// Throws std::invalid_argument naming the broken field.
void validate_scenario(const ScenarioSpec& spec);

/// Noise-free profile; every other dimension is held at 0.
Episode generate(const ScenarioSpec& spec);

/// What the response metrics measure against.
struct Stimulus {
  Tick onset = 0;
  std::size_t dim = kJawOpen;
  double amplitude = 1.0;
  double baseline = 0.0;  // value before onset
};

Stimulus stimulus_for(const ScenarioSpec& spec);

struct CorpusOptions {
  bool observations = false;
  int obs_height = 72;
  int obs_width = 96;
  double jitter_sigma = 0.01;      // seeded noise added to the driven dimension
  double depth_noise = 0.002;      // meters
  double invalid_fraction = 0.01;  // share of depth pixels reported invalid
};

void validate_corpus_options(const CorpusOptions& options);

/// Synthetic capture for one tick. Depth is about 1 + 0.5*v meters where v
/// is the driven value, with a small horizontal gradient, sensor noise and
/// sparse invalid pixels; the RGB planes carry v and the head pose too.
Observation synthesize_observation(const ActionFrame& frame, std::size_t driven_dim, Tick tick,
                                   std::uint64_t seed, const CorpusOptions& options);

/// One episode per spec, jittered with each spec's seed.
std::vector<Episode> build_corpus(const std::vector<ScenarioSpec>& specs, const CorpusOptions& options);

nlohmann::json to_json(const ScenarioSpec& spec);
/// Throws ConfigError with a JSON path rooted at `path`.
ScenarioSpec scenario_from_json(const nlohmann::json& j, const std::string& path = "$");
CorpusOptions corpus_options_from_json(const nlohmann::json& j, const std::string& path = "$");

}  // namespace fabg
