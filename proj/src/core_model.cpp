#include "fabg/core_model.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace fabg {

namespace {

// ARKit order for the first 52; the remaining six channels are captured by the
// headset but carry no ARKit name.
constexpr std::array<std::string_view, kActionDim> kDimNames = {
    "eyeBlinkLeft",     "eyeLookDownLeft",   "eyeLookInLeft",       "eyeLookOutLeft",
    "eyeLookUpLeft",    "eyeSquintLeft",     "eyeWideLeft",         "eyeBlinkRight",
    "eyeLookDownRight", "eyeLookInRight",    "eyeLookOutRight",     "eyeLookUpRight",
    "eyeSquintRight",   "eyeWideRight",      "jawForward",          "jawLeft",
    "jawRight",         "jawOpen",           "mouthClose",          "mouthFunnel",
    "mouthPucker",      "mouthLeft",         "mouthRight",          "mouthSmileLeft",
    "mouthSmileRight",  "mouthFrownLeft",    "mouthFrownRight",     "mouthDimpleLeft",
    "mouthDimpleRight", "mouthStretchLeft",  "mouthStretchRight",   "mouthRollLower",
    "mouthRollUpper",   "mouthShrugLower",   "mouthShrugUpper",     "mouthPressLeft",
    "mouthPressRight",  "mouthLowerDownLeft", "mouthLowerDownRight", "mouthUpperUpLeft",
    "mouthUpperUpRight", "browDownLeft",     "browDownRight",       "browInnerUp",
    "browOuterUpLeft",  "browOuterUpRight",  "cheekPuff",           "cheekSquintLeft",
    "cheekSquintRight", "noseSneerLeft",     "noseSneerRight",      "tongueOut",
    "extra_0",          "extra_1",           "extra_2",             "extra_3",
    "extra_4",          "extra_5",           "head_roll",           "head_pitch",
    "head_yaw",
};

std::string format_value(double v) {
  std::ostringstream os;
  os << v;
  return os.str();
}

}  // namespace

std::string_view action_dim_name(std::size_t dim) {
  if (dim >= kActionDim) throw std::out_of_range("action dimension out of range");
  return kDimNames[dim];
}

ActionFrame clamp_frame(const ActionFrame& frame) {
  ActionFrame out = frame;
  for (std::size_t i = 0; i < kActionDim; ++i) {
    const float lo = i < kBlendshapeCount ? 0.0f : static_cast<float>(-kPi);
    const float hi = i < kBlendshapeCount ? 1.0f : static_cast<float>(kPi);
    float v = out[i];
    if (std::isnan(v)) v = lo;
    out[i] = std::clamp(v, lo, hi);
  }
  return out;
}

std::vector<Violation> validate_frame(const ActionFrame& frame) {
  std::vector<Violation> out;
  for (std::size_t i = 0; i < kBlendshapeCount; ++i) {
    const double v = frame[i];
    if (!(v >= 0.0 && v <= 1.0)) {
      std::string field = "blendshapes[" + std::to_string(i) + "]";
      out.push_back({field, v, field + " out of [0,1] (value " + format_value(v) + ")"});
    }
  }
  for (std::size_t i = 0; i < kHeadAngleCount; ++i) {
    const double v = frame[kBlendshapeCount + i];
    // float(pi) rounds above pi; compare against the float-representable bound
    const double bound = static_cast<float>(kPi);
    if (!(v >= -bound && v <= bound)) {
      std::string field = "head_rpy[" + std::to_string(i) + "]";
      out.push_back({field, v, field + " out of [-π, π] (value " + format_value(v) + ")"});
    }
  }
  return out;
}

void validate_observation(const Observation& obs) {
  const std::size_t n = obs.pixel_count();
  if (obs.rgb_left.size() != n * 3 || obs.rgb_right.size() != n * 3 || obs.depth.size() != n) {
    throw std::invalid_argument("observation planes do not match shape " +
                                std::to_string(obs.height) + "x" + std::to_string(obs.width));
  }
  auto check_rgb = [](const std::vector<float>& plane, const char* name) {
    for (float v : plane) {
      if (!(v >= 0.0f && v <= 1.0f)) {
        throw std::invalid_argument(std::string(name) + " intensity out of [0,1]");
      }
    }
  };
  check_rgb(obs.rgb_left, "rgb_left");
  check_rgb(obs.rgb_right, "rgb_right");
  for (float v : obs.depth) {
    if (std::isnan(v) || v < 0.0f) throw std::invalid_argument("depth must be >= 0 or the invalid marker");
  }
}

bool Episode::has_observations() const {
  return std::any_of(observations.begin(), observations.end(),
                     [](const auto& o) { return o.has_value(); });
}

const Observation* Episode::observation_at(Tick t) const {
  if (t < 0 || static_cast<std::size_t>(t) >= observations.size()) return nullptr;
  const auto& slot = observations[static_cast<std::size_t>(t)];
  return slot ? &*slot : nullptr;
}

void validate_episode(const Episode& episode) {
  if (!(episode.rate_hz > 0.0f) || !std::isfinite(episode.rate_hz)) {
    throw std::invalid_argument("rate_hz must be positive and finite");
  }
  for (std::size_t t = 0; t < episode.frames.size(); ++t) {
    auto violations = validate_frame(episode.frames[t]);
    if (!violations.empty()) {
      throw std::invalid_argument("frame " + std::to_string(t) + ": " + violations.front().message);
    }
  }
  if (!episode.observations.empty()) {
    if (episode.observations.size() != episode.frames.size()) {
      throw std::invalid_argument("observation slots must match frame count");
    }
    for (std::size_t t = 0; t < episode.observations.size(); ++t) {
      const auto& obs = episode.observations[t];
      if (!obs) continue;
      if (obs->tick != static_cast<Tick>(t)) {
        throw std::invalid_argument("observation tick " + std::to_string(obs->tick) +
                                    " stored at frame " + std::to_string(t));
      }
      validate_observation(*obs);
    }
  }
}

void validate_latency(const LatencyModel& latency) {
  if (latency.perception < 0 || latency.inference < 0 || latency.communication < 0) {
    throw std::invalid_argument("latency components must be non-negative");
  }
}

ActionChunk slice_chunk(const Episode& episode, Tick t, std::size_t k) {
  if (k == 0) throw std::invalid_argument("chunk length must be >= 1");
  if (t < 0 || static_cast<std::size_t>(t) >= episode.frames.size()) {
    throw std::out_of_range("t beyond episode end");
  }
  ActionChunk chunk;
  chunk.origin_tick = t;
  chunk.actions.reserve(k);
  const std::size_t last = episode.frames.size() - 1;
  for (std::size_t i = 0; i < k; ++i) {
    std::size_t src = static_cast<std::size_t>(t) + i;
    if (src > last) {
      src = last;
      chunk.padded = true;
    }
    chunk.actions.push_back(episode.frames[src]);
  }
  return chunk;
}

}  // namespace fabg
