#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace fabg {

using Tick = std::int64_t;

inline constexpr std::size_t kBlendshapeCount = 58;
inline constexpr std::size_t kHeadAngleCount = 3;
inline constexpr std::size_t kActionDim = kBlendshapeCount + kHeadAngleCount;

// Positional indices into an ActionFrame. Blendshape names are metadata only
// (see docs/blendshapes.md); storage is positional.
inline constexpr std::size_t kJawOpen = 17;
inline constexpr std::size_t kHeadRoll = kBlendshapeCount + 0;
inline constexpr std::size_t kHeadPitch = kBlendshapeCount + 1;
inline constexpr std::size_t kHeadYaw = kBlendshapeCount + 2;

inline constexpr double kPi = 3.14159265358979323846;

/// Name of action dimension `dim`, e.g. "jawOpen" or "head_yaw".
std::string_view action_dim_name(std::size_t dim);

/// One commanded pose: 58 blendshape coefficients in [0,1] followed by head
/// roll/pitch/yaw in radians.
struct ActionFrame {
  std::array<float, kActionDim> values{};

  float& operator[](std::size_t i) { return values[i]; }
  float operator[](std::size_t i) const { return values[i]; }

  std::span<const float, kBlendshapeCount> blendshapes() const {
    return std::span<const float, kActionDim>(values).first<kBlendshapeCount>();
  }
  std::span<const float, kHeadAngleCount> head_rpy() const {
    return std::span<const float, kActionDim>(values).last<kHeadAngleCount>();
  }

  bool operator==(const ActionFrame&) const = default;
};

/// Clamps every component into its valid range. NaN components become the
/// lower bound.
ActionFrame clamp_frame(const ActionFrame& frame);

struct Violation {
  std::string field;  // e.g. "blendshapes[12]"
  double value = 0.0;
  std::string message;  // e.g. "blendshapes[12] out of [0,1]"
};

/// Empty result means the frame is valid.
std::vector<Violation> validate_frame(const ActionFrame& frame);

inline bool is_valid_frame(const ActionFrame& frame) { return validate_frame(frame).empty(); }

/// k future actions predicted at one tick. actions[i] predicts tick
/// origin_tick + i. `padded` is set when the source ran out and the last
/// frame was repeated.
struct ActionChunk {
  std::vector<ActionFrame> actions;
  Tick origin_tick = 0;
  bool padded = false;

  std::size_t size() const { return actions.size(); }
  bool operator==(const ActionChunk&) const = default;
};

/// Stereo RGB + depth capture. RGB planes are height x width x 3 interleaved,
/// depth is height x width in meters; invalid depth pixels carry the episode's
/// invalid marker (default +inf).
struct Observation {
  std::uint16_t height = 0;
  std::uint16_t width = 0;
  std::vector<float> rgb_left;
  std::vector<float> rgb_right;
  std::vector<float> depth;
  Tick tick = 0;

  std::size_t pixel_count() const { return std::size_t{height} * width; }
  bool operator==(const Observation&) const = default;
};

inline constexpr float kInvalidDepth = std::numeric_limits<float>::infinity();

/// Throws std::invalid_argument when plane sizes disagree with the shape, an
/// RGB value is outside [0,1] or a depth value is negative or NaN.
void validate_observation(const Observation& obs);

/// A demonstration: one ActionFrame per tick starting at tick 0, optionally
/// paired with an Observation. `observations` is either empty or has one slot
/// per frame (slots may be empty).
struct Episode {
  float rate_hz = 30.0f;
  std::vector<ActionFrame> frames;
  std::vector<std::optional<Observation>> observations;

  std::size_t size() const { return frames.size(); }
  bool has_observations() const;
  const Observation* observation_at(Tick t) const;

  bool operator==(const Episode&) const = default;
};

/// Throws std::invalid_argument naming the first broken invariant.
void validate_episode(const Episode& episode);

/// Delay sources, all in control ticks.
struct LatencyModel {
  int perception = 0;     // age of the observation the policy sees
  int inference = 0;      // policy compute time
  int communication = 0;  // transport to the actuators

  int total() const { return perception + inference + communication; }
  /// Ticks between issuing a query and its chunk becoming executable.
  int dispatch() const { return inference + communication; }
  bool operator==(const LatencyModel&) const = default;
};

void validate_latency(const LatencyModel& latency);

/// Ground-truth chunk for ticks t..t+k-1; the last frame is repeated past
/// the end of the episode. Throws std::out_of_range("t beyond episode end")
/// when t is not inside the episode.
ActionChunk slice_chunk(const Episode& episode, Tick t, std::size_t k);

}  // namespace fabg
