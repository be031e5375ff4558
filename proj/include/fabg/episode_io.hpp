#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <vector>

#include "fabg/core_model.hpp"

namespace fabg {

// Episode container, little-endian:
//   "FABG" | version u16 = 1 | flags u16 | rate_hz f32 | frame_count u32 |
//   action_dim u16 = 61 | reserved u16 = 0                      (20 bytes)
//   frame_count x 61 f32 actions
//   if flags bit 0: frame_count x (height u16, width u16, planes u16, offset u64)
//                   followed by raw f32 tensors (rgb_left, rgb_right, depth)
// A frame without an observation has shape (0,0,0) and offset 0. Offsets are
// absolute byte positions in the file. Invalid depth pixels are stored as +inf.

inline constexpr std::size_t kEpisodeHeaderBytes = 20;
inline constexpr std::uint16_t kEpisodeVersion = 1;
inline constexpr std::uint16_t kFlagObservations = 0x1;
inline constexpr std::uint16_t kObservationPlanes = 7;  // 3 + 3 + 1

class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class BadMagicError : public FormatError {
 public:
  using FormatError::FormatError;
};

class UnsupportedVersionError : public FormatError {
 public:
  using FormatError::FormatError;
};

class TruncatedError : public FormatError {
 public:
  TruncatedError(std::size_t expected, std::size_t available);
  std::size_t expected() const { return expected_; }
  std::size_t available() const { return available_; }

 private:
  std::size_t expected_;
  std::size_t available_;
};

/// NaN action, out-of-range action, bad rate or inconsistent observation block.
class InvalidValueError : public FormatError {
 public:
  using FormatError::FormatError;
};

struct ReadOptions {
  // In-memory marker substituted for stored +inf depth pixels.
  float invalid_depth_marker = kInvalidDepth;
};

struct WriteOptions {
  // In-memory marker that is written out as +inf.
  float invalid_depth_marker = kInvalidDepth;
};

std::vector<std::byte> encode_episode(const Episode& episode, const WriteOptions& options = {});
Episode decode_episode(std::span<const std::byte> bytes, const ReadOptions& options = {});

/// Returns the number of bytes written. Throws std::invalid_argument when the
/// episode breaks an invariant and std::runtime_error when the file cannot be
/// written.
std::size_t write_episode(const Episode& episode, const std::filesystem::path& path,
                          const WriteOptions& options = {});
Episode read_episode(const std::filesystem::path& path, const ReadOptions& options = {});

std::vector<std::byte> read_file_bytes(const std::filesystem::path& path);
void write_file_bytes(const std::filesystem::path& path, std::span<const std::byte> bytes);

}  // namespace fabg
