#include "fabg/episode_io.hpp"

#include <cmath>
#include <fstream>
#include <iterator>

#include "fabg/byte_io.hpp"

namespace fabg {

namespace {

constexpr std::size_t kIndexEntryBytes = 3 * sizeof(std::uint16_t) + sizeof(std::uint64_t);

void require(const detail::ByteReader& in, std::size_t n) {
  if (!in.has(n)) throw TruncatedError(in.position() + n, in.size());
}

float to_stored_depth(float v, float marker) {
  if (v == marker || (std::isnan(marker) && std::isnan(v))) return kInvalidDepth;
  return v;
}

}  // namespace

TruncatedError::TruncatedError(std::size_t expected, std::size_t available)
    : FormatError("truncated payload: expected " + std::to_string(expected) + " bytes, " +
                  std::to_string(available) + " available"),
      expected_(expected),
      available_(available) {}

std::vector<std::byte> encode_episode(const Episode& episode, const WriteOptions& options) {
  if (options.invalid_depth_marker == kInvalidDepth) {
    validate_episode(episode);
  } else {
    // Validation knows only +inf as the invalid marker.
    Episode canonical = episode;
    for (auto& o : canonical.observations) {
      if (!o) continue;
      for (float& v : o->depth) v = to_stored_depth(v, options.invalid_depth_marker);
    }
    validate_episode(canonical);
  }
  if (episode.frames.size() > UINT32_MAX) throw std::invalid_argument("too many frames");

  const bool with_obs = !episode.observations.empty();
  std::vector<std::byte> out;
  std::size_t payload = kEpisodeHeaderBytes + episode.frames.size() * kActionDim * sizeof(float);
  if (with_obs) {
    payload += episode.frames.size() * kIndexEntryBytes;
    for (const auto& o : episode.observations) {
      if (o) payload += o->pixel_count() * kObservationPlanes * sizeof(float);
    }
  }
  out.reserve(payload);

  detail::ByteWriter w(out);
  w.tag("FABG");
  w.put<std::uint16_t>(kEpisodeVersion);
  w.put<std::uint16_t>(with_obs ? kFlagObservations : 0);
  w.put<float>(episode.rate_hz);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(episode.frames.size()));
  w.put<std::uint16_t>(static_cast<std::uint16_t>(kActionDim));
  w.put<std::uint16_t>(0);

  for (const auto& frame : episode.frames) {
    for (float v : frame.values) w.put<float>(v);
  }
  if (!with_obs) return out;

  std::uint64_t offset = w.size() + episode.frames.size() * kIndexEntryBytes;
  for (std::size_t t = 0; t < episode.frames.size(); ++t) {
    const Observation* obs = episode.observation_at(static_cast<Tick>(t));
    if (!obs) {
      w.put<std::uint16_t>(0);
      w.put<std::uint16_t>(0);
      w.put<std::uint16_t>(0);
      w.put<std::uint64_t>(0);
      continue;
    }
    w.put<std::uint16_t>(obs->height);
    w.put<std::uint16_t>(obs->width);
    w.put<std::uint16_t>(kObservationPlanes);
    w.put<std::uint64_t>(offset);
    offset += obs->pixel_count() * kObservationPlanes * sizeof(float);
  }
  for (std::size_t t = 0; t < episode.frames.size(); ++t) {
    const Observation* obs = episode.observation_at(static_cast<Tick>(t));
    if (!obs) continue;
    for (float v : obs->rgb_left) w.put<float>(v);
    for (float v : obs->rgb_right) w.put<float>(v);
    for (float v : obs->depth) w.put<float>(to_stored_depth(v, options.invalid_depth_marker));
  }
  return out;
}

Episode decode_episode(std::span<const std::byte> bytes, const ReadOptions& options) {
  detail::ByteReader in(bytes);
  require(in, 4);
  const std::string magic = in.take_string(4);
  if (magic != "FABG") throw BadMagicError("bad magic \"" + magic + "\", expected \"FABG\"");
  require(in, kEpisodeHeaderBytes - 4);
  const auto version = in.get<std::uint16_t>();
  if (version != kEpisodeVersion) {
    throw UnsupportedVersionError("unsupported episode version " + std::to_string(version));
  }
  const auto flags = in.get<std::uint16_t>();
  Episode episode;
  episode.rate_hz = in.get<float>();
  const auto frame_count = in.get<std::uint32_t>();
  const auto action_dim = in.get<std::uint16_t>();
  in.get<std::uint16_t>();  // reserved
  if (action_dim != kActionDim) {
    throw InvalidValueError("action_dim " + std::to_string(action_dim) + ", expected 61");
  }
  if (!(episode.rate_hz > 0.0f) || !std::isfinite(episode.rate_hz)) {
    throw InvalidValueError("rate_hz must be positive and finite");
  }

  require(in, std::size_t{frame_count} * kActionDim * sizeof(float));
  episode.frames.resize(frame_count);
  for (std::uint32_t t = 0; t < frame_count; ++t) {
    for (std::size_t d = 0; d < kActionDim; ++d) {
      const float v = in.get<float>();
      if (std::isnan(v)) {
        throw InvalidValueError("NaN action value at frame " + std::to_string(t) + ", dim " +
                                std::to_string(d));
      }
      episode.frames[t][d] = v;
    }
    auto violations = validate_frame(episode.frames[t]);
    if (!violations.empty()) {
      throw InvalidValueError("frame " + std::to_string(t) + ": " + violations.front().message);
    }
  }

  if ((flags & kFlagObservations) == 0) return episode;

  require(in, std::size_t{frame_count} * kIndexEntryBytes);
  struct Entry {
    std::uint16_t height, width, planes;
    std::uint64_t offset;
  };
  std::vector<Entry> index(frame_count);
  for (auto& e : index) {
    e.height = in.get<std::uint16_t>();
    e.width = in.get<std::uint16_t>();
    e.planes = in.get<std::uint16_t>();
    e.offset = in.get<std::uint64_t>();
  }

  episode.observations.resize(frame_count);
  for (std::uint32_t t = 0; t < frame_count; ++t) {
    const Entry& e = index[t];
    if (e.planes == 0 && e.height == 0 && e.width == 0) continue;
    if (e.planes != kObservationPlanes) {
      throw InvalidValueError("observation at frame " + std::to_string(t) + " has " +
                              std::to_string(e.planes) + " planes, expected 7");
    }
    const std::size_t n = std::size_t{e.height} * e.width;
    const std::size_t blob = n * kObservationPlanes * sizeof(float);
    if (e.offset > bytes.size() || bytes.size() - e.offset < blob) {
      throw TruncatedError(static_cast<std::size_t>(e.offset) + blob, bytes.size());
    }
    in.seek(static_cast<std::size_t>(e.offset));
    Observation obs;
    obs.height = e.height;
    obs.width = e.width;
    obs.tick = t;
    obs.rgb_left.resize(n * 3);
    obs.rgb_right.resize(n * 3);
    obs.depth.resize(n);
    for (auto& v : obs.rgb_left) v = in.get<float>();
    for (auto& v : obs.rgb_right) v = in.get<float>();
    for (auto& v : obs.depth) {
      v = in.get<float>();
      if (std::isinf(v) && v > 0) v = options.invalid_depth_marker;
    }
    episode.observations[t] = std::move(obs);
  }
  return episode;
}

std::vector<std::byte> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open " + path.string());
  std::vector<char> raw((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  std::vector<std::byte> out(raw.size());
  std::memcpy(out.data(), raw.data(), raw.size());
  return out;
}

void write_file_bytes(const std::filesystem::path& path, std::span<const std::byte> bytes) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("cannot write " + path.string());
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw std::runtime_error("write failed for " + path.string());
}

std::size_t write_episode(const Episode& episode, const std::filesystem::path& path,
                          const WriteOptions& options) {
  const auto bytes = encode_episode(episode, options);
  write_file_bytes(path, bytes);
  return bytes.size();
}

Episode read_episode(const std::filesystem::path& path, const ReadOptions& options) {
  return decode_episode(read_file_bytes(path), options);
}

}  // namespace fabg
