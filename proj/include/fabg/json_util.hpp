#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <limits>
#include <stdexcept>
#include <string>
#include <string_view>

#include "json.hpp"

namespace fabg {

/// Invalid configuration. `path` is a JSON path such as
/// "$.strategies[2].n".
class ConfigError : public std::invalid_argument {
 public:
  ConfigError(std::string path, const std::string& message)
      : std::invalid_argument(path + ": " + message), path_(std::move(path)) {}
  const std::string& path() const { return path_; }

 private:
  std::string path_;
};

namespace json_util {

using nlohmann::json;

inline std::string member(const std::string& path, std::string_view key) {
  return path + "." + std::string(key);
}
inline std::string element(const std::string& path, std::size_t i) {
  return path + "[" + std::to_string(i) + "]";
}

inline void expect_object(const json& j, const std::string& path) {
  if (!j.is_object()) throw ConfigError(path, "expected an object");
}

/// Rejects keys outside `allowed` so typos do not pass silently.
inline void check_keys(const json& j, const std::string& path, std::initializer_list<std::string_view> allowed) {
  expect_object(j, path);
  for (const auto& [key, value] : j.items()) {
    bool known = false;
    for (auto a : allowed) known = known || a == key;
    if (!known) throw ConfigError(member(path, key), "unknown key");
  }
}

inline double number(const json& j, const std::string& path) {
  if (!j.is_number()) throw ConfigError(path, "expected a number");
  const double v = j.get<double>();
  if (!std::isfinite(v)) throw ConfigError(path, "expected a finite number");
  return v;
}

inline std::int64_t integer(const json& j, const std::string& path) {
  if (!j.is_number_integer()) throw ConfigError(path, "expected an integer");
  return j.get<std::int64_t>();
}

inline std::uint64_t unsigned_integer(const json& j, const std::string& path) {
  if (!j.is_number_integer() || (j.is_number_integer() && !j.is_number_unsigned() && j.get<std::int64_t>() < 0)) {
    throw ConfigError(path, "expected a non-negative integer");
  }
  return j.get<std::uint64_t>();
}

inline bool boolean(const json& j, const std::string& path) {
  if (!j.is_boolean()) throw ConfigError(path, "expected true or false");
  return j.get<bool>();
}

inline std::string string(const json& j, const std::string& path) {
  if (!j.is_string()) throw ConfigError(path, "expected a string");
  return j.get<std::string>();
}

inline const json& require(const json& obj, std::string_view key, const std::string& path) {
  auto it = obj.find(std::string(key));
  if (it == obj.end()) throw ConfigError(member(path, key), "required key missing");
  return *it;
}

inline double number_or(const json& obj, std::string_view key, const std::string& path, double fallback) {
  auto it = obj.find(std::string(key));
  return it == obj.end() ? fallback : number(*it, member(path, key));
}

inline std::int64_t integer_or(const json& obj, std::string_view key, const std::string& path,
                               std::int64_t fallback) {
  auto it = obj.find(std::string(key));
  return it == obj.end() ? fallback : integer(*it, member(path, key));
}

inline bool boolean_or(const json& obj, std::string_view key, const std::string& path, bool fallback) {
  auto it = obj.find(std::string(key));
  return it == obj.end() ? fallback : boolean(*it, member(path, key));
}

/// Integer in [lo, hi].
inline std::int64_t ranged(const json& j, const std::string& path, std::int64_t lo,
                           std::int64_t hi = std::numeric_limits<std::int64_t>::max()) {
  const auto v = integer(j, path);
  if (v < lo || v > hi) {
    throw ConfigError(path, "value " + std::to_string(v) + " out of range [" + std::to_string(lo) + ", " +
                                (hi == std::numeric_limits<std::int64_t>::max() ? std::string("inf")
                                                                                 : std::to_string(hi)) +
                                "]");
  }
  return v;
}

}  // namespace json_util
}  // namespace fabg
