#include <cmath>
#include <cstring>
#include <filesystem>
#include <limits>

#include "doctest.h"
#include "fabg/core_model.hpp"
#include "fabg/episode_io.hpp"
#include "test_util.hpp"

using namespace fabg;

TEST_CASE("dimension names and indices") {
  CHECK(action_dim_name(0) == "eyeBlinkLeft");
  CHECK(action_dim_name(kJawOpen) == "jawOpen");
  CHECK(action_dim_name(kHeadRoll) == "head_roll");
  CHECK(action_dim_name(kHeadYaw) == "head_yaw");
  CHECK(kActionDim == 61);
}

TEST_CASE("validate_frame") {
  ActionFrame f;
  CHECK(is_valid_frame(f));

  f[12] = 1.5f;
  auto v = validate_frame(f);
  REQUIRE(v.size() == 1);
  CHECK(v[0].field == "blendshapes[12]");
  CHECK(v[0].value == doctest::Approx(1.5));

  f[12] = 0.5f;
  f[kHeadYaw] = 4.0f;  // beyond pi
  CHECK_FALSE(is_valid_frame(f));
  f[kHeadYaw] = -3.0f;
  CHECK(is_valid_frame(f));

  f[3] = std::numeric_limits<float>::quiet_NaN();
  CHECK_FALSE(is_valid_frame(f));
}

TEST_CASE("clamp_frame") {
  ActionFrame f;
  f[0] = -0.2f;
  f[1] = 1.2f;
  f[2] = std::numeric_limits<float>::quiet_NaN();
  f[kHeadPitch] = 10.0f;
  const auto c = clamp_frame(f);
  CHECK(c[0] == 0.0f);
  CHECK(c[1] == 1.0f);
  CHECK(c[2] == 0.0f);
  CHECK(c[kHeadPitch] == doctest::Approx(kPi));
  CHECK(is_valid_frame(c));
}

TEST_CASE("slice_chunk") {
  std::vector<double> v;
  for (int t = 0; t < 10; ++t) v.push_back(t / 10.0);
  const auto ep = testutil::scalar_episode(v);

  const auto c0 = slice_chunk(ep, 0, 5);
  REQUIRE(c0.size() == 5);
  CHECK_FALSE(c0.padded);
  for (int i = 0; i < 5; ++i) CHECK(c0.actions[i] == ep.frames[i]);

  const auto c8 = slice_chunk(ep, 8, 5);
  CHECK(c8.padded);
  CHECK(c8.origin_tick == 8);
  const int expect[] = {8, 9, 9, 9, 9};
  for (int i = 0; i < 5; ++i) CHECK(c8.actions[i] == ep.frames[expect[i]]);

  CHECK_THROWS_AS(slice_chunk(ep, 10, 5), std::out_of_range);
  CHECK_THROWS_AS(slice_chunk(ep, -1, 5), std::out_of_range);
}

TEST_CASE("latency model") {
  LatencyModel l{1, 2, 3};
  CHECK(l.total() == 6);
  CHECK(l.dispatch() == 5);
  CHECK_NOTHROW(validate_latency(l));
  CHECK_THROWS(validate_latency(LatencyModel{-1, 0, 0}));
}

TEST_CASE("episode encoding sizes") {
  Episode empty;
  CHECK(encode_episode(empty).size() == 20);
  Episode one = testutil::scalar_episode({0.5});
  CHECK(encode_episode(one).size() == 264);
}

TEST_CASE("episode round trip, randomized") {
  Rng rng(42);
  const auto dir = std::filesystem::temp_directory_path() / "fabg_test_core";
  std::filesystem::create_directories(dir);
  for (int i = 0; i < 30; ++i) {
    const auto ep = testutil::random_episode(rng, i % 2 == 1);
    const auto path = dir / ("ep" + std::to_string(i) + ".fabg");
    const auto bytes = write_episode(ep, path);
    CHECK(bytes == std::filesystem::file_size(path));
    const auto back = read_episode(path);
    CHECK(back == ep);
    // bit-identical: re-encoding gives the same bytes
    CHECK(encode_episode(back) == read_file_bytes(path));
  }
  std::filesystem::remove_all(dir);
}

TEST_CASE("observation with invalid depth survives") {
  Rng rng(3);
  Episode ep = testutil::scalar_episode({0.1, 0.2});
  ep.observations.resize(2);
  ep.observations[1] = testutil::random_observation(rng, 4, 5, 1);
  ep.observations[1]->depth[0] = kInvalidDepth;
  const auto back = decode_episode(encode_episode(ep));
  REQUIRE(back.observation_at(1) != nullptr);
  CHECK(std::isinf(back.observation_at(1)->depth[0]));
  CHECK(back.observation_at(0) == nullptr);
  CHECK(back == ep);
}

TEST_CASE("custom invalid depth marker") {
  Episode ep = testutil::scalar_episode({0.1});
  Rng rng(5);
  ep.observations.resize(1);
  ep.observations[0] = testutil::random_observation(rng, 2, 2, 0);
  for (float& v : ep.observations[0]->depth) v = 1.0f;
  ep.observations[0]->depth[1] = -1.0f;
  WriteOptions w;
  w.invalid_depth_marker = -1.0f;
  const auto bytes = encode_episode(ep, w);
  const auto plain = decode_episode(bytes);
  CHECK(std::isinf(plain.observations[0]->depth[1]));
  ReadOptions r;
  r.invalid_depth_marker = -1.0f;
  CHECK(decode_episode(bytes, r) == ep);
}

TEST_CASE("corrupt episodes are rejected") {
  const auto ep = testutil::ramp_episode(5);
  auto bytes = encode_episode(ep);

  SUBCASE("bad magic") {
    bytes[0] = std::byte{'X'};
    CHECK_THROWS_AS(decode_episode(bytes), BadMagicError);
  }
  SUBCASE("unsupported version") {
    bytes[4] = std::byte{9};
    CHECK_THROWS_AS(decode_episode(bytes), UnsupportedVersionError);
  }
  SUBCASE("truncated payload") {
    bytes.resize(bytes.size() - 3);
    try {
      decode_episode(bytes);
      FAIL("expected TruncatedError");
    } catch (const TruncatedError& e) {
      CHECK(e.expected() == 20 + 5 * 244);
      CHECK(e.available() == 20 + 5 * 244 - 3);
    }
  }
  SUBCASE("truncated header") {
    bytes.resize(10);
    CHECK_THROWS_AS(decode_episode(bytes), TruncatedError);
  }
  SUBCASE("NaN action") {
    const float nan = std::numeric_limits<float>::quiet_NaN();
    std::memcpy(bytes.data() + 20 + 4 * 3, &nan, 4);
    CHECK_THROWS_AS(decode_episode(bytes), InvalidValueError);
  }
  SUBCASE("all errors derive from FormatError") {
    bytes[1] = std::byte{0};
    CHECK_THROWS_AS(decode_episode(bytes), FormatError);
  }
}

TEST_CASE("write_episode validates first") {
  Episode ep = testutil::scalar_episode({2.0});  // out of [0,1]
  CHECK_THROWS_AS(write_episode(ep, std::filesystem::temp_directory_path() / "fabg_bad.fabg"),
                  std::invalid_argument);
}
