#include <doctest.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <functional>
#include <filesystem>
#include <limits>

#include "helpers.hpp"
#include "svj/error.hpp"
#include "svj/latents.hpp"

using namespace svj;

namespace {

ErrorCode code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected svj::Error");
  return ErrorCode::kConfigError;
}

std::filesystem::path temp_file(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("svj_latents_" + name);
}

}  // namespace

TEST_CASE("validate accepts zeros and rejects NaN and empty clips") {
  CHECK_NOTHROW(validate(LatentVideo::zeros({4, 2, 4, 4})));
  auto data = std::vector<float>(VideoShape{4, 2, 4, 4}.size(), 0.0f);
  data[17] = std::numeric_limits<float>::quiet_NaN();
  const LatentVideo bad({4, 2, 4, 4}, data, {});
  CHECK(code_of([&] { validate(bad); }) == ErrorCode::kNonFinite);
  CHECK(code_of([] { validate(LatentVideo::zeros({0, 2, 4, 4})); }) == ErrorCode::kEmptyVideo);
  CHECK(code_of([] { validate(LatentVideo::zeros({3, 2, 4, 4}), SpatialShape{2, 4, 5}); }) ==
        ErrorCode::kShapeMismatch);
  VideoMeta m;
  m.seconds_per_latent_frame = 0.0;
  CHECK(code_of([&] { validate(LatentVideo::zeros({3, 2, 4, 4}, m)); }) ==
        ErrorCode::kConfigError);
}

TEST_CASE("payload size must match the shape") {
  CHECK(code_of([] { LatentVideo({2, 2, 2, 2}, std::vector<float>(15), {}); }) ==
        ErrorCode::kShapeMismatch);
}

TEST_CASE("layout is time, channel, row, column") {
  const auto v = test::random_video({3, 2, 4, 5}, 1);
  const auto data = v.data();
  CHECK(v.at(2, 1, 3, 4) == data[((2 * 2 + 1) * 4 + 3) * 5 + 4]);
  CHECK(v.frame(1)[0] == v.at(1, 0, 0, 0));
  CHECK(v.duration_seconds() == doctest::Approx(3 * 6.0 / 9.0));
}

TEST_CASE("truncation with probability 0 is the identity") {
  Rng rng(4);
  for (int i = 0; i < 50; ++i) {
    const auto v = test::random_video({9, 2, 4, 4}, static_cast<std::uint64_t>(i));
    CHECK(truncate(v, TruncationConfig{0.0, 2.0, 6.0}, rng) == v);
  }
}

TEST_CASE("full-duration window keeps the whole clip") {
  Rng rng(5);
  const auto v = test::random_video({9, 2, 4, 4}, 5);
  const auto out = truncate(v, TruncationConfig{1.0, 6.0, 6.0}, rng);
  CHECK(out.frames() == 9);
  CHECK(out == v);
}

TEST_CASE("half-duration window is a contiguous slice of the source") {
  const auto v = test::random_video({9, 2, 4, 4}, 6);
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(seed);
    const auto w = draw_truncation(9, 6.0 / 9.0, TruncationConfig{1.0, 3.0, 3.0}, rng);
    REQUIRE(w.has_value());
    // 3 s at 2/3 s per frame is 4.5 frames, rounded down.
    CHECK(w->count == 4);
    const auto out = apply_window(v, w);
    for (int t = 0; t < out.frames(); ++t) {
      for (int c = 0; c < 2; ++c) {
        for (int h = 0; h < 4; ++h) {
          for (int x = 0; x < 4; ++x) CHECK(out.at(t, c, h, x) == v.at(w->start + t, c, h, x));
        }
      }
    }
    CHECK(out.meta() == v.meta());
  }
}

TEST_CASE("window lengths stay within the configured seconds and starts cover the clip") {
  Rng rng(9);
  std::vector<int> starts(9, 0);
  for (int i = 0; i < 5000; ++i) {
    const auto w = draw_truncation(9, 6.0 / 9.0, TruncationConfig{1.0, 2.0, 6.0}, rng);
    REQUIRE(w.has_value());
    CHECK(w->count >= 3);
    CHECK(w->count <= 9);
    CHECK(w->start + w->count <= 9);
    ++starts[static_cast<std::size_t>(w->start)];
  }
  CHECK(starts[0] > 0);
  CHECK(starts[6] > 0);
}

TEST_CASE("truncation probability is respected") {
  Rng rng(10);
  int hits = 0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) {
    hits += draw_truncation(9, 6.0 / 9.0, TruncationConfig{0.25, 2.0, 6.0}, rng).has_value();
  }
  CHECK(static_cast<double>(hits) / n == doctest::Approx(0.25).epsilon(0.04));
}

TEST_CASE("min_seconds beyond the clip duration is a config error") {
  Rng rng(1);
  CHECK(code_of([&] { draw_truncation(2, 6.0 / 9.0, TruncationConfig{1.0, 2.0, 6.0}, rng); }) ==
        ErrorCode::kConfigError);
  CHECK(code_of([&] { draw_truncation(9, 6.0 / 9.0, TruncationConfig{0.5, 4.0, 3.0}, rng); }) ==
        ErrorCode::kConfigError);
}

TEST_CASE("dataset round trip is exact") {
  SUBCASE("empty list") {
    const auto path = temp_file("empty.svjl");
    save_dataset({}, path);
    CHECK(load_dataset(path).empty());
    CHECK(std::filesystem::exists(sidecar_path(path)));
  }
  SUBCASE("one zero clip") {
    const auto path = temp_file("zero.svjl");
    const std::vector<LatentVideo> in = {LatentVideo::zeros({2, 1, 2, 2})};
    save_dataset(in, path);
    CHECK(load_dataset(path) == in);
  }
  SUBCASE("100 random clips with metadata") {
    const auto path = temp_file("many.svjl");
    std::vector<LatentVideo> in;
    for (int i = 0; i < 100; ++i) {
      VideoMeta m;
      m.source_kind = static_cast<SourceKind>(i % 3);
      m.seconds_per_latent_frame = 0.1 + i / 7.0;
      m.compression_f = 1 + i % 9;
      m.origin_id = "clip=" + std::to_string(i);
      in.push_back(test::random_video({1 + i % 5, 1 + i % 3, 2 + i % 2, 3}, 100 + i, m));
    }
    save_dataset(in, path);
    const auto out = load_dataset(path);
    REQUIRE(out.size() == in.size());
    for (std::size_t i = 0; i < in.size(); ++i) {
      CHECK(out[i].meta() == in[i].meta());
      CHECK(std::equal(out[i].data().begin(), out[i].data().end(), in[i].data().begin(),
                       [](float a, float b) { return std::bit_cast<std::uint32_t>(a) ==
                                                    std::bit_cast<std::uint32_t>(b); }));
    }
  }
}

TEST_CASE("loading rejects a bad magic and a missing file") {
  const auto path = temp_file("bad.svjl");
  {
    std::ofstream out(path, std::ios::binary);
    out << "NOPE0000";
  }
  CHECK(code_of([&] { load_dataset(path); }) == ErrorCode::kFormatError);
  CHECK(code_of([] { load_dataset("/nonexistent/dir/x.svjl"); }) == ErrorCode::kIOError);
}
