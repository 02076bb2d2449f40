#include <catch2/catch_amalgamated.hpp>

#include "vxt/rng.hpp"
#include "vxt/sampler.hpp"

using vxt::Rational;
using vxt::SnippetSpec;
using vxt::Tensor;
using vxt::Video;

namespace {

Video ramp_video(std::size_t frames) {
  // frame f is constant-valued f, so the sampled source index is readable
  // straight off the snippet
  Tensor t({1, frames, 1, 1});
  for (std::size_t f = 0; f < frames; ++f) t[f] = static_cast<double>(f);
  return {std::move(t), {0.0, static_cast<double>(frames)}, "ramp", 0};
}

std::vector<double> snippet_sources(const Video& v, const SnippetSpec& spec) {
  return vxt::extract_snippet(v, spec).values();
}

}  // namespace

TEST_CASE("rational parsing and exactness") {
  REQUIRE(Rational::parse("1/16") == Rational(1, 16));
  REQUIRE(Rational::parse("2") == Rational(2, 1));
  REQUIRE(Rational(4, 8) == Rational(1, 2));
  REQUIRE_THROWS_AS(Rational::parse("0.5"), std::invalid_argument);
  REQUIRE_THROWS_AS(Rational::parse("-1"), std::invalid_argument);
  REQUIRE_THROWS_AS(Rational::parse("x"), std::invalid_argument);
  REQUIRE(Rational(1, 16).str() == "1/16");
  REQUIRE(Rational(32, 1).str() == "32");
}

TEST_CASE("extract_snippet: step 1/16 repeats one frame") {
  const auto v = ramp_video(32);
  const auto got = snippet_sources(v, {5, Rational(1, 16), 16});
  REQUIRE(got == std::vector<double>(16, 5.0));
}

TEST_CASE("extract_snippet: step 1 is the identity window") {
  const auto v = ramp_video(32);
  const auto got = snippet_sources(v, {0, Rational(1, 1), 16});
  for (std::size_t k = 0; k < 16; ++k) REQUIRE(got[k] == static_cast<double>(k));
}

TEST_CASE("extract_snippet: step 2 from offset 8 lands on 8,10,...,38") {
  const auto v = ramp_video(100);
  const auto got = snippet_sources(v, {8, Rational(2, 1), 16});
  for (std::size_t k = 0; k < 16; ++k) REQUIRE(got[k] == static_cast<double>(8 + 2 * k));
}

TEST_CASE("extract_snippet: clamps at the last frame and validates the offset") {
  const auto v = ramp_video(10);
  const auto got = snippet_sources(v, {4, Rational(2, 1), 16});
  REQUIRE(got.size() == 16);
  for (std::size_t k = 0; k < 16; ++k)
    REQUIRE(got[k] == static_cast<double>(std::min<std::size_t>(4 + 2 * k, 9)));
  REQUIRE_THROWS_AS(vxt::extract_snippet(v, {10, Rational(1, 1), 16}), std::invalid_argument);
}

TEST_CASE("extract_snippet: integer steps inside the video hit distinct frames") {
  const auto v = ramp_video(64);
  vxt::Xoshiro256ss rng(12);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t step = 1 + rng.below(3);
    const std::size_t offset = rng.below(64 - 15 * step);
    const auto got = snippet_sources(v, {offset, Rational(static_cast<std::int64_t>(step), 1), 16});
    for (std::size_t k = 1; k < got.size(); ++k) REQUIRE(got[k] > got[k - 1]);
  }
}

TEST_CASE("preprocess: identity when sizes already match") {
  vxt::Xoshiro256ss rng(8);
  Tensor frames({2, 3, 5, 7});
  for (double& v : frames.values()) v = rng.uniform(0.0, 1.0);
  const Tensor out = vxt::preprocess(frames, {5, 7}, {5, 7});
  REQUIRE(out.values() == frames.values());
}

TEST_CASE("preprocess: constants stay constant through resize and crop") {
  const Tensor frames = Tensor::full({1, 2, 6, 9}, 0.37);
  const Tensor out = vxt::preprocess(frames, {128, 171}, {121, 121});
  REQUIRE(out.shape() == std::vector<std::size_t>{1, 2, 121, 121});
  for (double v : out.values()) REQUIRE(v == Catch::Approx(0.37).epsilon(1e-12));
}

TEST_CASE("preprocess: 4x4 ramp to 2x2 matches the closed-form bilinear weights") {
  Tensor frames({1, 1, 4, 4});
  for (std::size_t i = 0; i < 16; ++i) frames[i] = static_cast<double>(i);
  const Tensor out = vxt::preprocess(frames, {2, 2}, {2, 2});
  // sample points fall at (0.5, 0.5) etc., averaging four neighbours
  REQUIRE(out[0] == Catch::Approx(2.5).margin(1e-12));
  REQUIRE(out[1] == Catch::Approx(4.5).margin(1e-12));
  REQUIRE(out[2] == Catch::Approx(10.5).margin(1e-12));
  REQUIRE(out[3] == Catch::Approx(12.5).margin(1e-12));
}

TEST_CASE("preprocess: odd crop margins drop the bottom/right rows") {
  Tensor frames({1, 1, 3, 3});
  for (std::size_t i = 0; i < 9; ++i) frames[i] = static_cast<double>(i);
  const Tensor out = vxt::preprocess(frames, {3, 3}, {2, 2});
  // margin (3-2)=1 -> crop starts at row 0, col 0
  REQUIRE(out.values() == std::vector<double>{0.0, 1.0, 3.0, 4.0});
  REQUIRE_THROWS_AS(vxt::preprocess(frames, {2, 2}, {3, 3}), std::invalid_argument);
}

TEST_CASE("step schedule doubles from 1/16 to 32") {
  const auto schedule = vxt::step_schedule();
  REQUIRE(schedule.size() == 10);
  REQUIRE(schedule.front() == Rational(1, 16));
  REQUIRE(schedule.back() == Rational(32, 1));
  for (std::size_t i = 1; i < schedule.size(); ++i)
    REQUIRE(schedule[i].value() == Catch::Approx(2.0 * schedule[i - 1].value()).epsilon(0));
}

TEST_CASE("offset schedule strides by 8 up to 256") {
  const auto offsets = vxt::offset_schedule();
  REQUIRE(offsets.size() == 33);
  REQUIRE(offsets.front() == 0);
  REQUIRE(offsets.back() == 256);
  for (std::size_t i = 1; i < offsets.size(); ++i) REQUIRE(offsets[i] - offsets[i - 1] == 8);
}
