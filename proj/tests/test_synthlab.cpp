#include <catch2/catch_amalgamated.hpp>

#include <set>

#include "vxt/network.hpp"
#include "vxt/rng.hpp"
#include "vxt/synthlab.hpp"

using vxt::NetworkSpec;
using vxt::SynthConfig;
using vxt::Tensor;
using vxt::TrainConfig;
using vxt::Video;

TEST_CASE("splitmix64 reproduces the published sequence") {
  vxt::SplitMix64 sm(0);
  REQUIRE(sm.next() == 0xE220A8397B1DCDAFULL);
  REQUIRE(sm.next() == 0x6E789E6AA1B965F4ULL);
  REQUIRE(sm.next() == 0x06C45D188009454FULL);
}

TEST_CASE("xoshiro256** frozen reference outputs") {
  vxt::Xoshiro256ss rng(42);
  REQUIRE(rng.next() == 0x15780B2E0C2EC716ULL);
  REQUIRE(rng.next() == 0x6104D9866D113A7EULL);
  REQUIRE(rng.next() == 0xAE17533239E499A1ULL);

  vxt::Xoshiro256ss zero(0);
  REQUIRE(zero.next() == 0x99EC5F36CB75F2B4ULL);
  REQUIRE(zero.next() == 0xBF6E1F784956452AULL);

  vxt::Xoshiro256ss d(42);
  REQUIRE(d.next_double() == Catch::Approx(0.08386297105988216).margin(1e-18));
  REQUIRE(d.next_double() == Catch::Approx(0.3789802506626686).margin(1e-18));
}

TEST_CASE("box-muller normals are deterministic and sane") {
  vxt::Xoshiro256ss a(5), b(5);
  double mean = 0.0, var = 0.0;
  std::vector<double> draws(4000);
  for (double& v : draws) v = a.normal();
  for (double v : draws) mean += v;
  mean /= draws.size();
  for (double v : draws) var += (v - mean) * (v - mean);
  var /= draws.size();
  REQUIRE(std::fabs(mean) < 0.05);
  REQUIRE(var == Catch::Approx(1.0).epsilon(0.1));
  for (double v : draws) REQUIRE(v == b.normal());
}

TEST_CASE("generate_dataset: determinism, balance, clipping") {
  SynthConfig config;
  config.class_count = 8;
  config.frames = 16;
  config.noise_std = 0.1;
  config.seed = 77;
  const auto a = vxt::generate_dataset(config, 19);
  const auto b = vxt::generate_dataset(config, 19);
  REQUIRE(a.size() == 19);
  std::vector<std::size_t> counts(8, 0);
  for (std::size_t i = 0; i < a.size(); ++i) {
    REQUIRE(a[i].frames.values() == b[i].frames.values());
    REQUIRE(a[i].id == b[i].id);
    REQUIRE(a[i].true_class == i % 8);
    ++counts[a[i].true_class];
    for (double v : a[i].frames.values()) {
      REQUIRE(v >= 0.0);
      REQUIRE(v <= 1.0);
    }
  }
  const auto [lo, hi] = std::minmax_element(counts.begin(), counts.end());
  REQUIRE(*hi - *lo <= 1);

  REQUIRE_THROWS_AS(vxt::generate_dataset(config, 4), std::invalid_argument);
  SynthConfig bad = config;
  bad.bar_width = 99;
  REQUIRE_THROWS_AS(vxt::generate_dataset(bad, 19), std::invalid_argument);
}

TEST_CASE("generate_dataset: different seeds change the data") {
  SynthConfig config;
  config.class_count = 2;
  config.frames = 8;
  config.seed = 1;
  SynthConfig other = config;
  other.seed = 2;
  const auto a = vxt::generate_dataset(config, 2);
  const auto b = vxt::generate_dataset(other, 2);
  REQUIRE(a[0].frames.values() != b[0].frames.values());
}

TEST_CASE("cue variant: non-cue frames come from the class-free path") {
  SynthConfig config;
  config.class_count = 8;
  config.frames = 16;
  config.cue_frames = {14, 15};
  config.noise_std = 0.0;
  config.seed = 31;
  const auto videos = vxt::generate_dataset(config, 16);
  const std::set<std::size_t> cues(config.cue_frames.begin(), config.cue_frames.end());
  for (std::size_t i = 0; i < videos.size(); ++i) {
    const Tensor base = vxt::render_base(config, i);
    const auto& frames = videos[i].frames;
    const std::size_t frame_elems = config.height * config.width;
    for (std::size_t f = 0; f < config.frames; ++f) {
      if (cues.count(f)) continue;
      for (std::size_t e = 0; e < frame_elems; ++e)
        REQUIRE(frames[f * frame_elems + e] == base[f * frame_elems + e]);
    }
  }
  // and the cue frames do differ between classes
  REQUIRE(videos[0].frames.values() != videos[1].frames.values());
}

namespace {

NetworkSpec tiny_net(std::size_t classes) {
  NetworkSpec net;
  net.input_shape = {1, 4, 8, 8};
  net.class_count = classes;
  net.layers = {vxt::Conv3D{1, 4, {2, 3, 3}, {1, 1, 1}, {0, 1, 1}, true},
                vxt::ReLU{},
                vxt::MaxPool3D{{1, 2, 2}, {1, 2, 2}},
                vxt::Flatten{},
                vxt::Dense{4 * 3 * 4 * 4, classes, true}};
  net.params.resize(5);
  net.params[0] = {Tensor({4, 1, 2, 3, 3}), Tensor({4})};
  net.params[4] = {Tensor({classes, 192}), Tensor({classes})};
  net.validate();
  return net;
}

std::vector<Video> tiny_task(std::size_t count, std::uint64_t seed) {
  SynthConfig config;
  config.class_count = 2;
  config.frames = 4;
  config.height = 8;
  config.width = 8;
  config.bar_width = 2;
  config.noise_std = 0.02;
  config.seed = seed;
  return vxt::generate_dataset(config, count);
}

}  // namespace

TEST_CASE("untrained: seed-deterministic initialization") {
  const auto net = tiny_net(2);
  const auto a = vxt::untrained(net, 9);
  const auto b = vxt::untrained(net, 9);
  const auto c = vxt::untrained(net, 10);
  REQUIRE(a.params[0].weight.values() == b.params[0].weight.values());
  REQUIRE(a.params[0].weight.values() != c.params[0].weight.values());
  for (double v : a.params[0].bias.values()) REQUIRE(v == 0.0);

  vxt::Xoshiro256ss rng(1);
  Tensor input({1, 4, 8, 8});
  for (double& v : input.values()) v = rng.uniform(0.0, 1.0);
  for (double z : vxt::predict(a, input).first) REQUIRE(std::isfinite(z));
}

TEST_CASE("train: zero learning rate returns the initial parameters bit-wise") {
  const auto net = tiny_net(2);
  const auto videos = tiny_task(4, 3);
  TrainConfig config;
  config.learning_rate = 0.0;
  config.epochs = 2;
  config.seed = 123;
  const auto trained = vxt::train(net, videos, config);
  const auto init = vxt::untrained(net, 123);
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    REQUIRE(trained.params[l].weight.values() == init.params[l].weight.values());
    REQUIRE(trained.params[l].bias.values() == init.params[l].bias.values());
  }
}

TEST_CASE("train: one small step decreases the loss on a fixed batch") {
  const auto net = tiny_net(2);
  const auto videos = tiny_task(4, 5);
  TrainConfig config;
  config.learning_rate = 0.01;
  config.epochs = 1;
  config.batch_size = 4;  // one batch, so the step uses the full-batch gradient
  config.seed = 21;
  const auto before = vxt::untrained(net, 21);
  const auto after = vxt::train(net, videos, config);
  REQUIRE(vxt::dataset_loss(after, videos) < vxt::dataset_loss(before, videos));
}

TEST_CASE("train: separable two-class task reaches high accuracy") {
  const auto net = tiny_net(2);
  const auto videos = tiny_task(16, 7);
  TrainConfig config;
  config.learning_rate = 0.05;
  config.epochs = 50;
  config.batch_size = 4;
  config.seed = 99;
  const auto model = vxt::train(net, videos, config);
  std::size_t correct = 0;
  for (const auto& video : videos) {
    const Tensor snippet = vxt::extract_snippet(video, {0, vxt::Rational(1, 1), 4});
    if (vxt::predict(model, snippet).second == video.true_class) ++correct;
  }
  REQUIRE(static_cast<double>(correct) / videos.size() >= 0.95);
}

TEST_CASE("train: full determinism of the trained bytes") {
  const auto net = tiny_net(2);
  const auto videos = tiny_task(8, 11);
  TrainConfig config;
  config.learning_rate = 0.05;
  config.epochs = 3;
  config.seed = 8;
  const auto a = vxt::train(net, videos, config);
  const auto b = vxt::train(net, videos, config);
  for (std::size_t l = 0; l < net.layers.size(); ++l)
    REQUIRE(a.params[l].weight.values() == b.params[l].weight.values());
}

TEST_CASE("train: rejects bad labels and bad configs") {
  const auto net = tiny_net(2);
  auto videos = tiny_task(4, 13);
  TrainConfig config;
  config.epochs = 0;
  REQUIRE_THROWS_AS(vxt::train(net, videos, config), std::invalid_argument);
  config.epochs = 1;
  videos[0].true_class = 7;
  REQUIRE_THROWS_AS(vxt::train(net, videos, config), std::invalid_argument);
}
