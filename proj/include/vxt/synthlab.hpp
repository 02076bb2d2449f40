#pragma once

// Deterministic synthetic video tasks plus plain SGD training of the small
// classifier nets. Every byte of a dataset and every trained parameter is a
// pure function of the configured seeds.

#include <cmath>
#include <cstdint>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "vxt/network.hpp"
#include "vxt/rng.hpp"
#include "vxt/sampler.hpp"
#include "vxt/tensor.hpp"

namespace vxt {

class divergence_error : public std::runtime_error {
 public:
  explicit divergence_error(std::size_t epoch)
      : std::runtime_error("training diverged (non-finite loss) at epoch " +
                           std::to_string(epoch)),
        epoch(epoch) {}
  std::size_t epoch;
};

struct SynthConfig {
  std::size_t class_count = 8;
  std::size_t frames = 64;
  std::size_t height = 24;
  std::size_t width = 24;
  std::size_t channels = 1;
  double motion_speed = 1.0;             // base pixels/frame; per-class speeds scale it
  std::vector<std::size_t> cue_frames;   // empty: motion encodes the class
  double noise_std = 0.0;
  std::array<double, 2> pixel_range{0.0, 1.0};
  std::uint64_t seed = 0;
  std::size_t bar_width = 3;
};

struct TrainConfig {
  double learning_rate = 0.05;
  std::size_t epochs = 30;
  std::size_t batch_size = 8;
  std::uint64_t seed = 0;
  double weight_init = 1.0;  // per-layer uniform scale / sqrt(fan_in)
};

namespace detail {

constexpr double kBarIntensity = 0.4;
constexpr double kCueIntensity = 1.0;

struct BarMotion {
  std::size_t orientation;  // 0: vertical bar moving horizontally, 1: transposed
  double velocity;          // signed pixels/frame
  std::size_t start;        // initial bar position along the motion axis
};

inline void check_geometry(const SynthConfig& cfg) {
  if (cfg.class_count == 0 || cfg.frames == 0 || cfg.channels == 0)
    throw std::invalid_argument("SynthConfig: empty dimension");
  if (cfg.bar_width == 0 || cfg.bar_width > cfg.width || cfg.bar_width > cfg.height)
    throw std::invalid_argument("SynthConfig: bar larger than frame");
  for (std::size_t f : cfg.cue_frames)
    if (f >= cfg.frames) throw std::invalid_argument("SynthConfig: cue frame out of range");
}

// Per-class cue patch slot on a 4-column grid.
struct CuePatch {
  std::size_t row, col, size;
};

inline CuePatch cue_patch(const SynthConfig& cfg, std::size_t cls) {
  constexpr std::size_t patch = 4;
  const std::size_t cols = std::min<std::size_t>(4, cfg.class_count);
  const std::size_t rows = (cfg.class_count + cols - 1) / cols;
  const std::size_t slot_w = cfg.width / cols;
  const std::size_t slot_h = cfg.height / rows;
  if (slot_w < patch || slot_h < patch)
    throw std::invalid_argument("SynthConfig: frame too small for the cue grid");
  const std::size_t col = cls % cols;
  const std::size_t row = cls / cols;
  return {row * slot_h + (slot_h - patch) / 2, col * slot_w + (slot_w - patch) / 2, patch};
}

inline void paint_bar(Tensor& frames, const SynthConfig& cfg, std::size_t frame,
                      const BarMotion& motion) {
  const std::size_t axis_len = motion.orientation == 0 ? cfg.width : cfg.height;
  const std::int64_t shift =
      std::llround(motion.velocity * static_cast<double>(frame));
  const std::size_t pos = static_cast<std::size_t>(
      ((static_cast<std::int64_t>(motion.start) + shift) % static_cast<std::int64_t>(axis_len) +
       static_cast<std::int64_t>(axis_len)) %
      static_cast<std::int64_t>(axis_len));
  for (std::size_t c = 0; c < cfg.channels; ++c)
    for (std::size_t b = 0; b < cfg.bar_width; ++b) {
      const std::size_t line = (pos + b) % axis_len;
      if (motion.orientation == 0) {
        for (std::size_t r = 0; r < cfg.height; ++r)
          frames.at({c, frame, r, line}) = kBarIntensity;
      } else {
        for (std::size_t col = 0; col < cfg.width; ++col)
          frames.at({c, frame, line, col}) = kBarIntensity;
      }
    }
}

inline Tensor render_motion(const SynthConfig& cfg, const BarMotion& motion) {
  Tensor frames({cfg.channels, cfg.frames, cfg.height, cfg.width});
  for (std::size_t f = 0; f < cfg.frames; ++f) paint_bar(frames, cfg, f, motion);
  return frames;
}

// Class c -> (orientation, direction, magnitude); magnitudes double for the
// upper half of an 8-class set, giving speeds {±1, ±2} x 2 orientations.
inline BarMotion class_motion(const SynthConfig& cfg, std::size_t cls, Xoshiro256ss& rng) {
  BarMotion motion;
  motion.orientation = cls % 2;
  const double sign = ((cls >> 1) % 2 == 0) ? 1.0 : -1.0;
  const double magnitude = static_cast<double>(1 + (cls >> 2));
  motion.velocity = cfg.motion_speed * sign * magnitude;
  motion.start = rng.below(motion.orientation == 0 ? cfg.width : cfg.height);
  return motion;
}

inline BarMotion class_free_motion(const SynthConfig& cfg, Xoshiro256ss& rng) {
  BarMotion motion;
  motion.orientation = rng.below(2);
  const double sign = rng.below(2) == 0 ? 1.0 : -1.0;
  const double magnitude = static_cast<double>(1 + rng.below(2));
  motion.velocity = cfg.motion_speed * sign * magnitude;
  motion.start = rng.below(motion.orientation == 0 ? cfg.width : cfg.height);
  return motion;
}

}  // namespace detail

// The cue-free rendering path: bar parameters come only from (seed, index),
// never from the class. Exposed so tests can verify that non-cue frames carry
// no label information.
inline Tensor render_base(const SynthConfig& config, std::size_t video_index) {
  detail::check_geometry(config);
  Xoshiro256ss rng(mix_seed(config.seed, video_index));
  return detail::render_motion(config, detail::class_free_motion(config, rng));
}

// Deterministic dataset: labels round-robin; without cue_frames the bar's
// direction and speed encode the class, with cue_frames the bar is
// class-independent and a per-class patch appears only in the cue frames.
inline std::vector<Video> generate_dataset(const SynthConfig& config, std::size_t count) {
  detail::check_geometry(config);
  if (count < config.class_count)
    throw std::invalid_argument("generate_dataset: count below class_count");
  std::vector<Video> videos;
  videos.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t cls = i % config.class_count;
    Xoshiro256ss rng(mix_seed(config.seed, i));
    Tensor frames;
    if (config.cue_frames.empty()) {
      frames = detail::render_motion(config, detail::class_motion(config, cls, rng));
    } else {
      frames = detail::render_motion(config, detail::class_free_motion(config, rng));
      const detail::CuePatch patch = detail::cue_patch(config, cls);
      for (std::size_t f : config.cue_frames)
        for (std::size_t c = 0; c < config.channels; ++c)
          for (std::size_t r = 0; r < patch.size; ++r)
            for (std::size_t col = 0; col < patch.size; ++col)
              frames.at({c, f, patch.row + r, patch.col + col}) = detail::kCueIntensity;
    }
    if (config.noise_std > 0.0) {
      for (double& v : frames.values()) v += config.noise_std * rng.normal();
    }
    for (double& v : frames.values())
      v = std::min(std::max(v, config.pixel_range[0]), config.pixel_range[1]);
    char id[32];
    std::snprintf(id, sizeof id, "v%04zu", i);
    videos.push_back({std::move(frames), config.pixel_range, id, cls});
  }
  return videos;
}

namespace detail {

inline void init_params(NetworkSpec& net, Xoshiro256ss& rng, double weight_init) {
  for (std::size_t i = 0; i < net.layers.size(); ++i) {
    std::size_t fan_in = 0;
    if (const auto* conv = std::get_if<Conv3D>(&net.layers[i]))
      fan_in = conv->in_channels * conv->kernel[0] * conv->kernel[1] * conv->kernel[2];
    else if (const auto* dense = std::get_if<Dense>(&net.layers[i]))
      fan_in = dense->in_features;
    if (fan_in == 0) continue;
    const double scale = weight_init / std::sqrt(static_cast<double>(fan_in));
    for (double& w : net.params[i].weight.values()) w = rng.uniform(-scale, scale);
    for (double& b : net.params[i].bias.values()) b = 0.0;
  }
}

}  // namespace detail

// Fresh parameters from the same initializer train() starts from.
inline NetworkSpec untrained(const NetworkSpec& net, std::uint64_t seed,
                             double weight_init = 1.0) {
  NetworkSpec out = net;
  Xoshiro256ss rng(seed);
  detail::init_params(out, rng, weight_init);
  return out;
}

// Plain SGD on softmax cross-entropy over the logits, starting from the
// seeded initializer. Single-threaded so floating-point sums keep a fixed
// order; every parameter byte is determined by (dataset, config).
inline NetworkSpec train(const NetworkSpec& net, std::span<const Video> dataset,
                         const TrainConfig& config) {
  if (config.epochs < 1) throw std::invalid_argument("train: epochs must be >= 1");
  if (config.batch_size < 1) throw std::invalid_argument("train: batch_size must be >= 1");
  if (config.learning_rate < 0.0)
    throw std::invalid_argument("train: negative learning rate");
  if (dataset.empty()) throw std::invalid_argument("train: empty dataset");
  for (const Video& video : dataset)
    if (video.true_class >= net.class_count)
      throw std::invalid_argument("train: label out of range for video '" + video.id + "'");

  NetworkSpec model = net;
  Xoshiro256ss rng(config.seed);
  detail::init_params(model, rng, config.weight_init);

  std::vector<Tensor> inputs;
  inputs.reserve(dataset.size());
  const SnippetSpec snippet{0, Rational(1, 1), net.input_shape[1]};
  for (const Video& video : dataset) inputs.push_back(extract_snippet(video, snippet));

  std::vector<std::size_t> order(dataset.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i)
      std::swap(order[i - 1], order[rng.below(i)]);
    for (std::size_t begin = 0; begin < order.size(); begin += config.batch_size) {
      const std::size_t end = std::min(begin + config.batch_size, order.size());
      const double inv_batch = 1.0 / static_cast<double>(end - begin);
      std::vector<LayerParams> accum(model.layers.size());
      for (std::size_t l = 0; l < model.layers.size(); ++l) {
        accum[l].weight = Tensor::zeros_like(model.params[l].weight);
        accum[l].bias = Tensor::zeros_like(model.params[l].bias);
      }
      double batch_loss = 0.0;
      for (std::size_t s = begin; s < end; ++s) {
        const std::size_t idx = order[s];
        const ForwardTrace trace = forward(model, inputs[idx]);
        double max_logit = trace.logits[0];
        for (double z : trace.logits) max_logit = std::max(max_logit, z);
        double norm = 0.0;
        std::vector<double> seed(trace.logits.size());
        for (std::size_t k = 0; k < trace.logits.size(); ++k) {
          seed[k] = std::exp(trace.logits[k] - max_logit);
          norm += seed[k];
        }
        const std::size_t label = dataset[idx].true_class;
        batch_loss += -std::log(seed[label] / norm) * inv_batch;
        for (std::size_t k = 0; k < seed.size(); ++k) {
          seed[k] = seed[k] / norm - (k == label ? 1.0 : 0.0);
          seed[k] *= inv_batch;
        }
        const Gradients grads = backward(model, trace, seed, /*want_param_grads=*/true);
        for (std::size_t l = 0; l < model.layers.size(); ++l) {
          for (std::size_t k = 0; k < accum[l].weight.size(); ++k)
            accum[l].weight[k] += grads.params[l].weight[k];
          for (std::size_t k = 0; k < accum[l].bias.size(); ++k)
            accum[l].bias[k] += grads.params[l].bias[k];
        }
      }
      if (!std::isfinite(batch_loss)) throw divergence_error(epoch);
      for (std::size_t l = 0; l < model.layers.size(); ++l) {
        for (std::size_t k = 0; k < accum[l].weight.size(); ++k)
          model.params[l].weight[k] -= config.learning_rate * accum[l].weight[k];
        for (std::size_t k = 0; k < accum[l].bias.size(); ++k)
          model.params[l].bias[k] -= config.learning_rate * accum[l].bias[k];
      }
    }
  }
  return model;
}

// Mean softmax cross-entropy at snippet (offset 0, step 1); handy for the
// descent tests and for monitoring.
inline double dataset_loss(const NetworkSpec& net, std::span<const Video> dataset) {
  double total = 0.0;
  const SnippetSpec snippet{0, Rational(1, 1), net.input_shape[1]};
  for (const Video& video : dataset) {
    const auto [logits, _] = predict(net, extract_snippet(video, snippet));
    double max_logit = logits[0];
    for (double z : logits) max_logit = std::max(max_logit, z);
    double norm = 0.0;
    for (double z : logits) norm += std::exp(z - max_logit);
    total += -(logits[video.true_class] - max_logit - std::log(norm));
  }
  return total / static_cast<double>(dataset.size());
}

}  // namespace vxt
