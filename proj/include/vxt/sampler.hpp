#pragma once

// Snippet extraction under exact rational step sizes, plus the resize/crop
// preprocessing pipeline and the step/offset sweep schedules.

#include <array>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "vxt/tensor.hpp"

namespace vxt {

// Positive rational kept in lowest terms so floor(k * step) is exact integer
// arithmetic even at step 1/16.
struct Rational {
  std::int64_t num = 1;
  std::int64_t den = 1;

  Rational() = default;
  Rational(std::int64_t n, std::int64_t d) : num(n), den(d) {
    if (num <= 0 || den <= 0) throw std::invalid_argument("Rational: must be positive");
    const std::int64_t g = std::gcd(num, den);
    num /= g;
    den /= g;
  }

  double value() const { return static_cast<double>(num) / static_cast<double>(den); }

  std::string str() const {
    return den == 1 ? std::to_string(num) : std::to_string(num) + "/" + std::to_string(den);
  }

  // Accepts "p/q" or a plain positive integer.
  static Rational parse(const std::string& text) {
    const auto slash = text.find('/');
    try {
      if (slash == std::string::npos) {
        std::size_t used = 0;
        const std::int64_t n = std::stoll(text, &used);
        if (used != text.size()) throw std::invalid_argument("trailing characters");
        return Rational(n, 1);
      }
      std::size_t used = 0;
      const std::int64_t n = std::stoll(text.substr(0, slash), &used);
      if (used != slash) throw std::invalid_argument("trailing characters");
      const std::string den_text = text.substr(slash + 1);
      const std::int64_t d = std::stoll(den_text, &used);
      if (used != den_text.size()) throw std::invalid_argument("trailing characters");
      return Rational(n, d);
    } catch (const std::exception&) {
      throw std::invalid_argument("Rational: cannot parse '" + text + "' (want p/q or integer)");
    }
  }

  bool operator==(const Rational&) const = default;
};

struct Video {
  Tensor frames;  // (channels, N, H, W)
  std::array<double, 2> pixel_range{0.0, 1.0};
  std::string id;
  std::size_t true_class = 0;
};

struct SnippetSpec {
  std::size_t offset = 0;
  Rational step{1, 1};
  std::size_t length = 16;
};

// Snippet frame k samples source frame min(offset + floor(k * step), N - 1);
// short videos clamp to the last frame rather than truncating.
inline Tensor extract_snippet(const Video& video, const SnippetSpec& spec) {
  const auto& shape = video.frames.shape();
  if (shape.size() != 4) throw std::invalid_argument("extract_snippet: video must be rank 4");
  const std::size_t frame_count = shape[1];
  if (spec.offset >= frame_count)
    throw std::invalid_argument("extract_snippet: offset beyond last frame");
  const std::size_t channels = shape[0], height = shape[2], width = shape[3];
  const std::size_t frame_elems = height * width;
  Tensor out({channels, spec.length, height, width});
  for (std::size_t k = 0; k < spec.length; ++k) {
    const std::size_t advance = static_cast<std::size_t>(
        (static_cast<std::int64_t>(k) * spec.step.num) / spec.step.den);
    const std::size_t src = std::min(spec.offset + advance, frame_count - 1);
    for (std::size_t c = 0; c < channels; ++c) {
      const double* from = video.frames.data() + (c * frame_count + src) * frame_elems;
      double* to = out.data() + (c * spec.length + k) * frame_elems;
      std::copy(from, from + frame_elems, to);
    }
  }
  return out;
}

namespace detail {

// Half-pixel-centre bilinear sampling; out == in is an exact identity.
inline void bilinear_resize_frame(const double* src, std::size_t in_h, std::size_t in_w,
                                  double* dst, std::size_t out_h, std::size_t out_w) {
  for (std::size_t i = 0; i < out_h; ++i) {
    double fy = (static_cast<double>(i) + 0.5) * static_cast<double>(in_h) /
                    static_cast<double>(out_h) -
                0.5;
    fy = std::min(std::max(fy, 0.0), static_cast<double>(in_h - 1));
    const std::size_t y0 = static_cast<std::size_t>(fy);
    const std::size_t y1 = std::min(y0 + 1, in_h - 1);
    const double dy = fy - static_cast<double>(y0);
    for (std::size_t j = 0; j < out_w; ++j) {
      double fx = (static_cast<double>(j) + 0.5) * static_cast<double>(in_w) /
                      static_cast<double>(out_w) -
                  0.5;
      fx = std::min(std::max(fx, 0.0), static_cast<double>(in_w - 1));
      const std::size_t x0 = static_cast<std::size_t>(fx);
      const std::size_t x1 = std::min(x0 + 1, in_w - 1);
      const double dx = fx - static_cast<double>(x0);
      dst[i * out_w + j] = src[y0 * in_w + x0] * (1.0 - dy) * (1.0 - dx) +
                           src[y0 * in_w + x1] * (1.0 - dy) * dx +
                           src[y1 * in_w + x0] * dy * (1.0 - dx) +
                           src[y1 * in_w + x1] * dy * dx;
    }
  }
}

}  // namespace detail

// Bilinear resize of every frame to resize_to, then the centred crop_to
// window; an odd margin drops the extra row/column on the bottom/right.
inline Tensor preprocess(const Tensor& frames, std::array<std::size_t, 2> resize_to,
                         std::array<std::size_t, 2> crop_to) {
  if (frames.rank() != 4) throw std::invalid_argument("preprocess: frames must be rank 4");
  if (crop_to[0] > resize_to[0] || crop_to[1] > resize_to[1])
    throw std::invalid_argument("preprocess: crop larger than resize target");
  const auto& shape = frames.shape();
  const std::size_t channels = shape[0], count = shape[1], in_h = shape[2], in_w = shape[3];
  const std::size_t top = (resize_to[0] - crop_to[0]) / 2;
  const std::size_t left = (resize_to[1] - crop_to[1]) / 2;

  Tensor out({channels, count, crop_to[0], crop_to[1]});
  std::vector<double> resized(resize_to[0] * resize_to[1]);
  for (std::size_t c = 0; c < channels; ++c)
    for (std::size_t f = 0; f < count; ++f) {
      const double* src = frames.data() + (c * count + f) * in_h * in_w;
      detail::bilinear_resize_frame(src, in_h, in_w, resized.data(), resize_to[0], resize_to[1]);
      double* dst = out.data() + (c * count + f) * crop_to[0] * crop_to[1];
      for (std::size_t r = 0; r < crop_to[0]; ++r)
        for (std::size_t col = 0; col < crop_to[1]; ++col)
          dst[r * crop_to[1] + col] = resized[(top + r) * resize_to[1] + (left + col)];
    }
  return out;
}

// Doubling schedule from 1/16 up to 32.
inline std::vector<Rational> step_schedule() {
  return {Rational(1, 16), Rational(1, 8), Rational(1, 4), Rational(1, 2), Rational(1, 1),
          Rational(2, 1),  Rational(4, 1), Rational(8, 1), Rational(16, 1), Rational(32, 1)};
}

// 8-frame strides from the start of the video up to offset 256.
inline std::vector<std::size_t> offset_schedule() {
  std::vector<std::size_t> offsets;
  for (std::size_t o = 0; o <= 256; o += 8) offsets.push_back(o);
  return offsets;
}

}  // namespace vxt
