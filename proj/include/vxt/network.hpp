#pragma once

// 3D convolutional classifier: layer descriptions, shape inference, forward
// passes that record every activation, and reverse-mode gradients.

#include <array>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "vxt/tensor.hpp"

namespace vxt {

struct Conv3D {
  std::size_t in_channels = 1;
  std::size_t out_channels = 1;
  std::array<std::size_t, 3> kernel{1, 1, 1};   // (kt, kh, kw)
  std::array<std::size_t, 3> stride{1, 1, 1};   // (st, sh, sw)
  std::array<std::size_t, 3> padding{0, 0, 0};  // zero padding (pt, ph, pw)
  bool has_bias = true;
};

struct ReLU {};

struct MaxPool3D {
  std::array<std::size_t, 3> window{1, 1, 1};
  std::array<std::size_t, 3> stride{1, 1, 1};
};

struct SumPool3D {
  std::array<std::size_t, 3> window{1, 1, 1};
  std::array<std::size_t, 3> stride{1, 1, 1};
};

struct Flatten {};

struct Dense {
  std::size_t in_features = 0;
  std::size_t out_features = 0;
  bool has_bias = true;
};

using LayerSpec = std::variant<Conv3D, ReLU, MaxPool3D, SumPool3D, Flatten, Dense>;

// Weight/bias storage for one layer; both empty for parameterless layers.
// Conv3D weight shape: (out_channels, in_channels, kt, kh, kw), bias (out).
// Dense weight shape: (out_features, in_features), bias (out_features).
struct LayerParams {
  Tensor weight;
  Tensor bias;
};

namespace detail {

inline std::size_t conv_extent(std::size_t in, std::size_t pad, std::size_t kernel,
                               std::size_t stride, const char* what) {
  const std::size_t padded = in + 2 * pad;
  if (padded < kernel || stride == 0)
    throw std::invalid_argument(std::string(what) + ": kernel exceeds padded input");
  return (padded - kernel) / stride + 1;
}

inline std::size_t pool_extent(std::size_t in, std::size_t window, std::size_t stride,
                               const char* what) {
  if (in < window || stride == 0)
    throw std::invalid_argument(std::string(what) + ": window exceeds input");
  return (in - window) / stride + 1;
}

}  // namespace detail

inline std::vector<std::size_t> layer_output_shape(const LayerSpec& layer,
                                                   const std::vector<std::size_t>& in) {
  return std::visit(
      [&](const auto& l) -> std::vector<std::size_t> {
        using L = std::decay_t<decltype(l)>;
        if constexpr (std::is_same_v<L, Conv3D>) {
          if (in.size() != 4 || in[0] != l.in_channels)
            throw std::invalid_argument("Conv3D: input shape mismatch");
          return {l.out_channels,
                  detail::conv_extent(in[1], l.padding[0], l.kernel[0], l.stride[0], "Conv3D"),
                  detail::conv_extent(in[2], l.padding[1], l.kernel[1], l.stride[1], "Conv3D"),
                  detail::conv_extent(in[3], l.padding[2], l.kernel[2], l.stride[2], "Conv3D")};
        } else if constexpr (std::is_same_v<L, MaxPool3D> || std::is_same_v<L, SumPool3D>) {
          if (in.size() != 4) throw std::invalid_argument("Pool3D: rank-4 input required");
          for (int a = 0; a < 3; ++a)
            if (l.stride[a] > l.window[a])
              throw std::invalid_argument("Pool3D: stride larger than window");
          return {in[0],
                  detail::pool_extent(in[1], l.window[0], l.stride[0], "Pool3D"),
                  detail::pool_extent(in[2], l.window[1], l.stride[1], "Pool3D"),
                  detail::pool_extent(in[3], l.window[2], l.stride[2], "Pool3D")};
        } else if constexpr (std::is_same_v<L, Flatten>) {
          return {Tensor::count(in)};
        } else if constexpr (std::is_same_v<L, Dense>) {
          if (in.size() != 1 || in[0] != l.in_features)
            throw std::invalid_argument("Dense: input shape mismatch");
          return {l.out_features};
        } else {
          return in;  // ReLU
        }
      },
      layer);
}

struct NetworkSpec {
  std::array<std::size_t, 4> input_shape{};  // (channels, T, H, W)
  std::vector<LayerSpec> layers;
  std::vector<LayerParams> params;  // parallel to layers
  std::size_t class_count = 0;

  void validate() const {
    if (layers.size() != params.size())
      throw std::invalid_argument("NetworkSpec: layers/params length mismatch");
    if (layers.empty()) throw std::invalid_argument("NetworkSpec: no layers");
    std::vector<std::size_t> shape(input_shape.begin(), input_shape.end());
    for (std::size_t i = 0; i < layers.size(); ++i) {
      shape = layer_output_shape(layers[i], shape);
      if (const auto* conv = std::get_if<Conv3D>(&layers[i])) {
        const std::vector<std::size_t> want{conv->out_channels, conv->in_channels,
                                            conv->kernel[0], conv->kernel[1], conv->kernel[2]};
        if (params[i].weight.shape() != want)
          throw std::invalid_argument("NetworkSpec: Conv3D weight shape mismatch");
        if (conv->has_bias && params[i].bias.size() != conv->out_channels)
          throw std::invalid_argument("NetworkSpec: Conv3D bias shape mismatch");
      } else if (const auto* dense = std::get_if<Dense>(&layers[i])) {
        const std::vector<std::size_t> want{dense->out_features, dense->in_features};
        if (params[i].weight.shape() != want)
          throw std::invalid_argument("NetworkSpec: Dense weight shape mismatch");
        if (dense->has_bias && params[i].bias.size() != dense->out_features)
          throw std::invalid_argument("NetworkSpec: Dense bias shape mismatch");
      }
    }
    const auto* last = std::get_if<Dense>(&layers.back());
    if (!last || last->out_features != class_count)
      throw std::invalid_argument("NetworkSpec: final layer must be Dense(class_count)");
    if (shape.size() != 1 || shape[0] != class_count)
      throw std::invalid_argument("NetworkSpec: output shape mismatch");
  }
};

// activations[0] is the network input; activations[i + 1] is layer i's output,
// so every layer's input and output tensors are available to the backward
// passes without duplication.
struct ForwardTrace {
  std::vector<Tensor> activations;
  std::vector<double> logits;

  std::size_t layer_count() const { return activations.empty() ? 0 : activations.size() - 1; }
  const Tensor& layer_input(std::size_t i) const { return activations.at(i); }
  const Tensor& layer_output(std::size_t i) const { return activations.at(i + 1); }
};

namespace detail {

inline Tensor conv3d_forward(const Conv3D& cfg, const Tensor& in, const LayerParams& p) {
  const auto& shape = in.shape();
  const std::int64_t tin = static_cast<std::int64_t>(shape[1]);
  const std::int64_t hin = static_cast<std::int64_t>(shape[2]);
  const std::int64_t win = static_cast<std::int64_t>(shape[3]);
  Tensor out(layer_output_shape(LayerSpec{cfg}, shape));
  const auto& os = out.shape();
  const double* x = in.data();
  const double* w = p.weight.data();
  double* y = out.data();
  std::size_t yi = 0;
  for (std::size_t oc = 0; oc < os[0]; ++oc) {
    const double bias = cfg.has_bias ? p.bias[oc] : 0.0;
    for (std::size_t ot = 0; ot < os[1]; ++ot)
      for (std::size_t oh = 0; oh < os[2]; ++oh)
        for (std::size_t ow = 0; ow < os[3]; ++ow, ++yi) {
          double acc = bias;
          const std::int64_t t0 = static_cast<std::int64_t>(ot * cfg.stride[0]) -
                                  static_cast<std::int64_t>(cfg.padding[0]);
          const std::int64_t h0 = static_cast<std::int64_t>(oh * cfg.stride[1]) -
                                  static_cast<std::int64_t>(cfg.padding[1]);
          const std::int64_t w0 = static_cast<std::int64_t>(ow * cfg.stride[2]) -
                                  static_cast<std::int64_t>(cfg.padding[2]);
          for (std::size_t ic = 0; ic < cfg.in_channels; ++ic) {
            const std::size_t wbase =
                ((oc * cfg.in_channels + ic) * cfg.kernel[0]) * cfg.kernel[1] * cfg.kernel[2];
            const std::size_t xbase = ic * shape[1] * shape[2] * shape[3];
            for (std::size_t kt = 0; kt < cfg.kernel[0]; ++kt) {
              const std::int64_t t = t0 + static_cast<std::int64_t>(kt);
              if (t < 0 || t >= tin) continue;
              for (std::size_t kh = 0; kh < cfg.kernel[1]; ++kh) {
                const std::int64_t h = h0 + static_cast<std::int64_t>(kh);
                if (h < 0 || h >= hin) continue;
                for (std::size_t kw = 0; kw < cfg.kernel[2]; ++kw) {
                  const std::int64_t ww = w0 + static_cast<std::int64_t>(kw);
                  if (ww < 0 || ww >= win) continue;
                  acc += w[wbase + (kt * cfg.kernel[1] + kh) * cfg.kernel[2] + kw] *
                         x[xbase + (static_cast<std::size_t>(t) * shape[2] +
                                    static_cast<std::size_t>(h)) *
                                       shape[3] +
                           static_cast<std::size_t>(ww)];
                }
              }
            }
          }
          y[yi] = acc;
        }
  }
  return out;
}

// Shared pooling iteration: calls fn(input_offset, output_offset) for every
// (window element, output) pair, channel by channel.
template <typename Fn>
void for_each_pool_pair(const std::array<std::size_t, 3>& window,
                        const std::array<std::size_t, 3>& stride,
                        const std::vector<std::size_t>& in_shape,
                        const std::vector<std::size_t>& out_shape, Fn&& fn) {
  const std::size_t in_plane = in_shape[1] * in_shape[2] * in_shape[3];
  const std::size_t out_plane = out_shape[1] * out_shape[2] * out_shape[3];
  for (std::size_t c = 0; c < in_shape[0]; ++c) {
    std::size_t oi = c * out_plane;
    for (std::size_t ot = 0; ot < out_shape[1]; ++ot)
      for (std::size_t oh = 0; oh < out_shape[2]; ++oh)
        for (std::size_t ow = 0; ow < out_shape[3]; ++ow, ++oi) {
          const std::size_t t0 = ot * stride[0];
          const std::size_t h0 = oh * stride[1];
          const std::size_t w0 = ow * stride[2];
          for (std::size_t wt = 0; wt < window[0]; ++wt)
            for (std::size_t wh = 0; wh < window[1]; ++wh)
              for (std::size_t ww = 0; ww < window[2]; ++ww) {
                const std::size_t ii = c * in_plane +
                                       ((t0 + wt) * in_shape[2] + (h0 + wh)) * in_shape[3] +
                                       (w0 + ww);
                fn(ii, oi);
              }
        }
  }
}

inline Tensor dense_forward(const Dense& cfg, const Tensor& in, const LayerParams& p) {
  if (in.rank() != 1 || in.size() != cfg.in_features)
    throw std::invalid_argument("Dense: input shape mismatch");
  Tensor out({cfg.out_features});
  const double* x = in.data();
  const double* w = p.weight.data();
  for (std::size_t o = 0; o < cfg.out_features; ++o) {
    double acc = cfg.has_bias ? p.bias[o] : 0.0;
    const double* row = w + o * cfg.in_features;
    for (std::size_t i = 0; i < cfg.in_features; ++i) acc += row[i] * x[i];
    out[o] = acc;
  }
  return out;
}

inline Tensor apply_layer(const LayerSpec& layer, const LayerParams& p, const Tensor& in) {
  return std::visit(
      [&](const auto& l) -> Tensor {
        using L = std::decay_t<decltype(l)>;
        if constexpr (std::is_same_v<L, Conv3D>) {
          return conv3d_forward(l, in, p);
        } else if constexpr (std::is_same_v<L, ReLU>) {
          Tensor out = in;
          for (double& v : out.values())
            if (v < 0.0) v = 0.0;
          return out;
        } else if constexpr (std::is_same_v<L, MaxPool3D>) {
          Tensor out(layer_output_shape(layer, in.shape()));
          std::fill(out.values().begin(), out.values().end(),
                    -std::numeric_limits<double>::infinity());
          for_each_pool_pair(l.window, l.stride, in.shape(), out.shape(),
                             [&](std::size_t ii, std::size_t oi) {
                               if (in[ii] > out[oi]) out[oi] = in[ii];
                             });
          return out;
        } else if constexpr (std::is_same_v<L, SumPool3D>) {
          Tensor out(layer_output_shape(layer, in.shape()));
          for_each_pool_pair(l.window, l.stride, in.shape(), out.shape(),
                             [&](std::size_t ii, std::size_t oi) { out[oi] += in[ii]; });
          return out;
        } else if constexpr (std::is_same_v<L, Flatten>) {
          return in.reshaped({in.size()});
        } else {
          return dense_forward(l, in, p);
        }
      },
      layer);
}

}  // namespace detail

inline ForwardTrace forward(const NetworkSpec& net, const Tensor& input) {
  const std::vector<std::size_t> want(net.input_shape.begin(), net.input_shape.end());
  if (input.shape() != want)
    throw std::invalid_argument("forward: input shape does not match network input");
  ForwardTrace trace;
  trace.activations.reserve(net.layers.size() + 1);
  trace.activations.push_back(input);
  for (std::size_t i = 0; i < net.layers.size(); ++i)
    trace.activations.push_back(
        detail::apply_layer(net.layers[i], net.params[i], trace.activations.back()));
  trace.logits = trace.activations.back().values();
  if (trace.logits.size() != net.class_count)
    throw std::invalid_argument("forward: logits size does not match class_count");
  return trace;
}

struct Gradients {
  Tensor input;
  std::vector<LayerParams> params;  // empty unless requested
};

// Reverse-mode chain rule from a seed on the logits. MaxPool routes each
// window's gradient to the first arg-max in row-major scan order.
inline Gradients backward(const NetworkSpec& net, const ForwardTrace& trace,
                          std::span<const double> logit_seed, bool want_param_grads) {
  if (trace.layer_count() != net.layers.size())
    throw std::invalid_argument("backward: trace does not match network");
  if (logit_seed.size() != net.class_count)
    throw std::invalid_argument("backward: seed size does not match class_count");

  Gradients grads;
  if (want_param_grads) {
    grads.params.resize(net.layers.size());
    for (std::size_t i = 0; i < net.layers.size(); ++i) {
      grads.params[i].weight = Tensor::zeros_like(net.params[i].weight);
      grads.params[i].bias = Tensor::zeros_like(net.params[i].bias);
    }
  }

  Tensor g({net.class_count}, std::vector<double>(logit_seed.begin(), logit_seed.end()));
  for (std::size_t idx = net.layers.size(); idx-- > 0;) {
    const Tensor& in = trace.layer_input(idx);
    const Tensor& out = trace.layer_output(idx);
    if (g.shape() != out.shape())
      throw std::invalid_argument("backward: trace shape mismatch");
    const LayerParams& p = net.params[idx];
    Tensor gin(in.shape());
    std::visit(
        [&](const auto& l) {
          using L = std::decay_t<decltype(l)>;
          if constexpr (std::is_same_v<L, Conv3D>) {
            const auto& is = in.shape();
            const auto& os = out.shape();
            const std::int64_t tin = static_cast<std::int64_t>(is[1]);
            const std::int64_t hin = static_cast<std::int64_t>(is[2]);
            const std::int64_t win = static_cast<std::int64_t>(is[3]);
            double* wg = want_param_grads ? grads.params[idx].weight.data() : nullptr;
            double* bg = want_param_grads && l.has_bias ? grads.params[idx].bias.data() : nullptr;
            const double* w = p.weight.data();
            std::size_t oi = 0;
            for (std::size_t oc = 0; oc < os[0]; ++oc)
              for (std::size_t ot = 0; ot < os[1]; ++ot)
                for (std::size_t oh = 0; oh < os[2]; ++oh)
                  for (std::size_t ow = 0; ow < os[3]; ++ow, ++oi) {
                    const double go = g[oi];
                    if (bg) bg[oc] += go;
                    if (go == 0.0 && !wg) continue;
                    const std::int64_t t0 = static_cast<std::int64_t>(ot * l.stride[0]) -
                                            static_cast<std::int64_t>(l.padding[0]);
                    const std::int64_t h0 = static_cast<std::int64_t>(oh * l.stride[1]) -
                                            static_cast<std::int64_t>(l.padding[1]);
                    const std::int64_t w0 = static_cast<std::int64_t>(ow * l.stride[2]) -
                                            static_cast<std::int64_t>(l.padding[2]);
                    for (std::size_t ic = 0; ic < l.in_channels; ++ic) {
                      const std::size_t wbase =
                          ((oc * l.in_channels + ic) * l.kernel[0]) * l.kernel[1] * l.kernel[2];
                      const std::size_t xbase = ic * is[1] * is[2] * is[3];
                      for (std::size_t kt = 0; kt < l.kernel[0]; ++kt) {
                        const std::int64_t t = t0 + static_cast<std::int64_t>(kt);
                        if (t < 0 || t >= tin) continue;
                        for (std::size_t kh = 0; kh < l.kernel[1]; ++kh) {
                          const std::int64_t h = h0 + static_cast<std::int64_t>(kh);
                          if (h < 0 || h >= hin) continue;
                          for (std::size_t kw = 0; kw < l.kernel[2]; ++kw) {
                            const std::int64_t ww = w0 + static_cast<std::int64_t>(kw);
                            if (ww < 0 || ww >= win) continue;
                            const std::size_t wi =
                                wbase + (kt * l.kernel[1] + kh) * l.kernel[2] + kw;
                            const std::size_t xi =
                                xbase + (static_cast<std::size_t>(t) * is[2] +
                                         static_cast<std::size_t>(h)) *
                                            is[3] +
                                static_cast<std::size_t>(ww);
                            gin[xi] += w[wi] * go;
                            if (wg) wg[wi] += in[xi] * go;
                          }
                        }
                      }
                    }
                  }
          } else if constexpr (std::is_same_v<L, ReLU>) {
            for (std::size_t i = 0; i < in.size(); ++i)
              gin[i] = in[i] > 0.0 ? g[i] : 0.0;
          } else if constexpr (std::is_same_v<L, MaxPool3D>) {
            // First pass per window finds the winner, second adds the grad;
            // implemented as one scan tracking the current winner per output.
            std::vector<std::size_t> winner(out.size(), std::numeric_limits<std::size_t>::max());
            detail::for_each_pool_pair(l.window, l.stride, in.shape(), out.shape(),
                                       [&](std::size_t ii, std::size_t oi) {
                                         if (winner[oi] == std::numeric_limits<std::size_t>::max() ||
                                             in[ii] > in[winner[oi]])
                                           winner[oi] = ii;
                                       });
            for (std::size_t oi = 0; oi < out.size(); ++oi) gin[winner[oi]] += g[oi];
          } else if constexpr (std::is_same_v<L, SumPool3D>) {
            detail::for_each_pool_pair(l.window, l.stride, in.shape(), out.shape(),
                                       [&](std::size_t ii, std::size_t oi) { gin[ii] += g[oi]; });
          } else if constexpr (std::is_same_v<L, Flatten>) {
            gin = g.reshaped(in.shape());
          } else {  // Dense
            const double* w = p.weight.data();
            double* wg = want_param_grads ? grads.params[idx].weight.data() : nullptr;
            double* bg = want_param_grads && l.has_bias ? grads.params[idx].bias.data() : nullptr;
            for (std::size_t o = 0; o < l.out_features; ++o) {
              const double go = g[o];
              if (bg) bg[o] += go;
              if (go == 0.0) continue;
              const double* row = w + o * l.in_features;
              double* wrow = wg ? wg + o * l.in_features : nullptr;
              for (std::size_t i = 0; i < l.in_features; ++i) {
                gin[i] += row[i] * go;
                if (wrow) wrow[i] += in[i] * go;
              }
            }
          }
        },
        net.layers[idx]);
    g = std::move(gin);
  }
  grads.input = std::move(g);
  return grads;
}

// d(logit[class_index]) / d(input), element-wise.
inline Tensor gradient(const NetworkSpec& net, const Tensor& input, std::size_t class_index) {
  if (class_index >= net.class_count)
    throw std::invalid_argument("gradient: class index out of range");
  const ForwardTrace trace = forward(net, input);
  std::vector<double> seed(net.class_count, 0.0);
  seed[class_index] = 1.0;
  return backward(net, trace, seed, /*want_param_grads=*/false).input;
}

// Logits plus arg-max class; ties resolve to the lower index.
inline std::pair<std::vector<double>, std::size_t> predict(const NetworkSpec& net,
                                                           const Tensor& input) {
  ForwardTrace trace = forward(net, input);
  std::size_t best = 0;
  for (std::size_t i = 1; i < trace.logits.size(); ++i)
    if (trace.logits[i] > trace.logits[best]) best = i;
  return {std::move(trace.logits), best};
}

// Reference desk-scale architecture: input 1x16x24x24, two conv/pool stages
// (the first pool leaves time untouched), then a two-layer classifier head.
// Parameters are allocated zero-filled; seed them via synthlab.
inline NetworkSpec mini_c3d(std::size_t class_count, bool with_bias = true) {
  NetworkSpec net;
  net.input_shape = {1, 16, 24, 24};
  net.class_count = class_count;
  auto add = [&](LayerSpec layer, Tensor weight = {}, Tensor bias = {}) {
    net.layers.push_back(std::move(layer));
    net.params.push_back({std::move(weight), std::move(bias)});
  };
  add(Conv3D{1, 8, {3, 3, 3}, {1, 1, 1}, {1, 1, 1}, with_bias},
      Tensor({8, 1, 3, 3, 3}), with_bias ? Tensor({8}) : Tensor{});
  add(ReLU{});
  add(MaxPool3D{{1, 2, 2}, {1, 2, 2}});
  add(Conv3D{8, 16, {3, 3, 3}, {1, 1, 1}, {1, 1, 1}, with_bias},
      Tensor({16, 8, 3, 3, 3}), with_bias ? Tensor({16}) : Tensor{});
  add(ReLU{});
  add(MaxPool3D{{2, 2, 2}, {2, 2, 2}});
  add(Flatten{});
  const std::size_t features = 16 * 8 * 6 * 6;
  add(Dense{features, 64, with_bias}, Tensor({64, features}), with_bias ? Tensor({64}) : Tensor{});
  add(ReLU{});
  add(Dense{64, class_count, with_bias}, Tensor({class_count, 64}),
      with_bias ? Tensor({class_count}) : Tensor{});
  net.validate();
  return net;
}

}  // namespace vxt
