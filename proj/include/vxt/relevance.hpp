#pragma once

// Deep Taylor / LRP backward pass and gradient-squared sensitivity analysis.
// Hidden Conv3D/Dense layers redistribute relevance by the z+ rule, pooling
// layers in proportion to the pooled activations, and the first convolution
// by the box-constrained zB rule. ReLU and Flatten pass relevance through.

#include <cmath>
#include <cstddef>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "vxt/network.hpp"
#include "vxt/tensor.hpp"

namespace vxt {

enum class Method { DTD, Sensitivity };

inline const char* method_name(Method m) {
  return m == Method::DTD ? "dtd" : "sensitivity";
}

struct RelevanceConfig {
  double epsilon = 1e-9;               // stabilizer added to every denominator
  std::vector<double> input_low{0.0};  // per-channel pixel minimum; size 1 broadcasts
  std::vector<double> input_high{1.0};
  std::optional<std::size_t> target_class;  // empty: explain the predicted class
};

struct AttributionMap {
  Tensor scores;  // same shape as the network input
  Method method = Method::DTD;
  std::size_t explained_class = 0;
  double explained_value = 0.0;  // f(x) for DTD, squared gradient norm for sensitivity
  std::string warning;           // empty when the explanation is clean
};

namespace detail {

inline void require_non_negative(const Tensor& acts, const char* what) {
  for (double v : acts.values())
    if (v < 0.0) throw std::invalid_argument(std::string(what) + ": negative input activation");
}

inline double channel_bound(const std::vector<double>& bounds, std::size_t channel,
                            const char* what) {
  if (bounds.size() == 1) return bounds[0];
  if (channel >= bounds.size())
    throw std::invalid_argument(std::string(what) + ": per-channel bound missing");
  return bounds[channel];
}

// Visits every (input element, output neuron, weight) triple of a Conv3D,
// skipping padding positions; fn(xi, oi, w).
template <typename Fn>
void for_each_conv_tap(const Conv3D& cfg, const std::vector<std::size_t>& in_shape,
                       const std::vector<std::size_t>& out_shape, const double* weights,
                       Fn&& fn) {
  const std::int64_t tin = static_cast<std::int64_t>(in_shape[1]);
  const std::int64_t hin = static_cast<std::int64_t>(in_shape[2]);
  const std::int64_t win = static_cast<std::int64_t>(in_shape[3]);
  std::size_t oi = 0;
  for (std::size_t oc = 0; oc < out_shape[0]; ++oc)
    for (std::size_t ot = 0; ot < out_shape[1]; ++ot)
      for (std::size_t oh = 0; oh < out_shape[2]; ++oh)
        for (std::size_t ow = 0; ow < out_shape[3]; ++ow, ++oi) {
          const std::int64_t t0 = static_cast<std::int64_t>(ot * cfg.stride[0]) -
                                  static_cast<std::int64_t>(cfg.padding[0]);
          const std::int64_t h0 = static_cast<std::int64_t>(oh * cfg.stride[1]) -
                                  static_cast<std::int64_t>(cfg.padding[1]);
          const std::int64_t w0 = static_cast<std::int64_t>(ow * cfg.stride[2]) -
                                  static_cast<std::int64_t>(cfg.padding[2]);
          for (std::size_t ic = 0; ic < cfg.in_channels; ++ic) {
            const std::size_t wbase =
                ((oc * cfg.in_channels + ic) * cfg.kernel[0]) * cfg.kernel[1] * cfg.kernel[2];
            const std::size_t xbase = ic * in_shape[1] * in_shape[2] * in_shape[3];
            for (std::size_t kt = 0; kt < cfg.kernel[0]; ++kt) {
              const std::int64_t t = t0 + static_cast<std::int64_t>(kt);
              if (t < 0 || t >= tin) continue;
              for (std::size_t kh = 0; kh < cfg.kernel[1]; ++kh) {
                const std::int64_t h = h0 + static_cast<std::int64_t>(kh);
                if (h < 0 || h >= hin) continue;
                for (std::size_t kw = 0; kw < cfg.kernel[2]; ++kw) {
                  const std::int64_t ww = w0 + static_cast<std::int64_t>(kw);
                  if (ww < 0 || ww >= win) continue;
                  const std::size_t xi = xbase + (static_cast<std::size_t>(t) * in_shape[2] +
                                                  static_cast<std::size_t>(h)) *
                                                     in_shape[3] +
                                         static_cast<std::size_t>(ww);
                  fn(xi, oi, weights[wbase + (kt * cfg.kernel[1] + kh) * cfg.kernel[2] + kw],
                     ic);
                }
              }
            }
          }
        }
}

}  // namespace detail

// z+ rule for Conv3D/Dense: R_i = sum_j a_i w+_ij / (sum_i' a_i' w+_i'j + eps) R_j.
// Biases never enter the redistribution.
inline Tensor zplus_backward(const LayerSpec& layer, const LayerParams& params,
                             const Tensor& in_acts, const Tensor& rel_out, double epsilon) {
  detail::require_non_negative(in_acts, "zplus_backward");
  if (rel_out.shape() != layer_output_shape(layer, in_acts.shape()))
    throw std::invalid_argument("zplus_backward: relevance shape mismatch");
  Tensor rel_in(in_acts.shape());

  if (const auto* dense = std::get_if<Dense>(&layer)) {
    const double* w = params.weight.data();
    for (std::size_t j = 0; j < dense->out_features; ++j) {
      const double* row = w + j * dense->in_features;
      double den = epsilon;
      for (std::size_t i = 0; i < dense->in_features; ++i)
        if (row[i] > 0.0) den += in_acts[i] * row[i];
      const double scale = rel_out[j] / den;
      if (scale == 0.0) continue;
      for (std::size_t i = 0; i < dense->in_features; ++i)
        if (row[i] > 0.0) rel_in[i] += in_acts[i] * row[i] * scale;
    }
    return rel_in;
  }

  if (const auto* conv = std::get_if<Conv3D>(&layer)) {
    std::vector<double> den(rel_out.size(), epsilon);
    detail::for_each_conv_tap(*conv, in_acts.shape(), rel_out.shape(), params.weight.data(),
                              [&](std::size_t xi, std::size_t oi, double w, std::size_t) {
                                if (w > 0.0) den[oi] += in_acts[xi] * w;
                              });
    detail::for_each_conv_tap(*conv, in_acts.shape(), rel_out.shape(), params.weight.data(),
                              [&](std::size_t xi, std::size_t oi, double w, std::size_t) {
                                if (w > 0.0)
                                  rel_in[xi] += in_acts[xi] * w / den[oi] * rel_out[oi];
                              });
    return rel_in;
  }

  throw std::invalid_argument("zplus_backward: layer must be Conv3D or Dense");
}

// Pooling rule: within each window R_i = a_i / (sum_window a + eps) R_j;
// overlapping windows accumulate.
inline Tensor pool_backward(const LayerSpec& layer, const Tensor& in_acts,
                            const Tensor& rel_out, double epsilon) {
  const auto* maxp = std::get_if<MaxPool3D>(&layer);
  const auto* sump = std::get_if<SumPool3D>(&layer);
  if (!maxp && !sump)
    throw std::invalid_argument("pool_backward: layer must be MaxPool3D or SumPool3D");
  detail::require_non_negative(in_acts, "pool_backward");
  if (rel_out.shape() != layer_output_shape(layer, in_acts.shape()))
    throw std::invalid_argument("pool_backward: relevance shape mismatch");
  const auto& window = maxp ? maxp->window : sump->window;
  const auto& stride = maxp ? maxp->stride : sump->stride;

  std::vector<double> den(rel_out.size(), epsilon);
  detail::for_each_pool_pair(window, stride, in_acts.shape(), rel_out.shape(),
                             [&](std::size_t ii, std::size_t oi) { den[oi] += in_acts[ii]; });
  Tensor rel_in(in_acts.shape());
  detail::for_each_pool_pair(window, stride, in_acts.shape(), rel_out.shape(),
                             [&](std::size_t ii, std::size_t oi) {
                               rel_in[ii] += in_acts[ii] / den[oi] * rel_out[oi];
                             });
  return rel_in;
}

// zB rule for the first convolution: every term a_i w - l w+ - h w- is
// non-negative for l <= a <= h, so the redistributed relevance stays
// non-negative. Padding positions are outside the pixel domain and excluded.
inline Tensor zB_backward(const LayerSpec& layer, const LayerParams& params,
                          const Tensor& input, const std::vector<double>& low,
                          const std::vector<double>& high, const Tensor& rel_out,
                          double epsilon) {
  const auto* conv = std::get_if<Conv3D>(&layer);
  if (!conv) throw std::invalid_argument("zB_backward: layer must be Conv3D");
  if (rel_out.shape() != layer_output_shape(layer, input.shape()))
    throw std::invalid_argument("zB_backward: relevance shape mismatch");
  const auto& in_shape = input.shape();
  const std::size_t plane = in_shape[1] * in_shape[2] * in_shape[3];
  for (std::size_t i = 0; i < input.size(); ++i) {
    const std::size_t c = i / plane;
    if (input[i] < detail::channel_bound(low, c, "zB_backward") ||
        input[i] > detail::channel_bound(high, c, "zB_backward"))
      throw std::invalid_argument("zB_backward: input outside [low, high]");
  }

  auto term = [&](std::size_t xi, double w, std::size_t c) {
    const double l = detail::channel_bound(low, c, "zB_backward");
    const double h = detail::channel_bound(high, c, "zB_backward");
    const double wpos = w > 0.0 ? w : 0.0;
    const double wneg = w < 0.0 ? w : 0.0;
    return input[xi] * w - l * wpos - h * wneg;
  };

  std::vector<double> den(rel_out.size(), epsilon);
  detail::for_each_conv_tap(*conv, in_shape, rel_out.shape(), params.weight.data(),
                            [&](std::size_t xi, std::size_t oi, double w, std::size_t c) {
                              den[oi] += term(xi, w, c);
                            });
  Tensor rel_in(in_shape);
  detail::for_each_conv_tap(*conv, in_shape, rel_out.shape(), params.weight.data(),
                            [&](std::size_t xi, std::size_t oi, double w, std::size_t c) {
                              rel_in[xi] += term(xi, w, c) / den[oi] * rel_out[oi];
                            });
  return rel_in;
}

// Full deep Taylor pass from the explained logit down to the input pixels.
inline AttributionMap dtd_explain(const NetworkSpec& net, const ForwardTrace& trace,
                                  const RelevanceConfig& config) {
  if (trace.layer_count() != net.layers.size() || trace.logits.size() != net.class_count)
    throw std::invalid_argument("dtd_explain: trace does not match network");
  for (std::size_t i = 0; i < net.layers.size(); ++i)
    if (trace.layer_output(i).shape() !=
        layer_output_shape(net.layers[i], trace.layer_input(i).shape()))
      throw std::invalid_argument("dtd_explain: trace does not match network");

  std::size_t target;
  if (config.target_class) {
    target = *config.target_class;
    if (target >= net.class_count)
      throw std::invalid_argument("dtd_explain: target class out of range");
  } else {
    target = 0;
    for (std::size_t i = 1; i < trace.logits.size(); ++i)
      if (trace.logits[i] > trace.logits[target]) target = i;
  }
  const double explained = trace.logits[target];
  if (!std::isfinite(explained))
    throw std::invalid_argument("dtd_explain: explained logit is not finite");

  AttributionMap map;
  map.method = Method::DTD;
  map.explained_class = target;
  map.explained_value = explained;
  if (explained <= 0.0)
    map.warning = "non-positive explained logit: relevance propagation degenerates";

  std::size_t first_conv = net.layers.size();
  for (std::size_t i = 0; i < net.layers.size(); ++i)
    if (std::holds_alternative<Conv3D>(net.layers[i])) {
      first_conv = i;
      break;
    }

  Tensor rel({net.class_count});
  rel[target] = explained;
  for (std::size_t idx = net.layers.size(); idx-- > 0;) {
    const LayerSpec& layer = net.layers[idx];
    const Tensor& in = trace.layer_input(idx);
    if (std::holds_alternative<ReLU>(layer)) {
      continue;  // relevance passes through unchanged
    } else if (std::holds_alternative<Flatten>(layer)) {
      rel = rel.reshaped(in.shape());
    } else if (std::holds_alternative<MaxPool3D>(layer) ||
               std::holds_alternative<SumPool3D>(layer)) {
      rel = pool_backward(layer, in, rel, config.epsilon);
    } else if (idx == first_conv) {
      rel = zB_backward(layer, net.params[idx], in, config.input_low, config.input_high, rel,
                        config.epsilon);
    } else {
      rel = zplus_backward(layer, net.params[idx], in, rel, config.epsilon);
    }
  }
  map.scores = std::move(rel);
  return map;
}

// Squared partial derivatives of the explained logit; the scores decompose
// the squared gradient norm.
inline AttributionMap sensitivity_explain(const NetworkSpec& net, const Tensor& input,
                                          std::size_t class_index) {
  Tensor scores = gradient(net, input, class_index);
  for (double& v : scores.values()) v = v * v;
  AttributionMap map;
  map.method = Method::Sensitivity;
  map.explained_class = class_index;
  map.scores = std::move(scores);
  map.explained_value = map.scores.sum();
  return map;
}

struct Explainer {
  Method method = Method::DTD;
  RelevanceConfig config;
};

inline AttributionMap explain(const NetworkSpec& net, const Tensor& input,
                              const Explainer& explainer) {
  if (explainer.method == Method::DTD) {
    const ForwardTrace trace = forward(net, input);
    return dtd_explain(net, trace, explainer.config);
  }
  std::size_t target;
  if (explainer.config.target_class) {
    target = *explainer.config.target_class;
    if (target >= net.class_count)
      throw std::invalid_argument("sensitivity_explain: target class out of range");
  } else {
    target = predict(net, input).second;
  }
  return sensitivity_explain(net, input, target);
}

}  // namespace vxt
