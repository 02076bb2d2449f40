#pragma once

// Test-only reference implementations, deliberately independent of the
// library code paths they are used to check.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <stdexcept>
#include <vector>

namespace oracle {

// Full stable sort by (value desc, index asc).
inline std::vector<std::size_t> topk_by_sort(const std::vector<double>& values,
                                             std::size_t k) {
  std::vector<std::size_t> order(values.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (values[a] != values[b]) return values[a] > values[b];
    return a < b;
  });
  order.resize(k);
  return order;
}

// Triple nested loop over an explicit (d0, d1, d2) array.
inline std::vector<double> axis_sum_3d(const std::vector<double>& data,
                                       std::array<std::size_t, 3> dims,
                                       std::size_t keep_axis) {
  std::vector<double> out(dims[keep_axis], 0.0);
  for (std::size_t i = 0; i < dims[0]; ++i)
    for (std::size_t j = 0; j < dims[1]; ++j)
      for (std::size_t k = 0; k < dims[2]; ++k) {
        const std::size_t coords[3] = {i, j, k};
        out[coords[keep_axis]] += data[(i * dims[1] + j) * dims[2] + k];
      }
  return out;
}

// Direct 7-loop 3D convolution; layouts match the library convention
// (input c,t,h,w; weight o,i,kt,kh,kw) but the arithmetic is written from
// scratch with signed coordinates.
inline std::vector<double> conv3d_naive(const std::vector<double>& input,
                                        std::array<std::size_t, 4> in_dims,
                                        const std::vector<double>& weight,
                                        std::size_t out_channels,
                                        std::array<std::size_t, 3> kernel,
                                        std::array<std::size_t, 3> stride,
                                        std::array<std::size_t, 3> pad,
                                        const std::vector<double>& bias,
                                        std::array<std::size_t, 4>& out_dims) {
  const auto ext = [](std::size_t in, std::size_t p, std::size_t kk, std::size_t s) {
    return (in + 2 * p - kk) / s + 1;
  };
  out_dims = {out_channels, ext(in_dims[1], pad[0], kernel[0], stride[0]),
              ext(in_dims[2], pad[1], kernel[1], stride[1]),
              ext(in_dims[3], pad[2], kernel[2], stride[2])};
  std::vector<double> out(out_dims[0] * out_dims[1] * out_dims[2] * out_dims[3], 0.0);
  for (std::size_t oc = 0; oc < out_dims[0]; ++oc)
    for (std::size_t ot = 0; ot < out_dims[1]; ++ot)
      for (std::size_t oh = 0; oh < out_dims[2]; ++oh)
        for (std::size_t ow = 0; ow < out_dims[3]; ++ow) {
          double acc = bias.empty() ? 0.0 : bias[oc];
          for (std::size_t ic = 0; ic < in_dims[0]; ++ic)
            for (std::size_t kt = 0; kt < kernel[0]; ++kt)
              for (std::size_t kh = 0; kh < kernel[1]; ++kh)
                for (std::size_t kw = 0; kw < kernel[2]; ++kw) {
                  const long t = static_cast<long>(ot * stride[0] + kt) - static_cast<long>(pad[0]);
                  const long h = static_cast<long>(oh * stride[1] + kh) - static_cast<long>(pad[1]);
                  const long w = static_cast<long>(ow * stride[2] + kw) - static_cast<long>(pad[2]);
                  if (t < 0 || h < 0 || w < 0 || t >= static_cast<long>(in_dims[1]) ||
                      h >= static_cast<long>(in_dims[2]) || w >= static_cast<long>(in_dims[3]))
                    continue;
                  acc += weight[((oc * in_dims[0] + ic) * kernel[0] + kt) * kernel[1] * kernel[2] +
                                kh * kernel[2] + kw] *
                         input[((ic * in_dims[1] + static_cast<std::size_t>(t)) * in_dims[2] +
                                static_cast<std::size_t>(h)) *
                                   in_dims[3] +
                               static_cast<std::size_t>(w)];
                }
          out[((oc * out_dims[1] + ot) * out_dims[2] + oh) * out_dims[3] + ow] = acc;
        }
  return out;
}

inline double kahan_sum(const std::vector<double>& values) {
  double sum = 0.0, comp = 0.0;
  for (double v : values) {
    const double y = v - comp;
    const double t = sum + y;
    comp = (t - sum) - y;
    sum = t;
  }
  return sum;
}

// Least squares via Householder QR on the explicit design matrix; used as an
// independent check of the normal-equation fits.
inline std::vector<double> qr_least_squares(std::vector<std::vector<double>> a,
                                            std::vector<double> b) {
  const std::size_t rows = a.size();
  const std::size_t cols = a.front().size();
  for (std::size_t k = 0; k < cols; ++k) {
    double norm = 0.0;
    for (std::size_t i = k; i < rows; ++i) norm += a[i][k] * a[i][k];
    norm = std::sqrt(norm);
    if (norm == 0.0) throw std::runtime_error("qr: rank deficient");
    if (a[k][k] < 0.0) norm = -norm;
    std::vector<double> v(rows, 0.0);
    for (std::size_t i = k; i < rows; ++i) v[i] = a[i][k];
    v[k] += norm;
    double vnorm2 = 0.0;
    for (std::size_t i = k; i < rows; ++i) vnorm2 += v[i] * v[i];
    for (std::size_t j = k; j < cols; ++j) {
      double dot = 0.0;
      for (std::size_t i = k; i < rows; ++i) dot += v[i] * a[i][j];
      const double f = 2.0 * dot / vnorm2;
      for (std::size_t i = k; i < rows; ++i) a[i][j] -= f * v[i];
    }
    double dot = 0.0;
    for (std::size_t i = k; i < rows; ++i) dot += v[i] * b[i];
    const double f = 2.0 * dot / vnorm2;
    for (std::size_t i = k; i < rows; ++i) b[i] -= f * v[i];
  }
  std::vector<double> x(cols, 0.0);
  for (std::size_t row = cols; row-- > 0;) {
    double acc = b[row];
    for (std::size_t j = row + 1; j < cols; ++j) acc -= a[row][j] * x[j];
    x[row] = acc / a[row][row];
  }
  return x;
}

// ---- Symbolic deep Taylor oracle over explicit neuron-level matrices ----
//
// A tiny network is a list of layers over flat activation vectors. Affine
// layers carry hand-written weight matrices (convolutions unrolled by hand),
// pools carry explicit window index sets. The relevance rules are evaluated
// directly from their formulas.

struct TinyLayer {
  enum Kind { Affine, AffineFirst, PoolSum, PoolMax, Relu } kind = Affine;
  std::vector<std::vector<double>> weights;        // [out][in]
  std::vector<double> bias;                        // optional, forward only
  std::vector<std::vector<std::size_t>> windows;   // [out] -> input indices
  double low = 0.0, high = 1.0;                    // AffineFirst box bounds
};

inline std::vector<std::vector<double>> tiny_forward(const std::vector<TinyLayer>& layers,
                                                     const std::vector<double>& input) {
  std::vector<std::vector<double>> acts{input};
  for (const auto& layer : layers) {
    const auto& in = acts.back();
    std::vector<double> out;
    switch (layer.kind) {
      case TinyLayer::Affine:
      case TinyLayer::AffineFirst:
        out.resize(layer.weights.size(), 0.0);
        for (std::size_t j = 0; j < out.size(); ++j) {
          double acc = layer.bias.empty() ? 0.0 : layer.bias[j];
          for (std::size_t i = 0; i < in.size(); ++i) acc += layer.weights[j][i] * in[i];
          out[j] = acc;
        }
        break;
      case TinyLayer::PoolSum:
        out.resize(layer.windows.size(), 0.0);
        for (std::size_t j = 0; j < out.size(); ++j)
          for (std::size_t i : layer.windows[j]) out[j] += in[i];
        break;
      case TinyLayer::PoolMax:
        out.resize(layer.windows.size(), 0.0);
        for (std::size_t j = 0; j < out.size(); ++j) {
          double best = in[layer.windows[j].front()];
          for (std::size_t i : layer.windows[j]) best = std::max(best, in[i]);
          out[j] = best;
        }
        break;
      case TinyLayer::Relu:
        out = in;
        for (double& v : out) v = std::max(v, 0.0);
        break;
    }
    acts.push_back(std::move(out));
  }
  return acts;
}

inline std::vector<double> tiny_dtd(const std::vector<TinyLayer>& layers,
                                    const std::vector<double>& input, std::size_t target,
                                    double epsilon) {
  const auto acts = tiny_forward(layers, input);
  std::vector<double> rel(acts.back().size(), 0.0);
  rel[target] = acts.back()[target];
  for (std::size_t li = layers.size(); li-- > 0;) {
    const auto& layer = layers[li];
    const auto& in = acts[li];
    std::vector<double> rin(in.size(), 0.0);
    switch (layer.kind) {
      case TinyLayer::Affine:
        for (std::size_t j = 0; j < rel.size(); ++j) {
          double den = epsilon;
          for (std::size_t i = 0; i < in.size(); ++i)
            den += in[i] * std::max(layer.weights[j][i], 0.0);
          for (std::size_t i = 0; i < in.size(); ++i)
            rin[i] += in[i] * std::max(layer.weights[j][i], 0.0) / den * rel[j];
        }
        break;
      case TinyLayer::AffineFirst:
        for (std::size_t j = 0; j < rel.size(); ++j) {
          double den = epsilon;
          for (std::size_t i = 0; i < in.size(); ++i) {
            const double w = layer.weights[j][i];
            den += in[i] * w - layer.low * std::max(w, 0.0) - layer.high * std::min(w, 0.0);
          }
          for (std::size_t i = 0; i < in.size(); ++i) {
            const double w = layer.weights[j][i];
            const double z =
                in[i] * w - layer.low * std::max(w, 0.0) - layer.high * std::min(w, 0.0);
            rin[i] += z / den * rel[j];
          }
        }
        break;
      case TinyLayer::PoolSum:
      case TinyLayer::PoolMax:
        for (std::size_t j = 0; j < rel.size(); ++j) {
          double den = epsilon;
          for (std::size_t i : layer.windows[j]) den += in[i];
          for (std::size_t i : layer.windows[j]) rin[i] += in[i] / den * rel[j];
        }
        break;
      case TinyLayer::Relu:
        rin = rel;
        break;
    }
    rel = std::move(rin);
  }
  return rel;
}

}  // namespace oracle
