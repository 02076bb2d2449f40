#pragma once

// Dense row-major tensor of doubles plus the two reduction/selection
// primitives the rest of the engine is built on.

#include <algorithm>
#include <cstddef>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace vxt {

class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(std::vector<std::size_t> shape)
      : shape_(std::move(shape)), data_(count(shape_), 0.0) {}

  Tensor(std::vector<std::size_t> shape, std::vector<double> data)
      : shape_(std::move(shape)), data_(std::move(data)) {
    if (count(shape_) != data_.size())
      throw std::invalid_argument("Tensor: shape/data size mismatch");
  }

  static Tensor full(std::vector<std::size_t> shape, double value) {
    Tensor t(std::move(shape));
    std::fill(t.data_.begin(), t.data_.end(), value);
    return t;
  }

  // Zero tensor of the same shape; a default-constructed (absent) tensor
  // stays absent rather than becoming a rank-0 scalar.
  static Tensor zeros_like(const Tensor& other) {
    Tensor t;
    t.shape_ = other.shape_;
    t.data_.assign(other.data_.size(), 0.0);
    return t;
  }

  const std::vector<std::size_t>& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return data_.size(); }
  std::size_t extent(std::size_t axis) const { return shape_.at(axis); }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  std::vector<double>& values() { return data_; }
  const std::vector<double>& values() const { return data_; }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  // Row-major offset of a multi-index.
  std::size_t offset(std::span<const std::size_t> index) const {
    if (index.size() != shape_.size())
      throw std::invalid_argument("Tensor: index rank mismatch");
    std::size_t off = 0;
    for (std::size_t axis = 0; axis < shape_.size(); ++axis) {
      if (index[axis] >= shape_[axis])
        throw std::invalid_argument("Tensor: index out of bounds");
      off = off * shape_[axis] + index[axis];
    }
    return off;
  }

  double& at(std::initializer_list<std::size_t> index) {
    return data_[offset(std::span<const std::size_t>(index.begin(), index.size()))];
  }
  double at(std::initializer_list<std::size_t> index) const {
    return data_[offset(std::span<const std::size_t>(index.begin(), index.size()))];
  }

  Tensor reshaped(std::vector<std::size_t> new_shape) const {
    if (count(new_shape) != data_.size())
      throw std::invalid_argument("Tensor: reshape changes element count");
    return Tensor(std::move(new_shape), data_);
  }

  // Plain left-to-right accumulation; callers rely on the fixed order.
  double sum() const {
    double total = 0.0;
    for (double v : data_) total += v;
    return total;
  }

  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

  static std::size_t count(const std::vector<std::size_t>& shape) {
    std::size_t n = 1;
    for (std::size_t e : shape) n *= e;
    return n;
  }

 private:
  std::vector<std::size_t> shape_;
  std::vector<double> data_;
};

// Indices of the k largest values, descending; ties broken by lower index.
inline std::vector<std::size_t> top_k_indices(std::span<const double> values,
                                              std::size_t k) {
  if (k < 1 || k > values.size())
    throw std::invalid_argument("top_k_indices: k out of range [1, size]");
  std::vector<std::size_t> order(values.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k),
                    order.end(), [&](std::size_t a, std::size_t b) {
                      if (values[a] != values[b]) return values[a] > values[b];
                      return a < b;
                    });
  order.resize(k);
  return order;
}

inline std::vector<std::size_t> top_k_indices(const std::vector<double>& values,
                                              std::size_t k) {
  return top_k_indices(std::span<const double>(values), k);
}

// Sums out every axis except keep_axis; entry j collects all elements whose
// keep_axis coordinate is j, in row-major traversal order.
inline std::vector<double> reduce_over_axes(const Tensor& t, std::size_t keep_axis) {
  if (keep_axis >= t.rank())
    throw std::invalid_argument("reduce_over_axes: axis out of range");
  const auto& shape = t.shape();
  std::size_t inner = 1;  // product of extents after keep_axis
  for (std::size_t axis = keep_axis + 1; axis < shape.size(); ++axis)
    inner *= shape[axis];
  const std::size_t kept = shape[keep_axis];
  std::vector<double> out(kept, 0.0);
  const double* p = t.data();
  const std::size_t n = t.size();
  for (std::size_t i = 0; i < n; ++i) out[(i / inner) % kept] += p[i];
  return out;
}

}  // namespace vxt
