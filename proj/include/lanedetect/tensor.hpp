#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <type_traits>
#include <utility>
#include <vector>

#include "lanedetect/errors.hpp"

namespace lanedetect {

enum class DType : std::uint8_t { f32 = 0, f64 = 1 };

template <class T>
constexpr DType dtype_of() {
  static_assert(std::is_same_v<T, float> || std::is_same_v<T, double>,
                "tensors hold float or double");
  return std::is_same_v<T, float> ? DType::f32 : DType::f64;
}

/// Dimensions of a rank-4 NCHW tensor. Width is the fastest-varying index.
struct Shape {
  std::size_t n = 1;
  std::size_t c = 1;
  std::size_t h = 1;
  std::size_t w = 1;

  /// Element count; throws SizeError when the product overflows.
  std::size_t numel() const;
  /// Elements per batch item (c*h*w).
  std::size_t item_size() const { return numel() / n; }
  bool valid() const { return n >= 1 && c >= 1 && h >= 1 && w >= 1; }
  std::string str() const;

  friend bool operator==(const Shape&, const Shape&) = default;
};

/// Throws ShapeError unless every dimension is at least 1, SizeError on overflow.
void check_shape(const Shape& shape);

/// Dense rank-4 array, NCHW, contiguous and row-major.
///
/// A default-constructed Tensor is empty (all dims 0) and only meaningful as a
/// placeholder; every factory validates dimensions.
template <class T>
class Tensor {
  static_assert(std::is_same_v<T, float> || std::is_same_v<T, double>);

 public:
  using value_type = T;
  static constexpr DType dtype = dtype_of<T>();

  Tensor() : shape_{0, 0, 0, 0} {}

  Tensor(const Shape& shape, std::vector<T> values) : shape_(shape), data_(std::move(values)) {
    check_shape(shape_);
    if (data_.size() != shape_.numel()) {
      throw ShapeError("tensor of shape " + shape_.str() + " given " +
                       std::to_string(data_.size()) + " values");
    }
  }

  static Tensor zeros(const Shape& shape) { return full(shape, T(0)); }

  static Tensor full(const Shape& shape, T value) {
    check_shape(shape);
    return Tensor(shape, std::vector<T>(shape.numel(), value));
  }

  const Shape& shape() const noexcept { return shape_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  std::span<T> values() noexcept { return data_; }
  std::span<const T> values() const noexcept { return data_; }
  T* data() noexcept { return data_.data(); }
  const T* data() const noexcept { return data_.data(); }

  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  std::size_t offset(std::size_t n, std::size_t c, std::size_t h, std::size_t w) const noexcept {
    return ((n * shape_.c + c) * shape_.h + h) * shape_.w + w;
  }
  T& at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) {
    return data_[offset(n, c, h, w)];
  }
  const T& at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) const {
    return data_[offset(n, c, h, w)];
  }

  /// Batch item `n` as a contiguous (c,h,w) block.
  std::span<T> item(std::size_t n) {
    return std::span<T>(data_).subspan(n * shape_.item_size(), shape_.item_size());
  }
  std::span<const T> item(std::size_t n) const {
    return std::span<const T>(data_).subspan(n * shape_.item_size(), shape_.item_size());
  }

  template <class U>
  Tensor<U> cast() const {
    std::vector<U> out(data_.begin(), data_.end());
    return Tensor<U>(shape_, std::move(out));
  }

  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.shape_ == b.shape_ && a.data_ == b.data_;
  }

 private:
  Shape shape_;
  std::vector<T> data_;
};

using TensorF = Tensor<float>;
using TensorD = Tensor<double>;

enum class ElementwiseOp { add, sub, mul };

template <class T>
Tensor<T> elementwise(const Tensor<T>& a, const Tensor<T>& b, ElementwiseOp op) {
  if (a.shape() != b.shape()) {
    throw ShapeError("elementwise: " + a.shape().str() + " vs " + b.shape().str());
  }
  std::vector<T> out(a.size());
  const T* pa = a.data();
  const T* pb = b.data();
  switch (op) {
    case ElementwiseOp::add:
      for (std::size_t i = 0; i < out.size(); ++i) out[i] = pa[i] + pb[i];
      break;
    case ElementwiseOp::sub:
      for (std::size_t i = 0; i < out.size(); ++i) out[i] = pa[i] - pb[i];
      break;
    case ElementwiseOp::mul:
      for (std::size_t i = 0; i < out.size(); ++i) out[i] = pa[i] * pb[i];
      break;
  }
  return Tensor<T>(a.shape(), std::move(out));
}

template <class T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) { return elementwise(a, b, ElementwiseOp::add); }
template <class T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) { return elementwise(a, b, ElementwiseOp::sub); }
template <class T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) { return elementwise(a, b, ElementwiseOp::mul); }

/// Sum of all elements in index order, accumulated in double.
template <class T>
double reduce_sum(std::span<const T> values) {
  double acc = 0.0;
  for (T v : values) acc += static_cast<double>(v);
  return acc;
}

template <class T>
double reduce_sum(const Tensor<T>& a) {
  return reduce_sum<T>(a.values());
}

/// <a, b> with products and sum formed in double.
template <class T>
double dot(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError("dot: " + a.shape().str() + " vs " + b.shape().str());
  }
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    acc += static_cast<double>(a[i]) * static_cast<double>(b[i]);
  }
  return acc;
}

/// Items [first, first + count) of the batch dimension.
template <class T>
Tensor<T> slice_batch(const Tensor<T>& a, std::size_t first, std::size_t count) {
  const Shape& s = a.shape();
  if (count == 0 || first + count > s.n) {
    throw ShapeError("slice_batch: items [" + std::to_string(first) + ", " +
                     std::to_string(first + count) + ") of " + s.str());
  }
  const std::size_t item = s.item_size();
  std::vector<T> out(a.data() + first * item, a.data() + (first + count) * item);
  return Tensor<T>(Shape{count, s.c, s.h, s.w}, std::move(out));
}

/// Concatenation along the batch dimension; all parts must agree on (c, h, w).
template <class T>
Tensor<T> concat_batch(const std::vector<Tensor<T>>& parts) {
  if (parts.empty()) throw ShapeError("concat_batch: nothing to concatenate");
  Shape s = parts.front().shape();
  std::vector<T> out;
  std::size_t n = 0;
  for (const auto& p : parts) {
    const Shape& ps = p.shape();
    if (ps.c != s.c || ps.h != s.h || ps.w != s.w) {
      throw ShapeError("concat_batch: " + ps.str() + " vs " + s.str());
    }
    out.insert(out.end(), p.values().begin(), p.values().end());
    n += ps.n;
  }
  s.n = n;
  return Tensor<T>(s, std::move(out));
}

template <class T>
bool all_finite(std::span<const T> values) {
  for (T v : values) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

}  // namespace lanedetect
