#include "lanedetect/layers.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <atomic>
#include <cmath>

namespace lanedetect {

namespace {

std::atomic<double> g_conv_backward_fault{0.0};

template <class T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class T>
using MatMap = Eigen::Map<RowMatrix<T>>;
template <class T>
using ConstMatMap = Eigen::Map<const RowMatrix<T>>;

/// Geometry shared by im2col/col2im: an image (channels, h, w) sampled by a
/// kh x kw window with the given stride/padding onto an out_h x out_w grid.
struct Patch {
  std::size_t channels, h, w, kh, kw, stride, pad, out_h, out_w;

  std::size_t rows() const { return channels * kh * kw; }
  std::size_t cols() const { return out_h * out_w; }

  // Output columns j for which j*stride + offset - pad lands in [0, w).
  void valid_range(std::size_t offset, std::size_t extent, std::size_t count, std::size_t& lo,
                   std::size_t& hi) const {
    const long long shift = static_cast<long long>(offset) - static_cast<long long>(pad);
    const long long s = static_cast<long long>(stride);
    long long first = shift >= 0 ? 0 : (-shift + s - 1) / s;
    long long last = (static_cast<long long>(extent) - 1 - shift);  // j*s <= last
    last = last < 0 ? -1 : last / s;
    first = std::min<long long>(first, static_cast<long long>(count));
    last = std::min<long long>(last, static_cast<long long>(count) - 1);
    lo = static_cast<std::size_t>(first);
    hi = last < first ? lo : static_cast<std::size_t>(last + 1);
  }
};

template <class T>
void im2col(const T* img, const Patch& g, T* col) {
  const std::size_t ncols = g.cols();
  for (std::size_t c = 0; c < g.channels; ++c) {
    for (std::size_t u = 0; u < g.kh; ++u) {
      std::size_t ilo, ihi;
      g.valid_range(u, g.h, g.out_h, ilo, ihi);
      for (std::size_t v = 0; v < g.kw; ++v) {
        std::size_t jlo, jhi;
        g.valid_range(v, g.w, g.out_w, jlo, jhi);
        T* row = col + ((c * g.kh + u) * g.kw + v) * ncols;
        std::fill(row, row + ncols, T(0));
        for (std::size_t i = ilo; i < ihi; ++i) {
          const std::size_t y = i * g.stride + u - g.pad;
          const T* src = img + (c * g.h + y) * g.w;
          T* dst = row + i * g.out_w;
          for (std::size_t j = jlo; j < jhi; ++j) dst[j] = src[j * g.stride + v - g.pad];
        }
      }
    }
  }
}

/// Adjoint of im2col: accumulates every column entry back onto its pixel.
template <class T>
void col2im(const T* col, const Patch& g, T* img) {
  const std::size_t ncols = g.cols();
  std::fill(img, img + g.channels * g.h * g.w, T(0));
  for (std::size_t c = 0; c < g.channels; ++c) {
    for (std::size_t u = 0; u < g.kh; ++u) {
      std::size_t ilo, ihi;
      g.valid_range(u, g.h, g.out_h, ilo, ihi);
      for (std::size_t v = 0; v < g.kw; ++v) {
        std::size_t jlo, jhi;
        g.valid_range(v, g.w, g.out_w, jlo, jhi);
        const T* row = col + ((c * g.kh + u) * g.kw + v) * ncols;
        for (std::size_t i = ilo; i < ihi; ++i) {
          const std::size_t y = i * g.stride + u - g.pad;
          T* dst = img + (c * g.h + y) * g.w;
          const T* src = row + i * g.out_w;
          for (std::size_t j = jlo; j < jhi; ++j) dst[j * g.stride + v - g.pad] += src[j];
        }
      }
    }
  }
}

template <class T>
void check_params(const ConvParams<T>& p, std::size_t out_channels, const char* op) {
  if (p.weights.empty()) throw ShapeError(std::string(op) + ": missing weights");
  if (p.stride < 1) throw ShapeError(std::string(op) + ": stride must be >= 1");
  if (p.bias.size() != out_channels) {
    throw ShapeError(std::string(op) + ": bias has " + std::to_string(p.bias.size()) +
                     " entries, expected " + std::to_string(out_channels));
  }
}

template <class T>
std::vector<T> channel_sums(const Tensor<T>& t) {
  const Shape& s = t.shape();
  const std::size_t plane = s.h * s.w;
  std::vector<T> out(s.c);
  for (std::size_t c = 0; c < s.c; ++c) {
    double acc = 0.0;
    for (std::size_t n = 0; n < s.n; ++n) {
      const T* src = t.data() + (n * s.c + c) * plane;
      for (std::size_t i = 0; i < plane; ++i) acc += static_cast<double>(src[i]);
    }
    out[c] = static_cast<T>(acc);
  }
  return out;
}

template <class T>
void add_bias(Tensor<T>& y, const std::vector<T>& bias) {
  const Shape& s = y.shape();
  const std::size_t plane = s.h * s.w;
  for (std::size_t n = 0; n < s.n; ++n) {
    for (std::size_t c = 0; c < s.c; ++c) {
      T* dst = y.data() + (n * s.c + c) * plane;
      const T b = bias[c];
      for (std::size_t i = 0; i < plane; ++i) dst[i] += b;
    }
  }
}

// Patch geometry of the convolution whose input is `image` (per-item c,h,w).
Patch conv_patch(const Shape& image, const Shape& weights, std::size_t stride, std::size_t padding,
                 const Shape& grid) {
  return Patch{image.c, image.h, image.w, weights.h, weights.w, stride, padding, grid.h, grid.w};
}

}  // namespace

Shape conv2d_output_shape(const Shape& input, const Shape& weights, std::size_t stride,
                          std::size_t padding) {
  if (stride < 1) throw ShapeError("conv2d: stride must be >= 1");
  if (input.c != weights.c) {
    throw ShapeError("conv2d: input has " + std::to_string(input.c) + " channels, weights expect " +
                     std::to_string(weights.c));
  }
  const std::size_t ph = input.h + 2 * padding;
  const std::size_t pw = input.w + 2 * padding;
  if (ph < weights.h || pw < weights.w) throw ShapeError("conv2d: kernel larger than padded input");
  if ((ph - weights.h) % stride != 0 || (pw - weights.w) % stride != 0) {
    throw ShapeError("conv2d: input " + input.str() + " does not tile with kernel " +
                     weights.str() + " at stride " + std::to_string(stride));
  }
  return Shape{input.n, weights.n, (ph - weights.h) / stride + 1, (pw - weights.w) / stride + 1};
}

Shape convtranspose2d_output_shape(const Shape& input, const Shape& weights, std::size_t stride,
                                   std::size_t padding) {
  if (stride < 1) throw ShapeError("convtranspose2d: stride must be >= 1");
  if (input.c != weights.n) {
    throw ShapeError("convtranspose2d: input has " + std::to_string(input.c) +
                     " channels, weights expect " + std::to_string(weights.n));
  }
  const std::size_t full_h = (input.h - 1) * stride + weights.h;
  const std::size_t full_w = (input.w - 1) * stride + weights.w;
  if (full_h <= 2 * padding || full_w <= 2 * padding) {
    throw ShapeError("convtranspose2d: padding removes the whole output");
  }
  return Shape{input.n, weights.c, full_h - 2 * padding, full_w - 2 * padding};
}

template <class T>
Tensor<T> conv2d_forward(const Tensor<T>& x, const ConvParams<T>& p) {
  check_params(p, p.weights.shape().n, "conv2d");
  const Shape out_shape = conv2d_output_shape(x.shape(), p.weights.shape(), p.stride, p.padding);
  Tensor<T> y = Tensor<T>::zeros(out_shape);
  const Patch g = conv_patch(x.shape(), p.weights.shape(), p.stride, p.padding, out_shape);
  std::vector<T> col(g.rows() * g.cols());
  ConstMatMap<T> w(p.weights.data(), out_shape.c, g.rows());
  for (std::size_t n = 0; n < x.shape().n; ++n) {
    im2col(x.item(n).data(), g, col.data());
    MatMap<T> out(y.item(n).data(), out_shape.c, g.cols());
    out.noalias() = w * ConstMatMap<T>(col.data(), g.rows(), g.cols());
  }
  add_bias(y, p.bias);
  return y;
}

template <class T>
LayerGrads<T> conv2d_backward(const Tensor<T>& x, const ConvParams<T>& p, const Tensor<T>& d_out,
                              bool input_grad) {
  check_params(p, p.weights.shape().n, "conv2d_backward");
  const Shape out_shape = conv2d_output_shape(x.shape(), p.weights.shape(), p.stride, p.padding);
  if (d_out.shape() != out_shape) {
    throw ShapeError("conv2d_backward: d_out " + d_out.shape().str() + " expected " +
                     out_shape.str());
  }
  const Patch g = conv_patch(x.shape(), p.weights.shape(), p.stride, p.padding, out_shape);
  LayerGrads<T> grads;
  grads.d_weights = Tensor<T>::zeros(p.weights.shape());
  if (input_grad) grads.d_input = Tensor<T>::zeros(x.shape());
  std::vector<T> col(g.rows() * g.cols());
  ConstMatMap<T> w(p.weights.data(), out_shape.c, g.rows());
  MatMap<T> dw(grads.d_weights.data(), out_shape.c, g.rows());
  for (std::size_t n = 0; n < x.shape().n; ++n) {
    ConstMatMap<T> dy(d_out.item(n).data(), out_shape.c, g.cols());
    im2col(x.item(n).data(), g, col.data());
    dw.noalias() += dy * ConstMatMap<T>(col.data(), g.rows(), g.cols()).transpose();
    if (input_grad) {
      MatMap<T> dcol(col.data(), g.rows(), g.cols());
      dcol.noalias() = w.transpose() * dy;
      col2im(col.data(), g, grads.d_input.item(n).data());
    }
  }
  grads.d_bias = channel_sums(d_out);
  const double fault = g_conv_backward_fault.load();
  if (fault != 0.0) {
    for (T& v : grads.d_weights.values()) v *= static_cast<T>(1.0 + fault);
  }
  return grads;
}

template <class T>
Tensor<T> convtranspose2d_forward(const Tensor<T>& x, const ConvParams<T>& p) {
  check_params(p, p.weights.shape().c, "convtranspose2d");
  const Shape out_shape =
      convtranspose2d_output_shape(x.shape(), p.weights.shape(), p.stride, p.padding);
  Tensor<T> y = Tensor<T>::zeros(out_shape);
  // The output plays the role of the convolution's input image.
  const Patch g = conv_patch(out_shape, p.weights.shape(), p.stride, p.padding, x.shape());
  std::vector<T> col(g.rows() * g.cols());
  ConstMatMap<T> w(p.weights.data(), x.shape().c, g.rows());
  for (std::size_t n = 0; n < x.shape().n; ++n) {
    MatMap<T> c(col.data(), g.rows(), g.cols());
    c.noalias() = w.transpose() * ConstMatMap<T>(x.item(n).data(), x.shape().c, g.cols());
    col2im(col.data(), g, y.item(n).data());
  }
  add_bias(y, p.bias);
  return y;
}

template <class T>
LayerGrads<T> convtranspose2d_backward(const Tensor<T>& x, const ConvParams<T>& p,
                                       const Tensor<T>& d_out, bool input_grad) {
  check_params(p, p.weights.shape().c, "convtranspose2d_backward");
  const Shape out_shape =
      convtranspose2d_output_shape(x.shape(), p.weights.shape(), p.stride, p.padding);
  if (d_out.shape() != out_shape) {
    throw ShapeError("convtranspose2d_backward: d_out " + d_out.shape().str() + " expected " +
                     out_shape.str());
  }
  const Patch g = conv_patch(out_shape, p.weights.shape(), p.stride, p.padding, x.shape());
  LayerGrads<T> grads;
  grads.d_weights = Tensor<T>::zeros(p.weights.shape());
  if (input_grad) grads.d_input = Tensor<T>::zeros(x.shape());
  std::vector<T> col(g.rows() * g.cols());
  ConstMatMap<T> w(p.weights.data(), x.shape().c, g.rows());
  MatMap<T> dw(grads.d_weights.data(), x.shape().c, g.rows());
  for (std::size_t n = 0; n < x.shape().n; ++n) {
    im2col(d_out.item(n).data(), g, col.data());
    ConstMatMap<T> dcol(col.data(), g.rows(), g.cols());
    ConstMatMap<T> xn(x.item(n).data(), x.shape().c, g.cols());
    dw.noalias() += xn * dcol.transpose();
    if (input_grad) {
      MatMap<T> dx(grads.d_input.item(n).data(), x.shape().c, g.cols());
      dx.noalias() = w * dcol;
    }
  }
  grads.d_bias = channel_sums(d_out);
  return grads;
}

template <class T>
MaxPoolResult<T> maxpool2x2_forward(const Tensor<T>& x) {
  const Shape& s = x.shape();
  if (s.h % 2 != 0 || s.w % 2 != 0) {
    throw ShapeError("maxpool2x2: height and width must be even, got " + s.str());
  }
  const Shape out_shape{s.n, s.c, s.h / 2, s.w / 2};
  MaxPoolResult<T> r{Tensor<T>::zeros(out_shape), MaxPoolMask{s, {}}};
  r.mask.argmax.resize(out_shape.numel());
  std::size_t k = 0;
  for (std::size_t nc = 0; nc < s.n * s.c; ++nc) {
    const T* plane = x.data() + nc * s.h * s.w;
    for (std::size_t i = 0; i < out_shape.h; ++i) {
      const T* row0 = plane + (2 * i) * s.w;
      const T* row1 = row0 + s.w;
      for (std::size_t j = 0; j < out_shape.w; ++j, ++k) {
        const T cand[4] = {row0[2 * j], row0[2 * j + 1], row1[2 * j], row1[2 * j + 1]};
        std::uint8_t best = 0;
        for (std::uint8_t q = 1; q < 4; ++q) {
          if (cand[q] > cand[best]) best = q;
        }
        r.output[k] = cand[best];
        r.mask.argmax[k] = best;
      }
    }
  }
  return r;
}

template <class T>
Tensor<T> maxpool2x2_backward(const MaxPoolMask& mask, const Tensor<T>& d_out) {
  const Shape& s = mask.input_shape;
  const Shape expected{s.n, s.c, s.h / 2, s.w / 2};
  if (d_out.shape() != expected || mask.argmax.size() != d_out.size()) {
    throw ShapeError("maxpool2x2_backward: d_out " + d_out.shape().str() + " expected " +
                     expected.str());
  }
  Tensor<T> dx = Tensor<T>::zeros(s);
  std::size_t k = 0;
  for (std::size_t nc = 0; nc < s.n * s.c; ++nc) {
    T* plane = dx.data() + nc * s.h * s.w;
    for (std::size_t i = 0; i < expected.h; ++i) {
      for (std::size_t j = 0; j < expected.w; ++j, ++k) {
        const std::uint8_t q = mask.argmax[k];
        plane[(2 * i + q / 2) * s.w + 2 * j + q % 2] = d_out[k];
      }
    }
  }
  return dx;
}

template <class T>
DropoutResult<T> dropout(const Tensor<T>& x, double rate, Rng& rng, bool training) {
  if (!(rate >= 0.0 && rate < 1.0)) {
    throw DomainError("dropout rate must lie in [0, 1), got " + std::to_string(rate));
  }
  if (!training || rate == 0.0) return {x, DropoutMask{}};
  DropoutResult<T> r{Tensor<T>::zeros(x.shape()), DropoutMask{{}, 1.0 / (1.0 - rate)}};
  r.mask.keep.resize(x.size());
  const T scale = static_cast<T>(r.mask.scale);
  for (std::size_t i = 0; i < x.size(); ++i) {
    const bool keep = rng.uniform() >= rate;
    r.mask.keep[i] = keep ? 1 : 0;
    r.output[i] = keep ? x[i] * scale : T(0);
  }
  return r;
}

template <class T>
Tensor<T> dropout_backward(const DropoutMask& mask, const Tensor<T>& d_out) {
  if (mask.identity()) return d_out;
  if (mask.keep.size() != d_out.size()) throw ShapeError("dropout_backward: mask size mismatch");
  Tensor<T> dx = Tensor<T>::zeros(d_out.shape());
  const T scale = static_cast<T>(mask.scale);
  for (std::size_t i = 0; i < d_out.size(); ++i) dx[i] = mask.keep[i] ? d_out[i] * scale : T(0);
  return dx;
}

template <class T>
Tensor<T> zeropad_rows(const Tensor<T>& x, std::size_t top, std::size_t bottom) {
  const Shape& s = x.shape();
  const Shape out_shape{s.n, s.c, s.h + top + bottom, s.w};
  Tensor<T> y = Tensor<T>::zeros(out_shape);
  for (std::size_t nc = 0; nc < s.n * s.c; ++nc) {
    const T* src = x.data() + nc * s.h * s.w;
    T* dst = y.data() + nc * out_shape.h * s.w + top * s.w;
    std::copy(src, src + s.h * s.w, dst);
  }
  return y;
}

template <class T>
Tensor<T> crop_rows(const Tensor<T>& x, std::size_t top, std::size_t bottom) {
  const Shape& s = x.shape();
  if (top + bottom >= s.h) {
    throw ShapeError("crop_rows: cropping " + std::to_string(top + bottom) + " rows from height " +
                     std::to_string(s.h));
  }
  const Shape out_shape{s.n, s.c, s.h - top - bottom, s.w};
  Tensor<T> y = Tensor<T>::zeros(out_shape);
  for (std::size_t nc = 0; nc < s.n * s.c; ++nc) {
    const T* src = x.data() + nc * s.h * s.w + top * s.w;
    std::copy(src, src + out_shape.h * s.w, y.data() + nc * out_shape.h * s.w);
  }
  return y;
}

template <class T>
Tensor<T> relu_forward(const Tensor<T>& x) {
  Tensor<T> y = x;
  for (T& v : y.values()) v = v > T(0) ? v : T(0);
  return y;
}

template <class T>
Tensor<T> relu_backward(const Tensor<T>& x, const Tensor<T>& d_out) {
  if (x.shape() != d_out.shape()) throw ShapeError("relu_backward: shape mismatch");
  Tensor<T> dx = d_out;
  for (std::size_t i = 0; i < dx.size(); ++i) {
    if (!(x[i] > T(0))) dx[i] = T(0);
  }
  return dx;
}

template <class T>
Tensor<T> sigmoid_forward(const Tensor<T>& x) {
  Tensor<T> y = x;
  for (T& v : y.values()) {
    // Branch on sign so exp never overflows.
    if (v >= T(0)) {
      v = T(1) / (T(1) + std::exp(-v));
    } else {
      const T e = std::exp(v);
      v = e / (T(1) + e);
    }
  }
  return y;
}

template <class T>
Tensor<T> sigmoid_backward(const Tensor<T>& y, const Tensor<T>& d_out) {
  if (y.shape() != d_out.shape()) throw ShapeError("sigmoid_backward: shape mismatch");
  Tensor<T> dx = d_out;
  for (std::size_t i = 0; i < dx.size(); ++i) dx[i] *= y[i] * (T(1) - y[i]);
  return dx;
}

namespace testing {
void set_conv_backward_fault(double factor) { g_conv_backward_fault.store(factor); }
}  // namespace testing

#define LANEDETECT_INSTANTIATE_LAYERS(T)                                                        \
  template Tensor<T> conv2d_forward(const Tensor<T>&, const ConvParams<T>&);                   \
  template LayerGrads<T> conv2d_backward(const Tensor<T>&, const ConvParams<T>&,               \
                                         const Tensor<T>&, bool);                              \
  template Tensor<T> convtranspose2d_forward(const Tensor<T>&, const ConvParams<T>&);          \
  template LayerGrads<T> convtranspose2d_backward(const Tensor<T>&, const ConvParams<T>&,      \
                                                  const Tensor<T>&, bool);                     \
  template MaxPoolResult<T> maxpool2x2_forward(const Tensor<T>&);                              \
  template Tensor<T> maxpool2x2_backward(const MaxPoolMask&, const Tensor<T>&);                \
  template DropoutResult<T> dropout(const Tensor<T>&, double, Rng&, bool);                     \
  template Tensor<T> dropout_backward(const DropoutMask&, const Tensor<T>&);                   \
  template Tensor<T> zeropad_rows(const Tensor<T>&, std::size_t, std::size_t);                 \
  template Tensor<T> crop_rows(const Tensor<T>&, std::size_t, std::size_t);                    \
  template Tensor<T> relu_forward(const Tensor<T>&);                                           \
  template Tensor<T> relu_backward(const Tensor<T>&, const Tensor<T>&);                        \
  template Tensor<T> sigmoid_forward(const Tensor<T>&);                                        \
  template Tensor<T> sigmoid_backward(const Tensor<T>&, const Tensor<T>&);

LANEDETECT_INSTANTIATE_LAYERS(float)
LANEDETECT_INSTANTIATE_LAYERS(double)

}  // namespace lanedetect
