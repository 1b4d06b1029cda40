#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "lanedetect/rng.hpp"
#include "lanedetect/tensor.hpp"

namespace lanedetect {

/// Weights and geometry of a convolution or transposed convolution.
///
/// Weight layout is (a, b, kh, kw). For Conv2D, a is the output and b the input
/// channel count. For ConvTranspose2D the same tensor is read as the adjoint of
/// that convolution: a is the input and b the output channel count, so one
/// ConvParams drives both directions. `bias` has one entry per output channel.
template <class T>
struct ConvParams {
  Tensor<T> weights;
  std::vector<T> bias;
  std::size_t stride = 1;
  std::size_t padding = 0;

  std::size_t kernel_h() const { return weights.shape().h; }
  std::size_t kernel_w() const { return weights.shape().w; }
};

template <class T>
struct LayerGrads {
  Tensor<T> d_input;  // empty when the caller asked not to compute it
  Tensor<T> d_weights;
  std::vector<T> d_bias;
};

/// Output shape of conv2d_forward; throws ShapeError when the geometry does not tile exactly.
Shape conv2d_output_shape(const Shape& input, const Shape& weights, std::size_t stride,
                          std::size_t padding);
/// Output shape of convtranspose2d_forward: H_out = (H_in - 1) * stride - 2 * padding + kh.
Shape convtranspose2d_output_shape(const Shape& input, const Shape& weights, std::size_t stride,
                                   std::size_t padding);

/// Cross-correlation (no kernel flip); positions outside the input read as zero.
template <class T>
Tensor<T> conv2d_forward(const Tensor<T>& x, const ConvParams<T>& p);

template <class T>
LayerGrads<T> conv2d_backward(const Tensor<T>& x, const ConvParams<T>& p, const Tensor<T>& d_out,
                              bool input_grad = true);

/// Adjoint of conv2d_forward with the same parameters, plus a per-channel bias.
template <class T>
Tensor<T> convtranspose2d_forward(const Tensor<T>& x, const ConvParams<T>& p);

template <class T>
LayerGrads<T> convtranspose2d_backward(const Tensor<T>& x, const ConvParams<T>& p,
                                       const Tensor<T>& d_out, bool input_grad = true);

/// Winner position (0..3, row-major inside the 2x2 window) for every pooled element.
struct MaxPoolMask {
  Shape input_shape;
  std::vector<std::uint8_t> argmax;
};

template <class T>
struct MaxPoolResult {
  Tensor<T> output;
  MaxPoolMask mask;
};

/// 2x2 max pooling with stride 2. Ties go to the first element in row-major order.
template <class T>
MaxPoolResult<T> maxpool2x2_forward(const Tensor<T>& x);

template <class T>
Tensor<T> maxpool2x2_backward(const MaxPoolMask& mask, const Tensor<T>& d_out);

/// Kept elements (1) and the scale applied to them. An empty keep vector means identity.
struct DropoutMask {
  std::vector<std::uint8_t> keep;
  double scale = 1.0;

  bool identity() const { return keep.empty(); }
};

template <class T>
struct DropoutResult {
  Tensor<T> output;
  DropoutMask mask;
};

/// Inverted dropout. Inference (or rate 0) is the exact identity and draws nothing from `rng`.
template <class T>
DropoutResult<T> dropout(const Tensor<T>& x, double rate, Rng& rng, bool training);

template <class T>
Tensor<T> dropout_backward(const DropoutMask& mask, const Tensor<T>& d_out);

template <class T>
Tensor<T> zeropad_rows(const Tensor<T>& x, std::size_t top, std::size_t bottom);

template <class T>
Tensor<T> crop_rows(const Tensor<T>& x, std::size_t top, std::size_t bottom);

template <class T>
Tensor<T> relu_forward(const Tensor<T>& x);

/// Uses the forward input; the derivative at exactly 0 is 0.
template <class T>
Tensor<T> relu_backward(const Tensor<T>& x, const Tensor<T>& d_out);

template <class T>
Tensor<T> sigmoid_forward(const Tensor<T>& x);

/// Uses the forward output y: d_in = d_out * y * (1 - y).
template <class T>
Tensor<T> sigmoid_backward(const Tensor<T>& y, const Tensor<T>& d_out);

namespace testing {
/// Multiplies conv2d_backward's weight gradient by (1 + factor). Zero disables.
/// Exists so gradient-check tooling can prove it detects a broken backward pass.
void set_conv_backward_fault(double factor);
}  // namespace testing

}  // namespace lanedetect
