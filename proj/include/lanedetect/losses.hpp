#pragma once

#include <string>
#include <string_view>

#include "lanedetect/tensor.hpp"

namespace lanedetect {

/// Loss value together with its gradient with respect to the prediction.
template <class T>
struct LossValue {
  double value = 0.0;
  Tensor<T> d_pred;
};

inline constexpr double kDiceEpsilon = 1e-7;
inline constexpr double kBceClamp = 1e-7;

/// 1 - 2<p, p_hat> / (||p||^2 + ||p_hat||^2), computed over the whole tensor.
///
/// When the denominator is below kDiceEpsilon both tensors are (numerically)
/// empty; the loss is then 0 with a zero gradient.
/// `truth` must be binary and `pred` must lie in [0, 1] (DomainError otherwise).
/// The squared-norm denominator is deliberate; the |p| + |p_hat| variant is not offered.
template <class T>
LossValue<T> dice_loss(const Tensor<T>& truth, const Tensor<T>& pred);

/// Mean binary cross-entropy with predictions clamped to [1e-7, 1 - 1e-7].
/// The gradient is zero wherever the clamp is active.
template <class T>
LossValue<T> bce_loss(const Tensor<T>& truth, const Tensor<T>& pred);

/// Mean squared error.
template <class T>
LossValue<T> mse_loss(const Tensor<T>& truth, const Tensor<T>& pred);

enum class LossKind { dice, bce, mse };

LossKind parse_loss_kind(std::string_view name);
std::string to_string(LossKind kind);

template <class T>
LossValue<T> compute_loss(LossKind kind, const Tensor<T>& truth, const Tensor<T>& pred);

}  // namespace lanedetect
