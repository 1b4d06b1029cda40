#include "lanedetect/losses.hpp"

#include <algorithm>
#include <cmath>

namespace lanedetect {

namespace {

template <class T>
void check_pair(const Tensor<T>& truth, const Tensor<T>& pred, const char* op) {
  if (truth.shape() != pred.shape()) {
    throw ShapeError(std::string(op) + ": truth " + truth.shape().str() + " vs prediction " +
                     pred.shape().str());
  }
}

template <class T>
void check_binary(const Tensor<T>& truth, const char* op) {
  for (T v : truth.values()) {
    if (v != T(0) && v != T(1)) throw DomainError(std::string(op) + ": ground truth must be 0 or 1");
  }
}

template <class T>
void check_probabilities(const Tensor<T>& pred, const char* op) {
  for (T v : pred.values()) {
    if (!(v >= T(0) && v <= T(1))) {
      throw DomainError(std::string(op) + ": prediction outside [0, 1]");
    }
  }
}

}  // namespace

template <class T>
LossValue<T> dice_loss(const Tensor<T>& truth, const Tensor<T>& pred) {
  check_pair(truth, pred, "dice_loss");
  check_binary(truth, "dice_loss");
  check_probabilities(pred, "dice_loss");
  const double overlap = dot(truth, pred);
  const double denom = dot(truth, truth) + dot(pred, pred);
  if (denom < kDiceEpsilon) return LossValue<T>{0.0, Tensor<T>::zeros(pred.shape())};
  LossValue<T> out{1.0 - 2.0 * overlap / denom, Tensor<T>::zeros(pred.shape())};
  // d/dq [1 - 2S/D] = -2 p / D + 4 S q / D^2
  const double a = -2.0 / denom;
  const double b = 4.0 * overlap / (denom * denom);
  for (std::size_t i = 0; i < pred.size(); ++i) {
    out.d_pred[i] = static_cast<T>(a * truth[i] + b * pred[i]);
  }
  return out;
}

template <class T>
LossValue<T> bce_loss(const Tensor<T>& truth, const Tensor<T>& pred) {
  check_pair(truth, pred, "bce_loss");
  const double n = static_cast<double>(pred.size());
  LossValue<T> out{0.0, Tensor<T>::zeros(pred.shape())};
  double total = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double p = truth[i];
    const double raw = pred[i];
    const double q = std::clamp(raw, kBceClamp, 1.0 - kBceClamp);
    total += -(p * std::log(q) + (1.0 - p) * std::log(1.0 - q));
    if (raw == q) out.d_pred[i] = static_cast<T>((-p / q + (1.0 - p) / (1.0 - q)) / n);
  }
  out.value = total / n;
  return out;
}

template <class T>
LossValue<T> mse_loss(const Tensor<T>& truth, const Tensor<T>& pred) {
  check_pair(truth, pred, "mse_loss");
  const double n = static_cast<double>(pred.size());
  LossValue<T> out{0.0, Tensor<T>::zeros(pred.shape())};
  double total = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double diff = static_cast<double>(pred[i]) - static_cast<double>(truth[i]);
    total += diff * diff;
    out.d_pred[i] = static_cast<T>(2.0 * diff / n);
  }
  out.value = total / n;
  return out;
}

LossKind parse_loss_kind(std::string_view name) {
  if (name == "dice") return LossKind::dice;
  if (name == "bce") return LossKind::bce;
  if (name == "mse") return LossKind::mse;
  throw DomainError("unknown loss '" + std::string(name) + "' (expected dice, bce or mse)");
}

std::string to_string(LossKind kind) {
  switch (kind) {
    case LossKind::dice: return "dice";
    case LossKind::bce: return "bce";
    case LossKind::mse: return "mse";
  }
  return "unknown";
}

template <class T>
LossValue<T> compute_loss(LossKind kind, const Tensor<T>& truth, const Tensor<T>& pred) {
  switch (kind) {
    case LossKind::dice: return dice_loss(truth, pred);
    case LossKind::bce: return bce_loss(truth, pred);
    case LossKind::mse: return mse_loss(truth, pred);
  }
  throw DomainError("unknown loss kind");
}

#define LANEDETECT_INSTANTIATE_LOSSES(T)                                            \
  template LossValue<T> dice_loss(const Tensor<T>&, const Tensor<T>&);             \
  template LossValue<T> bce_loss(const Tensor<T>&, const Tensor<T>&);              \
  template LossValue<T> mse_loss(const Tensor<T>&, const Tensor<T>&);              \
  template LossValue<T> compute_loss(LossKind, const Tensor<T>&, const Tensor<T>&);

LANEDETECT_INSTANTIATE_LOSSES(float)
LANEDETECT_INSTANTIATE_LOSSES(double)

}  // namespace lanedetect
