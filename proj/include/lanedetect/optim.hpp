#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "lanedetect/rng.hpp"
#include "lanedetect/tensor.hpp"

namespace lanedetect {

/// Adam moments for a fixed list of parameter buffers.
///
/// `m` and `v` are sized on the first step; `step` counts completed updates.
template <class T>
struct AdamState {
  std::vector<std::vector<T>> m;
  std::vector<std::vector<T>> v;
  std::uint64_t step = 0;
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// One bias-corrected Adam update applied in place to every buffer in `params`.
///
/// Throws ShapeError when buffer counts or sizes disagree and NumericError when
/// any gradient is non-finite; in both cases neither params nor state change.
template <class T>
void adam_step(const std::vector<std::span<T>>& params,
               const std::vector<std::span<const T>>& grads, AdamState<T>& state);

/// Step decay: lr(epoch) = max(floor, initial * factor^floor(epoch / interval)).
struct LrSchedule {
  double initial = 1e-4;
  double factor = 1.0;
  std::uint64_t interval = 1;
  double floor = 1e-4;

  /// Throws DomainError unless 0 < floor <= initial, factor in (0, 1], interval >= 1.
  void validate() const;
};

double schedule_lr(std::uint64_t epoch, const LrSchedule& schedule);

/// Normal(0, sqrt(2 / fan_in)) with fan_in = c * kh * kw of a (out, in, kh, kw) shape.
template <class T>
Tensor<T> he_init(const Shape& shape, Rng& rng);

/// As above with an explicit fan-in.
template <class T>
Tensor<T> he_init(const Shape& shape, double fan_in, Rng& rng);

}  // namespace lanedetect
