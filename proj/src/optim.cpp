#include "lanedetect/optim.hpp"

#include <algorithm>
#include <cmath>

namespace lanedetect {

template <class T>
void adam_step(const std::vector<std::span<T>>& params,
               const std::vector<std::span<const T>>& grads, AdamState<T>& state) {
  if (params.size() != grads.size()) {
    throw ShapeError("adam_step: " + std::to_string(params.size()) + " parameters but " +
                     std::to_string(grads.size()) + " gradients");
  }
  const bool fresh = state.m.empty() && state.v.empty();
  if (!fresh && (state.m.size() != params.size() || state.v.size() != params.size())) {
    throw ShapeError("adam_step: optimizer state tracks a different parameter list");
  }
  for (std::size_t k = 0; k < params.size(); ++k) {
    if (params[k].size() != grads[k].size() ||
        (!fresh && (state.m[k].size() != params[k].size() ||
                    state.v[k].size() != params[k].size()))) {
      throw ShapeError("adam_step: size mismatch for parameter " + std::to_string(k));
    }
    if (!all_finite(grads[k])) {
      throw NumericError("adam_step: non-finite gradient for parameter " + std::to_string(k));
    }
  }
  if (fresh) {
    for (const auto& p : params) {
      state.m.emplace_back(p.size(), T(0));
      state.v.emplace_back(p.size(), T(0));
    }
  }
  state.step += 1;
  const double t = static_cast<double>(state.step);
  const double correct1 = 1.0 - std::pow(state.beta1, t);
  const double correct2 = 1.0 - std::pow(state.beta2, t);
  for (std::size_t k = 0; k < params.size(); ++k) {
    T* p = params[k].data();
    const T* g = grads[k].data();
    T* m = state.m[k].data();
    T* v = state.v[k].data();
    for (std::size_t i = 0; i < params[k].size(); ++i) {
      const double gi = g[i];
      const double mi = state.beta1 * m[i] + (1.0 - state.beta1) * gi;
      const double vi = state.beta2 * v[i] + (1.0 - state.beta2) * gi * gi;
      m[i] = static_cast<T>(mi);
      v[i] = static_cast<T>(vi);
      const double m_hat = mi / correct1;
      const double v_hat = vi / correct2;
      p[i] = static_cast<T>(p[i] - state.lr * m_hat / (std::sqrt(v_hat) + state.epsilon));
    }
  }
}

void LrSchedule::validate() const {
  if (!(initial > 0.0)) throw DomainError("learning rate must be positive");
  if (!(floor > 0.0 && floor <= initial)) throw DomainError("lr floor must lie in (0, initial]");
  if (!(factor > 0.0 && factor <= 1.0)) throw DomainError("lr decay factor must lie in (0, 1]");
  if (interval < 1) throw DomainError("lr decay interval must be >= 1 epoch");
}

double schedule_lr(std::uint64_t epoch, const LrSchedule& schedule) {
  const double decays = static_cast<double>(epoch / schedule.interval);
  return std::max(schedule.floor, schedule.initial * std::pow(schedule.factor, decays));
}

template <class T>
Tensor<T> he_init(const Shape& shape, Rng& rng) {
  return he_init<T>(shape, static_cast<double>(shape.c * shape.h * shape.w), rng);
}

template <class T>
Tensor<T> he_init(const Shape& shape, double fan_in, Rng& rng) {
  if (!(fan_in > 0.0)) throw DomainError("he_init: fan_in must be positive");
  Tensor<T> out = Tensor<T>::zeros(shape);
  const double stddev = std::sqrt(2.0 / fan_in);
  for (T& v : out.values()) v = static_cast<T>(stddev * rng.normal());
  return out;
}

template void adam_step(const std::vector<std::span<float>>&,
                        const std::vector<std::span<const float>>&, AdamState<float>&);
template void adam_step(const std::vector<std::span<double>>&,
                        const std::vector<std::span<const double>>&, AdamState<double>&);
template Tensor<float> he_init(const Shape&, Rng&);
template Tensor<double> he_init(const Shape&, Rng&);
template Tensor<float> he_init(const Shape&, double, Rng&);
template Tensor<double> he_init(const Shape&, double, Rng&);

}  // namespace lanedetect
