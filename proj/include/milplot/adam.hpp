#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "milplot/tensor.hpp"

namespace milplot::nn {

struct AdamConfig {
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

template <typename T>
struct AdamState {
  AdamConfig config;
  std::uint64_t step = 0;
  std::vector<std::vector<T>> first_moment;
  std::vector<std::vector<T>> second_moment;
};

// Bias-corrected Adam update using each parameter's accumulated grad.
// Moments are allocated on the first call.
template <typename T>
void adam_step(const ParamRefs<T>& params, AdamState<T>& state) {
  if (state.first_moment.empty()) {
    for (const Param<T>* p : params) {
      state.first_moment.emplace_back(p->value.size(), T{});
      state.second_moment.emplace_back(p->value.size(), T{});
    }
  }
  if (state.first_moment.size() != params.size()) {
    throw Error(ErrorKind::ShapeMismatch, "Adam state does not match parameter list");
  }
  ++state.step;
  const AdamConfig& c = state.config;
  const double correction1 = 1.0 - std::pow(c.beta1, static_cast<double>(state.step));
  const double correction2 = 1.0 - std::pow(c.beta2, static_cast<double>(state.step));
  const auto b1 = static_cast<T>(c.beta1), b2 = static_cast<T>(c.beta2);
  const auto step_size = static_cast<T>(c.learning_rate / correction1);
  const auto inv_sqrt_c2 = static_cast<T>(1.0 / std::sqrt(correction2));
  const auto eps = static_cast<T>(c.epsilon);

  for (std::size_t i = 0; i < params.size(); ++i) {
    Param<T>& p = *params[i];
    auto& m = state.first_moment[i];
    auto& v = state.second_moment[i];
    if (m.size() != p.value.size()) throw Error(ErrorKind::ShapeMismatch, "Adam moment shape mismatch for " + p.name);
    for (std::size_t j = 0; j < m.size(); ++j) {
      const T g = p.grad[j];
      m[j] = b1 * m[j] + (T(1) - b1) * g;
      v[j] = b2 * v[j] + (T(1) - b2) * g * g;
      p.value[j] -= step_size * m[j] / (std::sqrt(v[j]) * inv_sqrt_c2 + eps);
    }
  }
}

template <typename T>
void zero_grads(const ParamRefs<T>& params) {
  for (Param<T>* p : params) p->zero_grad();
}

template <typename T>
void scale_grads(const ParamRefs<T>& params, T factor) {
  for (Param<T>* p : params) {
    for (auto& g : p->grad.values()) g *= factor;
  }
}

}  // namespace milplot::nn
