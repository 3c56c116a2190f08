// Adam with bias correction; beta = (0.9, 0.999), eps 1e-8, weight decay 0.
#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "blindpaint/common.hpp"
#include "blindpaint/layers.hpp"
#include "blindpaint/parallel.hpp"
#include "blindpaint/tensor.hpp"

namespace blindpaint::nn {

template <typename T>
struct AdamState {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::int64_t t = 0;
  std::vector<TensorT<T>> m;  // first moments, parallel to the param list
  std::vector<TensorT<T>> v;  // second moments, elementwise >= 0

  void init(const std::vector<ParamRef<T>>& params) {
    t = 0;
    m.clear();
    v.clear();
    m.reserve(params.size());
    v.reserve(params.size());
    for (const auto& p : params) {
      m.emplace_back(p.value->shape());
      v.emplace_back(p.value->shape());
    }
  }

  bool initialized_for(const std::vector<ParamRef<T>>& params) const {
    if (m.size() != params.size()) return false;
    for (std::size_t i = 0; i < params.size(); ++i) {
      if (!(m[i].shape() == params[i].value->shape())) return false;
    }
    return true;
  }
};

template <typename T>
void adam_step(AdamState<T>& state, const std::vector<ParamRef<T>>& params, double lr) {
  if (!state.initialized_for(params)) {
    throw Error(ErrorKind::InvalidConfig, "adam state does not match parameter list");
  }
  for (const auto& p : params) {
    if (!all_finite(*p.grad)) {
      throw Error(ErrorKind::NonFiniteGradient, "non-finite gradient in " + p.name);
    }
  }
  state.t += 1;
  const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.t));
  const T b1 = static_cast<T>(state.beta1);
  const T b2 = static_cast<T>(state.beta2);
  const T one_m_b1 = static_cast<T>(1.0 - state.beta1);
  const T one_m_b2 = static_cast<T>(1.0 - state.beta2);
  const T inv_bc1 = static_cast<T>(1.0 / bc1);
  const T inv_bc2 = static_cast<T>(1.0 / bc2);
  const T eps = static_cast<T>(state.eps);
  const T step = static_cast<T>(lr);

  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    T* value = params[pi].value->data();
    const T* grad = params[pi].grad->data();
    T* m = state.m[pi].data();
    T* v = state.v[pi].data();
    parallel_for(params[pi].value->numel(), [&](std::int64_t lo, std::int64_t hi) {
      for (std::int64_t i = lo; i < hi; ++i) {
        const T g = grad[i];
        m[i] = b1 * m[i] + one_m_b1 * g;
        v[i] = b2 * v[i] + one_m_b2 * g * g;
        const T m_hat = m[i] * inv_bc1;
        const T v_hat = v[i] * inv_bc2;
        value[i] -= step * m_hat / (std::sqrt(v_hat) + eps);
      }
    });
  }
}

}  // namespace blindpaint::nn
