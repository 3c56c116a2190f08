// Residual training losses: mean |residual + x - y| (L1, the default) or the
// mean of squares (L2). Normalization is by total element count so the
// learning rate is resolution independent.
#pragma once

#include <cmath>
#include <string>

#include "blindpaint/common.hpp"
#include "blindpaint/tensor.hpp"

namespace blindpaint::nn {

enum class LossKind { L1, L2 };

inline const char* to_string(LossKind k) { return k == LossKind::L1 ? "l1" : "l2"; }

inline LossKind loss_kind_from_string(const std::string& s) {
  if (s == "l1" || s == "L1") return LossKind::L1;
  if (s == "l2" || s == "L2") return LossKind::L2;
  throw Error(ErrorKind::InvalidConfig, "unknown loss kind '" + s + "'");
}

template <typename T>
struct LossResult {
  double value = 0.0;
  TensorT<T> grad_residual;
};

// The L1 subgradient at 0 is taken as 0, so a perfect prediction is a fixed
// point. The loss value accumulates in double in linear index order.
template <typename T>
LossResult<T> residual_loss(const TensorT<T>& residual, const TensorT<T>& x, const TensorT<T>& y,
                            LossKind kind) {
  blindpaint::detail::require_same_shape(residual, x, "residual_loss");
  blindpaint::detail::require_same_shape(residual, y, "residual_loss");

  LossResult<T> res;
  res.grad_residual = TensorT<T>(residual.shape());
  const std::int64_t count = residual.numel();
  const T inv_count = T(1) / static_cast<T>(count);

  double acc = 0.0;
  for (std::int64_t i = 0; i < count; ++i) {
    const T d = residual[i] + x[i] - y[i];
    if (kind == LossKind::L1) {
      acc += std::abs(static_cast<double>(d));
      res.grad_residual[i] = d > T(0) ? inv_count : (d < T(0) ? -inv_count : T(0));
    } else {
      acc += static_cast<double>(d) * static_cast<double>(d);
      res.grad_residual[i] = T(2) * d * inv_count;
    }
  }
  res.value = acc / static_cast<double>(count);
  return res;
}

}  // namespace blindpaint::nn
