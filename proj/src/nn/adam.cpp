#include "ddppo/nn/adam.hpp"

#include <algorithm>
#include <cmath>

#include "ddppo/common/error.hpp"

namespace ddppo::nn {

void FreezeMask::freeze(const LayerRecord& layer) {
  std::fill_n(frozen.begin() + static_cast<std::ptrdiff_t>(layer.offset), layer.param_count(),
              std::uint8_t{1});
}

std::size_t FreezeMask::count_frozen() const {
  return static_cast<std::size_t>(std::count(frozen.begin(), frozen.end(), std::uint8_t{1}));
}

AdamStepInfo adam_step(ParamVector& params, std::span<const double> grad, AdamState& state,
                       double lr, const FreezeMask& mask, double max_grad_norm) {
  const std::size_t n = params.size();
  if (grad.size() != n || state.m.size() != n || state.v.size() != n || mask.frozen.size() != n) {
    throw ConfigError("adam_step: size mismatch between params, grad, state and mask");
  }
  if (!(lr > 0.0)) throw ConfigError("adam_step: learning rate must be > 0");

  AdamStepInfo info;
  double sq = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (mask.is_frozen(i)) continue;
    if (!std::isfinite(grad[i])) throw NumericalError("grad", "adam_step: non-finite gradient");
    sq += grad[i] * grad[i];
  }
  info.grad_norm = std::sqrt(sq);
  if (max_grad_norm > 0.0 && std::isfinite(max_grad_norm) && info.grad_norm > max_grad_norm) {
    info.clip_scale = max_grad_norm / (info.grad_norm + 1e-6);
  }

  ++state.step_count;
  const double t = static_cast<double>(state.step_count);
  const double bc1 = 1.0 - std::pow(state.beta1, t);
  const double bc2 = 1.0 - std::pow(state.beta2, t);
  for (std::size_t i = 0; i < n; ++i) {
    if (mask.is_frozen(i)) continue;
    const double g = grad[i] * info.clip_scale;
    state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * g;
    state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * g * g;
    const double m_hat = state.m[i] / bc1;
    const double v_hat = state.v[i] / bc2;
    params.values[i] -= lr * m_hat / (std::sqrt(v_hat) + state.eps);
  }
  return info;
}

}  // namespace ddppo::nn
