#ifndef VOD_OPTIMIZER_HPP
#define VOD_OPTIMIZER_HPP

#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

namespace vod {

/// Adaptive-moment descent with decoupled weight decay.
struct AdamConfig {
  double lr = 1e-2;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
};

struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
  std::int64_t t = 0;
};

/// One minimization step. Rejects non-finite gradients without touching the
/// parameters.
inline void optimizer_step(std::vector<double>& params, std::span<const double> grad,
                           AdamState& state, const AdamConfig& config) {
  if (grad.size() != params.size())
    throw std::invalid_argument("optimizer_step: gradient/parameter length mismatch");
  for (double g : grad)
    if (!std::isfinite(g)) throw std::invalid_argument("optimizer_step: non-finite gradient");
  if (state.m.empty()) {
    state.m.assign(params.size(), 0.0);
    state.v.assign(params.size(), 0.0);
  }
  if (state.m.size() != params.size())
    throw std::invalid_argument("optimizer_step: state/parameter length mismatch");

  state.t += 1;
  const double bias1 = 1.0 - std::pow(config.beta1, static_cast<double>(state.t));
  const double bias2 = 1.0 - std::pow(config.beta2, static_cast<double>(state.t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    state.m[i] = config.beta1 * state.m[i] + (1.0 - config.beta1) * grad[i];
    state.v[i] = config.beta2 * state.v[i] + (1.0 - config.beta2) * grad[i] * grad[i];
    const double m_hat = state.m[i] / bias1;
    const double v_hat = state.v[i] / bias2;
    params[i] -= config.lr * (m_hat / (std::sqrt(v_hat) + config.eps) +
                              config.weight_decay * params[i]);
  }
}

}  // namespace vod

#endif  // VOD_OPTIMIZER_HPP
