#include "dsft/optimizer.hpp"

#include <cmath>

#include "dsft/error.hpp"

namespace dsft {

void optimizer_step(std::span<float> params, std::span<const float> grads, AdamState& state, double lr,
                    const AdamConfig& cfg) {
  if (grads.size() != params.size() || state.m.size() != params.size() || state.v.size() != params.size()) {
    throw input_error("optimizer_step: gradient/state shape does not match parameters");
  }
  if (!(lr > 0.0)) throw input_error("optimizer_step: learning rate must be positive");
  ++state.t;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.t));
  const std::ptrdiff_t n = static_cast<std::ptrdiff_t>(params.size());
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    const double g = grads[static_cast<std::size_t>(i)];
    const double m = cfg.beta1 * state.m[static_cast<std::size_t>(i)] + (1.0 - cfg.beta1) * g;
    const double v = cfg.beta2 * state.v[static_cast<std::size_t>(i)] + (1.0 - cfg.beta2) * g * g;
    state.m[static_cast<std::size_t>(i)] = static_cast<float>(m);
    state.v[static_cast<std::size_t>(i)] = static_cast<float>(v);
    const double update = lr * (m / bc1) / (std::sqrt(v / bc2) + cfg.eps);
    params[static_cast<std::size_t>(i)] = static_cast<float>(params[static_cast<std::size_t>(i)] - update);
  }
}

}  // namespace dsft
