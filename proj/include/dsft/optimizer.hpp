#pragma once

#include <span>
#include <vector>

namespace dsft {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  std::vector<float> m;
  std::vector<float> v;
  long t = 0;  // completed updates

  explicit AdamState(std::size_t n = 0) : m(n, 0.0f), v(n, 0.0f) {}
  bool operator==(const AdamState&) const = default;
};

/// One bias-corrected Adam update, in place.
void optimizer_step(std::span<float> params, std::span<const float> grads, AdamState& state, double lr,
                    const AdamConfig& cfg = {});

}  // namespace dsft
