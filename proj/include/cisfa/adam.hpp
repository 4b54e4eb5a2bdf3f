#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace cisfa::optim {

struct AdamConfig {
  double lr = 2e-4;
  double beta1 = 0.5;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Moment estimates for one parameter tensor. `step` counts updates applied to it.
struct AdamState {
  std::vector<float> m;
  std::vector<float> v;
  std::int64_t step = 0;
};

/// One bias-corrected Adam step applied in place:
///   m ← β1·m + (1−β1)·g,  v ← β2·v + (1−β2)·g²
///   p ← p − lr · m̂ / (√v̂ + eps),  m̂ = m/(1−β1^t), v̂ = v/(1−β2^t)
void adam_update(std::span<float> params, std::span<const float> grads, AdamState& state, const AdamConfig& cfg);

}  // namespace cisfa::optim
