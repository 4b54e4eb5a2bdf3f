#pragma once

#include <torch/torch.h>

#include <string>
#include <vector>

#include "cisfa/adam.hpp"

namespace cisfa::optim {

/// Adam over a fixed list of float32 parameter tensors, one AdamState each.
/// `step()` only touches parameters whose gradient is defined, so a subset
/// (e.g. an encoder) can be updated from a loss that reaches nothing else.
class Adam {
 public:
  Adam() = default;
  Adam(std::vector<torch::Tensor> params, AdamConfig cfg);

  /// Returns the number of parameter tensors updated.
  int step();
  void zero_grad();

  const std::vector<torch::Tensor>& params() const { return params_; }
  std::vector<AdamState>& states() { return states_; }
  const std::vector<AdamState>& states() const { return states_; }
  const AdamConfig& config() const { return cfg_; }
  /// Completed step() calls.
  std::int64_t steps() const { return steps_; }
  void set_steps(std::int64_t s) { steps_ = s; }

 private:
  std::vector<torch::Tensor> params_;
  std::vector<AdamState> states_;
  AdamConfig cfg_;
  std::int64_t steps_ = 0;
};

}  // namespace cisfa::optim
