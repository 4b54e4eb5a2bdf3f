#include "cisfa/optimizer.hpp"

#include "cisfa/errors.hpp"

namespace cisfa::optim {

Adam::Adam(std::vector<torch::Tensor> params, AdamConfig cfg) : params_(std::move(params)), cfg_(cfg) {
  for (const auto& p : params_)
    if (p.scalar_type() != torch::kFloat32 || !p.is_contiguous())
      throw ShapeError("Adam expects contiguous float32 parameters");
  states_.resize(params_.size());
}

int Adam::step() {
  torch::NoGradGuard guard;
  int updated = 0;
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto& p = params_[i];
    const auto& g = p.grad();
    if (!g.defined()) continue;
    const auto gc = g.contiguous();
    std::span<float> ps(p.data_ptr<float>(), static_cast<std::size_t>(p.numel()));
    std::span<const float> gs(gc.data_ptr<float>(), static_cast<std::size_t>(gc.numel()));
    adam_update(ps, gs, states_[i], cfg_);
    ++updated;
  }
  ++steps_;
  return updated;
}

void Adam::zero_grad() {
  for (auto& p : params_) p.mutable_grad() = torch::Tensor();
}

}  // namespace cisfa::optim
