#pragma once

#include <torch/torch.h>

#include <functional>
#include <vector>

#include "cisfa/contrastive.hpp"
#include "cisfa/objectives.hpp"

namespace cisfa::losses {

/// Differentiable bridges from torch tensors to the hand-derived loss
/// kernels in cisfa_core. Forward and backward both run in double precision;
/// the returned scalar has the dtype of the first input.

/// query, key: n × c' (rows already normalised). Weights per query row.
torch::Tensor patch_nce(const torch::Tensor& query, const torch::Tensor& key, const std::vector<double>& weights,
                        double tau, contrastive::DenominatorMode mode = contrastive::DenominatorMode::with_positive);

/// z: 2t × c'; pairing defaults to j(i) = (i + t) mod 2t.
torch::Tensor global_nce(const torch::Tensor& z, double tau, std::vector<int> pairing = {});

torch::Tensor gan_d_loss(const torch::Tensor& real_scores, const torch::Tensor& fake_scores,
                         const objectives::GanLossConfig& cfg);
torch::Tensor gan_g_loss(const torch::Tensor& fake_scores, const objectives::GanLossConfig& cfg);

/// probs: B × K × H × W softmax output; labels: B × H × W integer tensor.
torch::Tensor soft_dice(const torch::Tensor& probs, const torch::Tensor& labels,
                        double eps = objectives::kDiceEpsilon);

using Head = std::function<torch::Tensor(const torch::Tensor&)>;

/// Gathers feat[:, p] for every position (feat is c × h × w), applies `head`
/// and L2-normalises each row. Result: n × c'.
torch::Tensor project_patches(const torch::Tensor& feat, const std::vector<contrastive::Position>& positions,
                              const Head& head);

/// Copies an n × c tensor into a double matrix (for oracles and inspection).
contrastive::Matrix to_matrix(const torch::Tensor& t);
torch::Tensor from_matrix(const contrastive::Matrix& m, torch::Dtype dtype = torch::kFloat64);

}  // namespace cisfa::losses
