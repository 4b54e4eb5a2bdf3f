#include "cisfa/loss_functions.hpp"

#include "cisfa/errors.hpp"

namespace cisfa::losses {

using torch::autograd::AutogradContext;
using torch::autograd::variable_list;

contrastive::Matrix to_matrix(const torch::Tensor& t) {
  if (t.dim() != 2) throw ShapeMismatch("expected a 2D tensor");
  auto d = t.detach().to(torch::kCPU, torch::kFloat64).contiguous();
  contrastive::Matrix m(d.size(0), d.size(1));
  std::memcpy(m.data(), d.data_ptr<double>(), sizeof(double) * static_cast<std::size_t>(d.numel()));
  return m;
}

torch::Tensor from_matrix(const contrastive::Matrix& m, torch::Dtype dtype) {
  auto t = torch::empty({m.rows(), m.cols()}, torch::kFloat64);
  std::memcpy(t.data_ptr<double>(), m.data(), sizeof(double) * static_cast<std::size_t>(m.size()));
  return t.to(dtype);
}

namespace {

std::vector<double> to_vector(const torch::Tensor& t) {
  auto d = t.detach().to(torch::kCPU, torch::kFloat64).contiguous();
  return {d.data_ptr<double>(), d.data_ptr<double>() + d.numel()};
}

torch::Tensor from_vector(const std::vector<double>& v, const torch::Tensor& like) {
  auto t = torch::empty({static_cast<std::int64_t>(v.size())}, torch::kFloat64);
  std::memcpy(t.data_ptr<double>(), v.data(), sizeof(double) * v.size());
  return t.view(like.sizes()).to(like.scalar_type());
}

torch::Tensor scalar_like(double v, const torch::Tensor& like) {
  return torch::tensor(v, torch::TensorOptions().dtype(like.scalar_type()));
}

struct PatchNceFn : torch::autograd::Function<PatchNceFn> {
  static torch::Tensor forward(AutogradContext* ctx, const torch::Tensor& query, const torch::Tensor& key,
                               std::vector<double> weights, double tau, int mode) {
    contrastive::Matrix gq, gk;
    const double v = contrastive::patch_nce(to_matrix(query), to_matrix(key), weights, tau,
                                            static_cast<contrastive::DenominatorMode>(mode), &gq, &gk);
    ctx->saved_data["gq"] = from_matrix(gq, query.scalar_type());
    ctx->saved_data["gk"] = from_matrix(gk, key.scalar_type());
    return scalar_like(v, query);
  }

  static variable_list backward(AutogradContext* ctx, variable_list grad_out) {
    const auto g = grad_out[0];
    return {ctx->saved_data["gq"].toTensor() * g, ctx->saved_data["gk"].toTensor() * g, torch::Tensor(),
            torch::Tensor(), torch::Tensor()};
  }
};

struct GlobalNceFn : torch::autograd::Function<GlobalNceFn> {
  static torch::Tensor forward(AutogradContext* ctx, const torch::Tensor& z, std::vector<int64_t> pairing,
                               double tau) {
    const std::vector<int> pair(pairing.begin(), pairing.end());
    contrastive::Matrix gz;
    const double v = contrastive::global_nce(to_matrix(z), pair, tau, &gz);
    ctx->saved_data["gz"] = from_matrix(gz, z.scalar_type());
    return scalar_like(v, z);
  }

  static variable_list backward(AutogradContext* ctx, variable_list grad_out) {
    return {ctx->saved_data["gz"].toTensor() * grad_out[0], torch::Tensor(), torch::Tensor()};
  }
};

struct GanDFn : torch::autograd::Function<GanDFn> {
  static torch::Tensor forward(AutogradContext* ctx, const torch::Tensor& real, const torch::Tensor& fake,
                               int flavor, double real_target, double fake_target) {
    const objectives::GanLossConfig cfg{static_cast<objectives::GanFlavor>(flavor), real_target, fake_target};
    const auto r = to_vector(real), f = to_vector(fake);
    std::vector<double> gr(r.size()), gf(f.size());
    const double v = objectives::gan_d_loss(r, f, cfg, gr, gf);
    ctx->saved_data["gr"] = from_vector(gr, real);
    ctx->saved_data["gf"] = from_vector(gf, fake);
    return scalar_like(v, real);
  }

  static variable_list backward(AutogradContext* ctx, variable_list grad_out) {
    const auto g = grad_out[0];
    return {ctx->saved_data["gr"].toTensor() * g, ctx->saved_data["gf"].toTensor() * g, torch::Tensor(),
            torch::Tensor(), torch::Tensor()};
  }
};

struct GanGFn : torch::autograd::Function<GanGFn> {
  static torch::Tensor forward(AutogradContext* ctx, const torch::Tensor& fake, int flavor, double real_target,
                               double fake_target) {
    const objectives::GanLossConfig cfg{static_cast<objectives::GanFlavor>(flavor), real_target, fake_target};
    const auto f = to_vector(fake);
    std::vector<double> gf(f.size());
    const double v = objectives::gan_g_loss(f, cfg, gf);
    ctx->saved_data["gf"] = from_vector(gf, fake);
    return scalar_like(v, fake);
  }

  static variable_list backward(AutogradContext* ctx, variable_list grad_out) {
    return {ctx->saved_data["gf"].toTensor() * grad_out[0], torch::Tensor(), torch::Tensor(), torch::Tensor()};
  }
};

struct SoftDiceFn : torch::autograd::Function<SoftDiceFn> {
  static torch::Tensor forward(AutogradContext* ctx, const torch::Tensor& probs, const torch::Tensor& labels,
                               double eps) {
    const auto p = to_vector(probs);
    auto lab = labels.detach().to(torch::kCPU, torch::kInt16).contiguous();
    std::span<const std::int16_t> ls(lab.data_ptr<std::int16_t>(), static_cast<std::size_t>(lab.numel()));
    std::vector<double> gp(p.size());
    const auto b = static_cast<int>(probs.size(0)), k = static_cast<int>(probs.size(1));
    const auto hw = static_cast<int>(probs.size(2) * probs.size(3));
    const double v = objectives::soft_dice_loss(p, ls, b, k, hw, eps, gp);
    ctx->saved_data["gp"] = from_vector(gp, probs);
    return scalar_like(v, probs);
  }

  static variable_list backward(AutogradContext* ctx, variable_list grad_out) {
    return {ctx->saved_data["gp"].toTensor() * grad_out[0], torch::Tensor(), torch::Tensor()};
  }
};

}  // namespace

torch::Tensor patch_nce(const torch::Tensor& query, const torch::Tensor& key, const std::vector<double>& weights,
                        double tau, contrastive::DenominatorMode mode) {
  return PatchNceFn::apply(query, key, weights, tau, static_cast<int>(mode));
}

torch::Tensor global_nce(const torch::Tensor& z, double tau, std::vector<int> pairing) {
  if (z.dim() != 2) throw ShapeMismatch("global loss expects a 2t × c' matrix");
  const auto rows = static_cast<int>(z.size(0));
  if (pairing.empty()) pairing = contrastive::GlobalFeatureBatch::halves(contrastive::Matrix::Zero(rows, 1)).pairing;
  contrastive::GlobalFeatureBatch check;
  check.vectors = contrastive::Matrix::Zero(rows, 1);
  check.pairing = pairing;
  check.validate();
  return GlobalNceFn::apply(z, std::vector<int64_t>(pairing.begin(), pairing.end()), tau);
}

torch::Tensor gan_d_loss(const torch::Tensor& real_scores, const torch::Tensor& fake_scores,
                         const objectives::GanLossConfig& cfg) {
  return GanDFn::apply(real_scores, fake_scores, static_cast<int>(cfg.flavor), cfg.real_target, cfg.fake_target);
}

torch::Tensor gan_g_loss(const torch::Tensor& fake_scores, const objectives::GanLossConfig& cfg) {
  return GanGFn::apply(fake_scores, static_cast<int>(cfg.flavor), cfg.real_target, cfg.fake_target);
}

torch::Tensor soft_dice(const torch::Tensor& probs, const torch::Tensor& labels, double eps) {
  if (probs.dim() != 4 || labels.dim() != 3 || probs.size(0) != labels.size(0) || probs.size(2) != labels.size(1) ||
      probs.size(3) != labels.size(2))
    throw ShapeMismatch("soft dice expects B×K×H×W probabilities and B×H×W labels");
  return SoftDiceFn::apply(probs, labels, eps);
}

torch::Tensor project_patches(const torch::Tensor& feat, const std::vector<contrastive::Position>& positions,
                              const Head& head) {
  if (feat.dim() != 3) throw ShapeMismatch("project_patches expects a c × h × w feature map");
  const auto h = feat.size(1), w = feat.size(2);
  std::vector<std::int64_t> flat;
  flat.reserve(positions.size());
  for (const auto& p : positions) {
    if (p.y < 0 || p.x < 0 || p.y >= h || p.x >= w) throw ShapeMismatch("patch position outside the feature map");
    flat.push_back(static_cast<std::int64_t>(p.y) * w + p.x);
  }
  const auto idx = torch::tensor(flat, torch::kLong);
  const auto rows = feat.reshape({feat.size(0), h * w}).index_select(1, idx).t();  // n × c
  const auto projected = head(rows);
  return torch::nn::functional::normalize(projected, torch::nn::functional::NormalizeFuncOptions().p(2).dim(1));
}

}  // namespace cisfa::losses
