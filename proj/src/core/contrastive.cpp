#include "cisfa/contrastive.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "cisfa/errors.hpp"

namespace cisfa::contrastive {

void validate(const ContrastiveConfig& cfg) {
  if (!(cfg.tau > 0.0)) throw InvalidMode("tau must be positive");
  if (!(cfg.w >= 1.0)) throw InvalidMode("patch weight w must be at least 1");
  if (cfg.n_patches_per_layer < 2) throw InvalidMode("need at least two patches per layer");
}

std::vector<Position> sample_patch_positions(int h, int w, int n, Rng& rng) {
  const int total = h * w;
  if (n > total)
    throw TooManyPatches("requested " + std::to_string(n) + " patches from a " + std::to_string(h) + "x" +
                         std::to_string(w) + " map");
  if (n < 0) throw TooManyPatches("negative patch count");
  // Partial Fisher-Yates: the first n entries are a uniform draw without replacement.
  std::vector<int> idx(total);
  for (int i = 0; i < total; ++i) idx[i] = i;
  for (int i = 0; i < n; ++i) {
    const auto j = i + static_cast<int>(uniform_index(rng, static_cast<std::uint64_t>(total - i)));
    std::swap(idx[i], idx[j]);
  }
  std::vector<Position> out(n);
  for (int i = 0; i < n; ++i) out[i] = {idx[i] / w, idx[i] % w};
  return out;
}

std::vector<Position> sample_patch_positions(int h, int w, int n, std::uint64_t seed) {
  Rng rng(seed);
  return sample_patch_positions(h, w, n, rng);
}

Grid2<double> patch_weight_map(const LabelMap& label, int h_l, int w_l, double w) {
  if (h_l <= 0 || w_l <= 0 || label.height < h_l || label.width < w_l)
    throw ShapeMismatch("label smaller than the feature map");
  Grid2<double> out(h_l, w_l, 1.0);
  for (int i = 0; i < h_l; ++i) {
    const int y0 = i * label.height / h_l;
    const int y1 = ((i + 1) * label.height + h_l - 1) / h_l;
    for (int j = 0; j < w_l; ++j) {
      const int x0 = j * label.width / w_l;
      const int x1 = ((j + 1) * label.width + w_l - 1) / w_l;
      bool fg = false;
      for (int y = y0; y < y1 && !fg; ++y)
        for (int x = x0; x < x1; ++x)
          if (label(y, x) != 0) {
            fg = true;
            break;
          }
      if (fg) out(i, j) = w;
    }
  }
  return out;
}

std::vector<double> weights_at(const Grid2<double>& map, std::span<const Position> positions) {
  std::vector<double> out;
  out.reserve(positions.size());
  for (const auto& p : positions) out.push_back(map(p.y, p.x));
  return out;
}

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

// Row-wise softmax over the entries not masked to −inf; returns log-sum-exp per row.
Eigen::VectorXd softmax_rows(Matrix& logits) {
  Eigen::VectorXd lse(logits.rows());
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    auto row = logits.row(i);
    const double m = row.maxCoeff();
    double s = 0.0;
    for (Eigen::Index j = 0; j < row.size(); ++j)
      if (row(j) != kNegInf) s += std::exp(row(j) - m);
    lse(i) = m + std::log(s);
    for (Eigen::Index j = 0; j < row.size(); ++j) row(j) = row(j) == kNegInf ? 0.0 : std::exp(row(j) - lse(i));
  }
  return lse;
}

}  // namespace

double patch_nce(const Matrix& query, const Matrix& key, std::span<const double> weights, double tau,
                 DenominatorMode mode, Matrix* grad_query, Matrix* grad_key) {
  const Eigen::Index n = query.rows();
  if (n < 2) throw DegenerateBatch("patch loss needs at least two patches");
  if (key.rows() != n || key.cols() != query.cols() || static_cast<Eigen::Index>(weights.size()) != n)
    throw ShapeMismatch("patch loss: query, key and weight sizes differ");

  const Matrix sim = (query * key.transpose()) / tau;
  Matrix p = sim;
  if (mode == DenominatorMode::negatives_only)
    for (Eigen::Index i = 0; i < n; ++i) p(i, i) = kNegInf;
  const Eigen::VectorXd lse = softmax_rows(p);

  double value = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) value += weights[i] * (lse(i) - sim(i, i));
  value /= static_cast<double>(n);

  if (grad_query || grad_key) {
    // d value / d sim_ij = (w_i / n)(p_ij − δ_ij)
    Matrix g = p;
    for (Eigen::Index i = 0; i < n; ++i) {
      g(i, i) -= 1.0;
      g.row(i) *= weights[i] / static_cast<double>(n);
    }
    if (grad_query) *grad_query = (g * key) / tau;
    if (grad_key) *grad_key = (g.transpose() * query) / tau;
  }
  return value;
}

double patch_nce_loss(const PatchFeatureSet& f_a, const PatchFeatureSet& f_b, const ContrastiveConfig& cfg) {
  if (f_a.layer != f_b.layer) throw ShapeMismatch("patch sets come from different layers");
  if (f_a.positions != f_b.positions) throw ShapeMismatch("patch sets were sampled at different positions");
  if (f_b.vectors.rows() < 2) throw DegenerateBatch("patch loss needs at least two patches");
  std::vector<double> weights = f_b.weights;
  if (weights.empty()) weights.assign(static_cast<std::size_t>(f_b.vectors.rows()), 1.0);
  return patch_nce(f_b.vectors, f_a.vectors, weights, cfg.tau, cfg.denominator);
}

GlobalFeatureBatch GlobalFeatureBatch::halves(Matrix vectors) {
  const auto rows = static_cast<int>(vectors.rows());
  if (rows < 2 || rows % 2 != 0) throw DegenerateBatch("global batch needs an even number (>= 2) of rows");
  GlobalFeatureBatch b;
  b.vectors = std::move(vectors);
  const int t = rows / 2;
  b.pairing.resize(rows);
  for (int i = 0; i < rows; ++i) b.pairing[i] = (i + t) % rows;
  return b;
}

void GlobalFeatureBatch::validate() const {
  const auto rows = static_cast<int>(vectors.rows());
  if (rows < 2) throw DegenerateBatch("global loss needs t >= 1");
  if (static_cast<int>(pairing.size()) != rows) throw ShapeMismatch("pairing size differs from row count");
  for (int i = 0; i < rows; ++i) {
    const int j = pairing[i];
    if (j < 0 || j >= rows || j == i || pairing[j] != i)
      throw DegenerateBatch("pairing must be an involution without fixed points");
  }
}

double global_nce(const Matrix& z, std::span<const int> pairing, double tau, Matrix* grad) {
  const Eigen::Index rows = z.rows();
  if (rows < 2) throw DegenerateBatch("global loss needs t >= 1");
  const Matrix sim = (z * z.transpose()) / tau;
  Matrix p = sim;
  for (Eigen::Index i = 0; i < rows; ++i) p(i, i) = kNegInf;
  const Eigen::VectorXd lse = softmax_rows(p);

  double value = 0.0;
  for (Eigen::Index i = 0; i < rows; ++i) value += lse(i) - sim(i, pairing[i]);
  value /= static_cast<double>(rows);

  if (grad) {
    Matrix g = p;
    for (Eigen::Index i = 0; i < rows; ++i) g(i, pairing[i]) -= 1.0;
    g /= static_cast<double>(rows);
    *grad = ((g + g.transpose()) * z) / tau;
  }
  return value;
}

double global_nce_loss(const GlobalFeatureBatch& batch, double tau) {
  batch.validate();
  if (!(tau > 0.0)) throw InvalidMode("tau must be positive");
  return global_nce(batch.vectors, batch.pairing, tau);
}

Matrix normalize_rows(const Matrix& m) {
  Matrix out = m;
  for (Eigen::Index i = 0; i < out.rows(); ++i) {
    const double norm = out.row(i).norm();
    if (norm > 0.0) out.row(i) /= norm;
  }
  return out;
}

}  // namespace cisfa::contrastive
