#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <span>
#include <vector>

#include "cisfa/grid.hpp"
#include "cisfa/rng.hpp"

namespace cisfa::contrastive {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Which candidates enter the patch-loss denominator for a query u.
///  - with_positive: every row of the counterpart set, u+ included (InfoNCE).
///  - negatives_only: counterpart rows other than u+.
enum class DenominatorMode { with_positive, negatives_only };

struct ContrastiveConfig {
  double tau = 0.2;
  double w = 2.0;
  int n_patches_per_layer = 256;
  std::uint64_t seed = 0;
  DenominatorMode denominator = DenominatorMode::with_positive;
};

void validate(const ContrastiveConfig& cfg);

struct Position {
  int y = 0;
  int x = 0;
  bool operator==(const Position&) const = default;
};

/// `n` distinct positions drawn uniformly without replacement from h×w.
/// Throws TooManyPatches when n > h·w.
std::vector<Position> sample_patch_positions(int h, int w, int n, Rng& rng);
std::vector<Position> sample_patch_positions(int h, int w, int n, std::uint64_t seed);

/// Per-position weights for a feature map of size h_l×w_l: `w` where any pixel
/// of the position's label block is foreground, 1 otherwise. Blocks partition
/// the label with ceil boundaries when the sizes do not divide. Row-major.
Grid2<double> patch_weight_map(const LabelMap& label, int h_l, int w_l, double w);

std::vector<double> weights_at(const Grid2<double>& map, std::span<const Position> positions);

/// Projected, L2-normalised patch vectors of one tapped layer.
struct PatchFeatureSet {
  int layer = 0;
  Matrix vectors;  // n × c'
  std::vector<Position> positions;
  std::vector<double> weights;  // w_p(u), one per row
};

/// Weighted patch-wise InfoNCE. Queries are rows of `query` (from the
/// translated image), keys the rows of `key` (from the input image) at the
/// same positions; row i of each is a positive pair and the other key rows are
/// negatives. Returns mean_i weights[i] · (−log softmax_i).
/// Optional gradients are written when the pointers are non-null.
double patch_nce(const Matrix& query, const Matrix& key, std::span<const double> weights, double tau,
                 DenominatorMode mode = DenominatorMode::with_positive, Matrix* grad_query = nullptr,
                 Matrix* grad_key = nullptr);

/// Set-level entry point: F_b holds the queries (and their weights), F_a the keys.
/// Throws DegenerateBatch if n < 2 and ShapeMismatch if positions differ.
double patch_nce_loss(const PatchFeatureSet& f_a, const PatchFeatureSet& f_b, const ContrastiveConfig& cfg);

/// 2t rows with an involutive, fixed-point-free pairing j(i).
struct GlobalFeatureBatch {
  Matrix vectors;
  std::vector<int> pairing;

  /// Rows 0..t−1 are inputs, rows t..2t−1 their translations: j(i) = (i+t) mod 2t.
  static GlobalFeatureBatch halves(Matrix vectors);
  void validate() const;
};

/// NT-Xent: −1/(2t) Σ_i log( exp(z_i·z_j(i)/τ) / Σ_{k≠i} exp(z_i·z_k/τ) ).
double global_nce(const Matrix& z, std::span<const int> pairing, double tau, Matrix* grad = nullptr);
double global_nce_loss(const GlobalFeatureBatch& batch, double tau);

Matrix normalize_rows(const Matrix& m);

}  // namespace cisfa::contrastive
