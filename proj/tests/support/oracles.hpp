#pragma once

// Independent reference implementations used by the unit and acceptance
// tests. Everything here is written as plain loops over the definitions, with
// no shared code paths to the library kernels.

#include <array>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <vector>

#include "cisfa/contrastive.hpp"
#include "cisfa/grid.hpp"
#include "cisfa/rng.hpp"

namespace oracle {

using cisfa::contrastive::Matrix;

inline double dot(const Matrix& a, int i, const Matrix& b, int j) {
  double s = 0.0;
  for (int c = 0; c < a.cols(); ++c) s += a(i, c) * b(j, c);
  return s;
}

/// Weighted patch loss, positive included in the denominator unless `negatives_only`.
inline double patch_nce(const Matrix& q, const Matrix& k, const std::vector<double>& w, double tau,
                        bool negatives_only = false) {
  const int n = static_cast<int>(q.rows());
  double total = 0.0;
  for (int i = 0; i < n; ++i) {
    double denom = 0.0;
    for (int j = 0; j < n; ++j) {
      if (negatives_only && j == i) continue;
      denom += std::exp(dot(q, i, k, j) / tau);
    }
    const double num = std::exp(dot(q, i, k, i) / tau);
    total += w[i] * -std::log(num / denom);
  }
  return total / n;
}

inline double global_nce(const Matrix& z, const std::vector<int>& pairing, double tau) {
  const int rows = static_cast<int>(z.rows());
  double total = 0.0;
  for (int i = 0; i < rows; ++i) {
    double denom = 0.0;
    for (int k = 0; k < rows; ++k)
      if (k != i) denom += std::exp(dot(z, i, z, k) / tau);
    total += -std::log(std::exp(dot(z, i, z, pairing[i]) / tau) / denom);
  }
  return total / rows;
}

inline Matrix random_unit_rows(int n, int c, cisfa::Rng& rng) {
  Matrix m(n, c);
  for (int i = 0; i < n; ++i) {
    double norm = 0.0;
    for (int j = 0; j < c; ++j) {
      m(i, j) = cisfa::normal01(rng);
      norm += m(i, j) * m(i, j);
    }
    for (int j = 0; j < c; ++j) m(i, j) /= std::sqrt(norm);
  }
  return m;
}

/// Central differences of f at x (step h) for every coordinate.
inline std::vector<double> numeric_gradient(const std::function<double(const std::vector<double>&)>& f,
                                            std::vector<double> x, double h = 1e-5) {
  std::vector<double> g(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double keep = x[i];
    x[i] = keep + h;
    const double up = f(x);
    x[i] = keep - h;
    const double down = f(x);
    x[i] = keep;
    g[i] = (up - down) / (2.0 * h);
  }
  return g;
}

/// max_i |a_i − b_i| / max(|a_i|, |b_i|, floor). The floor keeps near-zero
/// components from dominating through rounding noise.
inline double max_relative_error(const std::vector<double>& a, const std::vector<double>& b, double floor = 1e-6) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double scale = std::max({std::abs(a[i]), std::abs(b[i]), floor});
    worst = std::max(worst, std::abs(a[i] - b[i]) / scale);
  }
  return worst;
}

// ---- metrics ----------------------------------------------------------------

inline double dice(const cisfa::Mask3& p, const cisfa::Mask3& g) {
  double inter = 0, sp = 0, sg = 0;
  for (int z = 0; z < p.depth; ++z)
    for (int y = 0; y < p.height; ++y)
      for (int x = 0; x < p.width; ++x) {
        const bool a = p(z, y, x) != 0, b = g(z, y, x) != 0;
        inter += a && b;
        sp += a;
        sg += b;
      }
  if (sp + sg == 0) return 1.0;
  return 2.0 * inter / (sp + sg);
}

inline std::vector<std::array<int, 3>> surface_voxels(const cisfa::Mask3& m) {
  std::vector<std::array<int, 3>> out;
  auto inside = [&](int z, int y, int x) {
    return z >= 0 && y >= 0 && x >= 0 && z < m.depth && y < m.height && x < m.width && m(z, y, x) != 0;
  };
  const int dz[6] = {1, -1, 0, 0, 0, 0}, dy[6] = {0, 0, 1, -1, 0, 0}, dx[6] = {0, 0, 0, 0, 1, -1};
  for (int z = 0; z < m.depth; ++z)
    for (int y = 0; y < m.height; ++y)
      for (int x = 0; x < m.width; ++x) {
        if (!m(z, y, x)) continue;
        for (int k = 0; k < 6; ++k)
          if (!inside(z + dz[k], y + dy[k], x + dx[k])) {
            out.push_back({z, y, x});
            break;
          }
      }
  return out;
}

/// All-pairs surface distance.
inline std::optional<double> assd(const cisfa::Mask3& p, const cisfa::Mask3& g, const std::array<double, 3>& sp) {
  const auto a = surface_voxels(p), b = surface_voxels(g);
  if (a.empty() || b.empty()) return std::nullopt;
  auto nearest = [&](const std::array<int, 3>& v, const std::vector<std::array<int, 3>>& set) {
    double best = std::numeric_limits<double>::infinity();
    for (const auto& u : set) {
      double d = 0;
      for (int k = 0; k < 3; ++k) d += std::pow((v[k] - u[k]) * sp[k], 2);
      best = std::min(best, d);
    }
    return std::sqrt(best);
  };
  double s = 0;
  for (const auto& v : a) s += nearest(v, b);
  for (const auto& v : b) s += nearest(v, a);
  return s / static_cast<double>(a.size() + b.size());
}

inline cisfa::Mask3 random_mask(int d, int h, int w, double density, cisfa::Rng& rng) {
  cisfa::Mask3 m(d, h, w, 0);
  for (auto& v : m.data) v = cisfa::uniform01(rng) < density ? 1 : 0;
  return m;
}

}  // namespace oracle
