#include "cisfa/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <sstream>

#include "cisfa/errors.hpp"

namespace cisfa::metrics {

namespace {

void require_same_shape(const Mask3& a, const Mask3& b) {
  if (a.shape() != b.shape()) throw ShapeMismatch("masks have different shapes");
}

constexpr double kInf = std::numeric_limits<double>::infinity();

// Felzenszwalb–Huttenlocher lower envelope on one line with sample spacing `h`:
// out[p] = min_q (h·(p−q))² + f[q].
void edt_1d(const double* f, double* out, int n, std::ptrdiff_t stride, double h, std::vector<int>& v,
            std::vector<double>& z, std::vector<double>& buf) {
  buf.resize(n);
  for (int i = 0; i < n; ++i) buf[i] = f[i * stride];
  v.resize(n);
  z.resize(n + 1);
  const double h2 = h * h;
  int k = -1;
  for (int q = 0; q < n; ++q) {
    if (buf[q] == kInf) continue;
    const double fq = buf[q] + h2 * q * q;
    while (k >= 0) {
      const int r = v[k];
      const double s = (fq - (buf[r] + h2 * r * r)) / (2.0 * h2 * (q - r));
      if (s <= z[k]) {
        --k;
      } else {
        break;
      }
    }
    ++k;
    v[k] = q;
    z[k] = k == 0 ? -kInf : (fq - (buf[v[k - 1]] + h2 * v[k - 1] * v[k - 1])) / (2.0 * h2 * (q - v[k - 1]));
    z[k + 1] = kInf;
  }
  if (k < 0) {
    for (int i = 0; i < n; ++i) out[i * stride] = kInf;
    return;
  }
  int j = 0;
  for (int p = 0; p < n; ++p) {
    while (z[j + 1] < p) ++j;
    const double d = h * (p - v[j]);
    out[p * stride] = d * d + buf[v[j]];
  }
}

}  // namespace

double dice_score(const Mask3& pred, const Mask3& gt) {
  require_same_shape(pred, gt);
  std::size_t inter = 0, np = 0, ng = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const bool p = pred.data[i] != 0, g = gt.data[i] != 0;
    inter += p && g;
    np += p;
    ng += g;
  }
  if (np + ng == 0) return 1.0;
  return 2.0 * static_cast<double>(inter) / static_cast<double>(np + ng);
}

Mask3 surface(const Mask3& m) {
  Mask3 out(m.depth, m.height, m.width, 0);
  auto inside = [&](int z, int y, int x) {
    return z >= 0 && y >= 0 && x >= 0 && z < m.depth && y < m.height && x < m.width && m(z, y, x) != 0;
  };
  for (int z = 0; z < m.depth; ++z)
    for (int y = 0; y < m.height; ++y)
      for (int x = 0; x < m.width; ++x) {
        if (!m(z, y, x)) continue;
        const bool interior = inside(z - 1, y, x) && inside(z + 1, y, x) && inside(z, y - 1, x) &&
                              inside(z, y + 1, x) && inside(z, y, x - 1) && inside(z, y, x + 1);
        out(z, y, x) = interior ? 0 : 1;
      }
  return out;
}

Grid3<double> squared_distance_transform(const Mask3& seeds, const std::array<double, 3>& sp) {
  const int d = seeds.depth, h = seeds.height, w = seeds.width;
  Grid3<double> g(d, h, w, kInf);
  for (std::size_t i = 0; i < seeds.size(); ++i)
    if (seeds.data[i]) g.data[i] = 0.0;
  if (g.empty()) return g;
  Grid3<double> tmp = g;
  std::vector<int> v;
  std::vector<double> z, buf;
  // x lines
  for (int a = 0; a < d; ++a)
    for (int b = 0; b < h; ++b) edt_1d(&g(a, b, 0), &tmp(a, b, 0), w, 1, sp[2], v, z, buf);
  // y lines
  for (int a = 0; a < d; ++a)
    for (int c = 0; c < w; ++c) edt_1d(&tmp(a, 0, c), &g(a, 0, c), h, w, sp[1], v, z, buf);
  // z lines
  const std::ptrdiff_t zs = static_cast<std::ptrdiff_t>(h) * w;
  for (int b = 0; b < h; ++b)
    for (int c = 0; c < w; ++c) edt_1d(&g(0, b, c), &tmp(0, b, c), d, zs, sp[0], v, z, buf);
  return tmp;
}

std::optional<double> assd(const Mask3& pred, const Mask3& gt, const std::array<double, 3>& spacing_mm) {
  require_same_shape(pred, gt);
  const auto any = [](const Mask3& m) { return std::any_of(m.data.begin(), m.data.end(), [](auto v) { return v; }); };
  if (!any(pred) || !any(gt)) return std::nullopt;
  const Mask3 sp = surface(pred), sg = surface(gt);
  const Grid3<double> dist_to_g = squared_distance_transform(sg, spacing_mm);
  const Grid3<double> dist_to_p = squared_distance_transform(sp, spacing_mm);
  double total = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < sp.size(); ++i) {
    if (sp.data[i]) {
      total += std::sqrt(dist_to_g.data[i]);
      ++count;
    }
    if (sg.data[i]) {
      total += std::sqrt(dist_to_p.data[i]);
      ++count;
    }
  }
  return total / static_cast<double>(count);
}

Mask3 class_mask(const Grid3<std::int16_t>& labels, int cls) {
  Mask3 m(labels.depth, labels.height, labels.width, 0);
  for (std::size_t i = 0; i < labels.size(); ++i) m.data[i] = labels.data[i] == cls ? 1 : 0;
  return m;
}

std::vector<std::string> default_class_names(int classes) {
  std::vector<std::string> names;
  for (int c = 1; c <= classes; ++c) names.push_back("class" + std::to_string(c));
  return names;
}

VolumeMetrics evaluate_volume(const std::string& volume_id, const Grid3<std::int16_t>& pred,
                              const Grid3<std::int16_t>& gt, int classes, const std::array<double, 3>& spacing_mm,
                              const std::vector<std::string>& class_names) {
  if (pred.shape() != gt.shape()) throw ShapeMismatch("prediction and label volumes differ in shape");
  VolumeMetrics vm;
  vm.volume_id = volume_id;
  vm.class_names = class_names.empty() ? default_class_names(classes) : class_names;
  for (int c = 1; c <= classes; ++c) {
    const Mask3 p = class_mask(pred, c), g = class_mask(gt, c);
    vm.dice.push_back(dice_score(p, g));
    vm.assd_mm.push_back(assd(p, g, spacing_mm));
  }
  return vm;
}

std::vector<VolumeMetrics> evaluate_predictor(const Predictor& predict, const std::vector<data::Volume>& volumes,
                                              data::Plane plane, int classes,
                                              const std::vector<std::string>& class_names) {
  std::vector<VolumeMetrics> out;
  for (const auto& v : volumes) {
    if (!v.labels) throw FormatError("evaluation volume " + v.id + " has no labels");
    // Slices are decomposed as target-domain samples: the predictor never sees labels.
    const auto slices = data::decompose_slices(v, plane, data::Domain::target);
    std::vector<LabelMap> planes;
    planes.reserve(slices.size());
    for (const auto& s : slices) {
      LabelMap lm = predict(s);
      if (lm.height != s.image.height || lm.width != s.image.width)
        throw ShapeMismatch("predictor returned a label map of the wrong size");
      planes.push_back(std::move(lm));
    }
    const auto pred = data::restack_labels(planes, plane);
    out.push_back(evaluate_volume(v.id, pred, *v.labels, classes, v.spacing, class_names));
  }
  return out;
}

namespace {

Stat mean_std(const std::vector<double>& xs) {
  Stat s;
  s.folds = static_cast<int>(xs.size());
  if (xs.empty()) return s;
  for (double x : xs) s.mean += x;
  s.mean /= static_cast<double>(xs.size());
  double var = 0.0;
  for (double x : xs) var += (x - s.mean) * (x - s.mean);
  s.std = std::sqrt(var / static_cast<double>(xs.size()));
  return s;
}

}  // namespace

CvReport aggregate_cv(const std::vector<std::vector<VolumeMetrics>>& folds) {
  if (folds.empty()) throw FormatError("aggregate_cv needs at least one fold");
  CvReport r;
  std::size_t classes = 0;
  for (const auto& f : folds)
    if (!f.empty()) {
      classes = f.front().dice.size();
      r.columns = f.front().class_names;
      break;
    }
  if (classes == 0) throw FormatError("aggregate_cv: no volumes to aggregate");
  r.columns.push_back("avg");
  r.folds = static_cast<int>(folds.size());
  r.single_fold = folds.size() == 1;
  r.assd_undefined.assign(classes, 0);

  std::vector<std::vector<double>> dice_cols(classes + 1), assd_cols(classes + 1);
  for (const auto& fold : folds) {
    if (fold.empty()) continue;
    std::vector<double> fold_dice, fold_assd;
    for (std::size_t c = 0; c < classes; ++c) {
      double ds = 0.0, as = 0.0;
      int an = 0;
      for (const auto& vm : fold) {
        if (vm.dice.size() != classes) throw ShapeMismatch("volumes disagree on class count");
        ds += vm.dice[c];
        if (vm.assd_mm[c]) {
          as += *vm.assd_mm[c];
          ++an;
        } else {
          ++r.assd_undefined[c];
        }
      }
      const double dm = ds / static_cast<double>(fold.size());
      dice_cols[c].push_back(dm);
      fold_dice.push_back(dm);
      if (an > 0) {
        assd_cols[c].push_back(as / an);
        fold_assd.push_back(as / an);
      }
    }
    dice_cols[classes].push_back(mean_std(fold_dice).mean);
    if (!fold_assd.empty()) assd_cols[classes].push_back(mean_std(fold_assd).mean);
  }
  for (std::size_t c = 0; c <= classes; ++c) {
    r.dice.push_back(mean_std(dice_cols[c]));
    r.assd_mm.push_back(mean_std(assd_cols[c]));
  }
  return r;
}

namespace {
std::string num(double v, int prec) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", prec, v);
  return buf;
}
}  // namespace

std::string to_csv(const CvReport& r) {
  std::ostringstream os;
  os << "metric,column,mean,std,folds,undefined\n";
  for (std::size_t c = 0; c < r.columns.size(); ++c) {
    os << "dice," << r.columns[c] << ',' << num(r.dice[c].mean, 6) << ',' << num(r.dice[c].std, 6) << ','
       << r.dice[c].folds << ",0\n";
  }
  for (std::size_t c = 0; c < r.columns.size(); ++c) {
    const int undef = c < r.assd_undefined.size() ? r.assd_undefined[c] : 0;
    os << "assd_mm," << r.columns[c] << ',';
    if (r.assd_mm[c].folds > 0)
      os << num(r.assd_mm[c].mean, 6) << ',' << num(r.assd_mm[c].std, 6);
    else
      os << ',';
    os << ',' << r.assd_mm[c].folds << ',' << undef << '\n';
  }
  return os.str();
}

std::string to_table(const CvReport& r, const std::string& title) {
  std::ostringstream os;
  if (!title.empty()) os << title << '\n';
  constexpr int kWidth = 16;
  auto cell = [&](const std::string& s) {
    os << s;
    for (int i = static_cast<int>(s.size()); i < kWidth; ++i) os << ' ';
  };
  cell("Metric");
  for (const auto& c : r.columns) cell(c);
  os << '\n';
  cell("Dice%");
  for (const auto& s : r.dice) cell(num(100.0 * s.mean, 2) + "±" + num(100.0 * s.std, 2));
  os << '\n';
  cell("ASSD(mm)");
  for (const auto& s : r.assd_mm) cell(s.folds > 0 ? num(s.mean, 2) + "±" + num(s.std, 2) : "-");
  os << '\n';
  if (r.single_fold) os << "warning: single fold, std is 0 by construction\n";
  int undef = 0;
  for (int u : r.assd_undefined) undef += u;
  if (undef > 0) os << "note: " << undef << " undefined ASSD value(s) excluded\n";
  return os.str();
}

std::string volume_metrics_csv(const std::vector<VolumeMetrics>& metrics) {
  std::ostringstream os;
  os << "volume_id,class,dice,assd_mm\n";
  for (const auto& vm : metrics)
    for (std::size_t c = 0; c < vm.dice.size(); ++c) {
      os << vm.volume_id << ',' << vm.class_names[c] << ',' << num(vm.dice[c], 6) << ',';
      os << (vm.assd_mm[c] ? num(*vm.assd_mm[c], 6) : std::string("UNDEFINED")) << '\n';
    }
  return os.str();
}

}  // namespace cisfa::metrics
