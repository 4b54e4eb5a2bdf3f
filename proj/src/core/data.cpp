#include "cisfa/data.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <numbers>

#include "cisfa/errors.hpp"

namespace cisfa::data {

std::string to_string(Modality m) {
  switch (m) {
    case Modality::source: return "source";
    case Modality::target: return "target";
    case Modality::synthetic_a: return "synthetic-A";
    case Modality::synthetic_b: return "synthetic-B";
  }
  return "source";
}

Modality modality_from_string(const std::string& s) {
  if (s == "source") return Modality::source;
  if (s == "target") return Modality::target;
  if (s == "synthetic-A") return Modality::synthetic_a;
  if (s == "synthetic-B") return Modality::synthetic_b;
  throw FormatError("unknown modality '" + s + "'");
}

std::string to_string(Plane p) { return p == Plane::axial ? "axial" : "coronal"; }

Plane plane_from_string(const std::string& s) {
  if (s == "axial" || s == "transverse") return Plane::axial;
  if (s == "coronal") return Plane::coronal;
  throw InvalidMode("unknown plane '" + s + "'");
}

void validate(const Volume& v, int num_classes) {
  for (double s : v.spacing)
    if (!(s > 0.0)) throw FormatError("volume " + v.id + ": spacing must be positive");
  if (v.voxels.size() != static_cast<std::size_t>(v.voxels.depth) * v.voxels.height * v.voxels.width)
    throw FormatError("volume " + v.id + ": voxel buffer does not match shape");
  if (v.labels) {
    if (v.labels->shape() != v.voxels.shape())
      throw FormatError("volume " + v.id + ": label shape differs from voxel shape");
    for (auto l : v.labels->data)
      if (l < 0 || l > num_classes)
        throw FormatError("volume " + v.id + ": label value " + std::to_string(l) + " out of range");
  }
}

int FoldAssignment::fold_of(const std::string& volume_id) const {
  auto it = mapping.find(volume_id);
  if (it == mapping.end()) throw FormatError("volume '" + volume_id + "' has no fold");
  return it->second;
}

std::vector<std::string> FoldAssignment::volumes_in(int fold) const {
  std::vector<std::string> out;
  for (const auto& [id, f] : mapping)
    if (f == fold) out.push_back(id);
  return out;
}

Volume normalize_volume(const Volume& v) {
  if (v.voxels.empty()) throw DegenerateVolume("volume " + v.id + " is empty");
  const auto n = static_cast<double>(v.voxels.size());
  double mean = 0.0;
  for (float x : v.voxels.data) mean += x;
  mean /= n;
  double var = 0.0;
  for (float x : v.voxels.data) var += (x - mean) * (x - mean);
  const double sd = std::sqrt(var / n);
  if (sd < 1e-8) throw DegenerateVolume("volume " + v.id + " has zero variance");

  Volume out = v;
  for (auto& x : out.voxels.data) x = static_cast<float>((x - mean) / sd);
  return out;
}

Image bilinear_resize(const Image& img, int out_h, int out_w) {
  Image out(out_h, out_w);
  const double sy = static_cast<double>(img.height) / out_h;
  const double sx = static_cast<double>(img.width) / out_w;
  for (int y = 0; y < out_h; ++y) {
    const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, img.height - 1.0);
    const int y0 = static_cast<int>(std::floor(fy));
    const int y1 = std::min(y0 + 1, img.height - 1);
    const double wy = fy - y0;
    for (int x = 0; x < out_w; ++x) {
      const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, img.width - 1.0);
      const int x0 = static_cast<int>(std::floor(fx));
      const int x1 = std::min(x0 + 1, img.width - 1);
      const double wx = fx - x0;
      const double top = (1 - wx) * img(y0, x0) + wx * img(y0, x1);
      const double bot = (1 - wx) * img(y1, x0) + wx * img(y1, x1);
      out(y, x) = static_cast<float>((1 - wy) * top + wy * bot);
    }
  }
  return out;
}

LabelMap nearest_resize(const LabelMap& lab, int out_h, int out_w) {
  LabelMap out(out_h, out_w);
  for (int y = 0; y < out_h; ++y) {
    const int sy = std::min(static_cast<int>((y + 0.5) * lab.height / out_h), lab.height - 1);
    for (int x = 0; x < out_w; ++x) {
      const int sx = std::min(static_cast<int>((x + 0.5) * lab.width / out_w), lab.width - 1);
      out(y, x) = lab(sy, sx);
    }
  }
  return out;
}

namespace {

// Slicing axis length and in-plane (rows, cols) for a plane.
struct PlaneGeometry {
  int n_slices, rows, cols;
};

PlaneGeometry geometry(const std::array<int, 3>& shape, Plane plane) {
  if (plane == Plane::axial) return {shape[0], shape[1], shape[2]};
  return {shape[1], shape[0], shape[2]};
}

template <typename T>
Grid2<T> extract_plane(const Grid3<T>& g, Plane plane, int s) {
  const auto geo = geometry(g.shape(), plane);
  Grid2<T> out(geo.rows, geo.cols);
  for (int r = 0; r < geo.rows; ++r)
    for (int c = 0; c < geo.cols; ++c)
      out(r, c) = plane == Plane::axial ? g(s, r, c) : g(r, s, c);
  return out;
}

template <typename T>
void insert_plane(Grid3<T>& g, Plane plane, int s, const Grid2<T>& p) {
  for (int r = 0; r < p.height; ++r)
    for (int c = 0; c < p.width; ++c) {
      if (plane == Plane::axial)
        g(s, r, c) = p(r, c);
      else
        g(r, s, c) = p(r, c);
    }
}

template <typename T>
Grid3<T> allocate_for(Plane plane, int n_slices, int rows, int cols) {
  return plane == Plane::axial ? Grid3<T>(n_slices, rows, cols) : Grid3<T>(rows, n_slices, cols);
}

template <typename T>
Grid3<T> crop(const Grid3<T>& g, const Roi& r) {
  Grid3<T> out(r.z1 - r.z0, r.y1 - r.y0, r.x1 - r.x0);
  for (int z = r.z0; z < r.z1; ++z)
    for (int y = r.y0; y < r.y1; ++y)
      for (int x = r.x0; x < r.x1; ++x) out(z - r.z0, y - r.y0, x - r.x0) = g(z, y, x);
  return out;
}

}  // namespace

Volume crop_and_resize(const Volume& v, const Roi& roi, std::array<int, 2> target, Plane plane) {
  const auto& g = v.voxels;
  if (roi.z0 < 0 || roi.y0 < 0 || roi.x0 < 0 || roi.z1 > g.depth || roi.y1 > g.height ||
      roi.x1 > g.width || roi.z0 >= roi.z1 || roi.y0 >= roi.y1 || roi.x0 >= roi.x1)
    throw InvalidROI("ROI is empty or outside the volume " + v.id);
  if (target[0] <= 0 || target[1] <= 0) throw InvalidROI("target size must be positive");

  const Grid3<float> cropped = crop(g, roi);
  const auto geo = geometry(cropped.shape(), plane);

  Volume out;
  out.id = v.id;
  out.modality = v.modality;
  out.voxels = allocate_for<float>(plane, geo.n_slices, target[0], target[1]);
  for (int s = 0; s < geo.n_slices; ++s)
    insert_plane(out.voxels, plane, s, bilinear_resize(extract_plane(cropped, plane, s), target[0], target[1]));

  if (v.labels) {
    const Grid3<std::int16_t> lab = crop(*v.labels, roi);
    auto resized = allocate_for<std::int16_t>(plane, geo.n_slices, target[0], target[1]);
    for (int s = 0; s < geo.n_slices; ++s)
      insert_plane(resized, plane, s, nearest_resize(extract_plane(lab, plane, s), target[0], target[1]));
    out.labels = std::move(resized);
  }

  // In-plane axes: axial -> (y, x) = axes (1, 2); coronal -> (z, x) = axes (0, 2).
  out.spacing = v.spacing;
  const int row_axis = plane == Plane::axial ? 1 : 0;
  out.spacing[row_axis] = v.spacing[row_axis] * geo.rows / target[0];
  out.spacing[2] = v.spacing[2] * geo.cols / target[1];
  return out;
}

FoldAssignment split_folds(std::vector<std::string> ids, int k, std::uint64_t seed) {
  if (k < 1) throw TooFewVolumes("k must be at least 1");
  if (static_cast<int>(ids.size()) < k)
    throw TooFewVolumes("need at least " + std::to_string(k) + " volumes, got " + std::to_string(ids.size()));
  // Sorting first makes the assignment independent of discovery order.
  std::sort(ids.begin(), ids.end());
  if (std::adjacent_find(ids.begin(), ids.end()) != ids.end()) throw FormatError("duplicate volume id");
  Rng rng(seed);
  const auto perm = permutation(rng, static_cast<int>(ids.size()));
  FoldAssignment fa;
  fa.k = k;
  fa.seed = seed;
  for (std::size_t pos = 0; pos < perm.size(); ++pos)
    fa.mapping[ids[perm[pos]]] = static_cast<int>(pos % k);
  return fa;
}

FoldAssignment split_folds(const std::vector<Volume>& volumes, int k, std::uint64_t seed) {
  std::vector<std::string> ids;
  ids.reserve(volumes.size());
  for (const auto& v : volumes) ids.push_back(v.id);
  return split_folds(std::move(ids), k, seed);
}

std::vector<SliceSample> decompose_slices(const Volume& v, Plane plane, Domain domain) {
  const auto geo = geometry(v.voxels.shape(), plane);
  std::vector<SliceSample> out;
  out.reserve(geo.n_slices);
  for (int s = 0; s < geo.n_slices; ++s) {
    SliceSample sample;
    sample.image = extract_plane(v.voxels, plane, s);
    if (domain == Domain::source && v.labels) sample.label = extract_plane(*v.labels, plane, s);
    sample.domain = domain;
    sample.volume_id = v.id;
    sample.slice_index = s;
    out.push_back(std::move(sample));
  }
  return out;
}

Grid3<float> restack_images(const std::vector<SliceSample>& slices, Plane plane) {
  if (slices.empty()) return {};
  std::vector<const SliceSample*> sorted;
  for (const auto& s : slices) sorted.push_back(&s);
  std::sort(sorted.begin(), sorted.end(),
            [](const SliceSample* a, const SliceSample* b) { return a->slice_index < b->slice_index; });
  const auto& first = sorted.front()->image;
  auto g = allocate_for<float>(plane, static_cast<int>(sorted.size()), first.height, first.width);
  for (std::size_t s = 0; s < sorted.size(); ++s) insert_plane(g, plane, static_cast<int>(s), sorted[s]->image);
  return g;
}

Grid3<std::int16_t> restack_labels(const std::vector<LabelMap>& planes, Plane plane) {
  if (planes.empty()) return {};
  auto g = allocate_for<std::int16_t>(plane, static_cast<int>(planes.size()), planes[0].height, planes[0].width);
  for (std::size_t s = 0; s < planes.size(); ++s) insert_plane(g, plane, static_cast<int>(s), planes[s]);
  return g;
}

// ---- synthetic two-domain task ---------------------------------------------

namespace {

struct Organ {
  bool ellipse;
  double cz, cy, cx, rz, ry, rx;
};

Grid3<std::int16_t> draw_labels(const SynthSpec& spec, Rng& rng) {
  const double n = spec.size;
  for (;;) {
    Grid3<std::int16_t> lab(spec.depth, spec.size, spec.size, 0);
    for (int c = 1; c <= spec.classes; ++c) {
      Organ o;
      o.ellipse = (c % 2) == 1;
      o.cz = uniform(rng, 0.3, 0.7) * spec.depth;
      o.rz = uniform(rng, 0.45, 0.75) * spec.depth;
      o.cy = uniform(rng, 0.25, 0.75) * n;
      o.cx = uniform(rng, 0.25, 0.75) * n;
      o.ry = uniform(rng, o.ellipse ? 0.18 : 0.13, o.ellipse ? 0.30 : 0.22) * n;
      o.rx = uniform(rng, o.ellipse ? 0.18 : 0.13, o.ellipse ? 0.30 : 0.22) * n;
      for (int z = 0; z < spec.depth; ++z) {
        const double dz = (z + 0.5 - o.cz) / o.rz;
        if (dz * dz >= 1.0) continue;
        const double scale = std::sqrt(1.0 - dz * dz);
        for (int y = 0; y < spec.size; ++y)
          for (int x = 0; x < spec.size; ++x) {
            const double dy = (y + 0.5 - o.cy) / (o.ry * scale);
            const double dx = (x + 0.5 - o.cx) / (o.rx * scale);
            const bool inside = o.ellipse ? dy * dy + dx * dx <= 1.0 : std::abs(dy) <= 1.0 && std::abs(dx) <= 1.0;
            if (inside) lab(z, y, x) = static_cast<std::int16_t>(c);
          }
      }
    }
    std::vector<bool> present(spec.classes + 1, false);
    for (auto l : lab.data) present[l] = true;
    if (std::all_of(present.begin() + 1, present.end(), [](bool p) { return p; })) return lab;
  }
}

// Organ brightness for domain A; domain B uses 1 - this.
double base_intensity(int label, int classes) {
  if (label == 0) return 0.0;
  if (classes == 1) return 1.0;
  return 1.0 - 0.45 * (label - 1) / (classes - 1);
}

Volume render(const SynthSpec& spec, const Grid3<std::int16_t>& lab, bool domain_b, Rng& rng,
              const std::string& id) {
  Volume v;
  v.id = id;
  v.modality = domain_b ? Modality::synthetic_b : Modality::synthetic_a;
  v.spacing = {2.0, 1.0, 1.0};
  v.voxels = Grid3<float>(spec.depth, spec.size, spec.size);
  const double two_pi = 2.0 * std::numbers::pi;
  const double n = spec.size;
  if (!domain_b) {
    const double fy = uniform(rng, 0.3, 0.9), fx = uniform(rng, 0.3, 0.9);
    const double py = uniform(rng, 0.0, two_pi), px = uniform(rng, 0.0, two_pi);
    for (int z = 0; z < spec.depth; ++z)
      for (int y = 0; y < spec.size; ++y)
        for (int x = 0; x < spec.size; ++x) {
          const double bias = 0.25 * std::sin(two_pi * fy * y / n + py) * std::cos(two_pi * fx * x / n + px);
          const double val = base_intensity(lab(z, y, x), spec.classes) + bias + 0.08 * normal01(rng);
          v.voxels(z, y, x) = static_cast<float>(val);
        }
  } else {
    // Spatially correlated noise: white noise under a 3×3 binomial blur.
    Grid2<double> white(spec.size + 2, spec.size + 2);
    constexpr double k[3] = {0.25, 0.5, 0.25};
    for (int z = 0; z < spec.depth; ++z) {
      for (auto& w : white.data) w = normal01(rng);
      for (int y = 0; y < spec.size; ++y)
        for (int x = 0; x < spec.size; ++x) {
          double blurred = 0.0;
          for (int dy = 0; dy < 3; ++dy)
            for (int dx = 0; dx < 3; ++dx) blurred += k[dy] * k[dx] * white(y + dy, x + dx);
          const double base = 0.2 + 1.0 - base_intensity(lab(z, y, x), spec.classes);
          v.voxels(z, y, x) = static_cast<float>(base + 0.25 * blurred);
        }
    }
  }
  v.labels = lab;
  return normalize_volume(v);
}

}  // namespace

SynthDataset synth_dataset(const SynthSpec& spec, std::uint64_t seed) {
  if (spec.size < 4 || spec.classes < 1 || spec.volumes_per_domain < 1 || spec.depth < 1)
    throw InvalidMode("invalid synthetic dataset spec");
  Rng rng(seed);
  SynthDataset ds;
  for (int i = 0; i < spec.volumes_per_domain; ++i) {
    auto lab = draw_labels(spec, rng);
    char id[32];
    std::snprintf(id, sizeof id, "A%03d", i);
    ds.domain_a.push_back(render(spec, lab, false, rng, id));
  }
  for (int i = 0; i < spec.volumes_per_domain; ++i) {
    auto lab = draw_labels(spec, rng);
    char id[32];
    std::snprintf(id, sizeof id, "B%03d", i);
    ds.domain_b.push_back(render(spec, lab, true, rng, id));
  }
  return ds;
}

double mean_intensity_where(const Volume& v, int label_value) {
  if (!v.labels) throw FormatError("volume " + v.id + " has no labels");
  double sum = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < v.voxels.size(); ++i)
    if (v.labels->data[i] == label_value) {
      sum += v.voxels.data[i];
      ++count;
    }
  return count ? sum / static_cast<double>(count) : 0.0;
}

// ---- batching ---------------------------------------------------------------

namespace {
std::atomic<std::uint64_t> g_firewall_checks{0};

std::vector<std::vector<int>> chunk(const std::vector<int>& order, int count, int batch_size) {
  std::vector<std::vector<int>> out;
  for (int b = 0; b < count; ++b) {
    const int lo = b * batch_size;
    const int hi = std::min(lo + batch_size, static_cast<int>(order.size()));
    out.emplace_back(order.begin() + lo, order.begin() + hi);
  }
  return out;
}
}  // namespace

EpochPlan plan_epoch(int n_a, int n_b, int batch_size, Rng& rng) {
  if (n_a <= 0 || n_b <= 0 || batch_size <= 0) throw DegenerateBatch("empty domain or batch size");
  const auto order_a = permutation(rng, n_a);
  const auto order_b = permutation(rng, n_b);
  const int smaller = std::min(n_a, n_b);
  const int count = std::max(1, smaller / batch_size);
  const int bs = std::min(batch_size, smaller);
  return {chunk(order_a, count, bs), chunk(order_b, count, bs)};
}

bool Batch::has_labels() const {
  return std::any_of(samples.begin(), samples.end(), [](const SliceSample* s) { return s->label.has_value(); });
}

Batch make_batch(const std::vector<SliceSample>& pool, const std::vector<int>& indices, Domain domain) {
  ++g_firewall_checks;
  Batch b;
  b.domain = domain;
  for (int i : indices) {
    const auto& s = pool.at(i);
    if (s.domain != domain) throw LabelLeak("sample from " + s.volume_id + " is in the wrong domain batch");
    if (domain == Domain::target && s.label)
      throw LabelLeak("target-domain slice " + s.volume_id + ":" + std::to_string(s.slice_index) +
                      " carries a label");
    b.samples.push_back(&s);
  }
  return b;
}

std::uint64_t firewall_checks() { return g_firewall_checks.load(); }

}  // namespace cisfa::data
