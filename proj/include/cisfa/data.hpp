#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "cisfa/grid.hpp"
#include "cisfa/rng.hpp"

namespace cisfa::data {

enum class Modality { source, target, synthetic_a, synthetic_b };

/// Role of a sample in training. Only `source` samples may carry labels.
enum class Domain { source, target };

/// Slicing plane. Axial slices index axis 0 (z); coronal slices index axis 1 (y).
enum class Plane { axial, coronal };

std::string to_string(Modality m);
Modality modality_from_string(const std::string& s);
std::string to_string(Plane p);
Plane plane_from_string(const std::string& s);

struct Volume {
  std::string id;
  Modality modality = Modality::source;
  Grid3<float> voxels;
  std::array<double, 3> spacing{1.0, 1.0, 1.0};
  std::optional<Grid3<std::int16_t>> labels;
};

/// Throws FormatError when a Volume breaks its invariants (label shape, label
/// range 0..num_classes, positive spacing).
void validate(const Volume& v, int num_classes);

struct SliceSample {
  Image image;
  std::optional<LabelMap> label;
  Domain domain = Domain::source;
  std::string volume_id;
  int slice_index = 0;
};

/// Half-open axis-aligned box [z0,z1) × [y0,y1) × [x0,x1).
struct Roi {
  int z0 = 0, z1 = 0, y0 = 0, y1 = 0, x0 = 0, x1 = 0;

  static Roi full(const Grid3<float>& g) { return {0, g.depth, 0, g.height, 0, g.width}; }
};

struct FoldAssignment {
  int k = 4;
  std::uint64_t seed = 0;
  std::map<std::string, int> mapping;

  int fold_of(const std::string& volume_id) const;
  std::vector<std::string> volumes_in(int fold) const;
};

/// Per-volume zero-mean, unit-population-std rescaling.
/// Throws DegenerateVolume when the std is below 1e-8.
Volume normalize_volume(const Volume& v);

/// Crops to `roi`, then resamples every slice of `plane` to `target` (H, W):
/// bilinear for intensities, nearest-neighbour for labels. In-plane spacing
/// is rescaled so physical extent is preserved.
Volume crop_and_resize(const Volume& v, const Roi& roi, std::array<int, 2> target,
                       Plane plane = Plane::axial);

/// Volume-disjoint split. Fold sizes differ by at most one.
FoldAssignment split_folds(const std::vector<Volume>& volumes, int k, std::uint64_t seed);
FoldAssignment split_folds(std::vector<std::string> volume_ids, int k, std::uint64_t seed);

/// One sample per index along the plane's slicing axis. Labels are dropped
/// for `Domain::target`.
std::vector<SliceSample> decompose_slices(const Volume& v, Plane plane, Domain domain);

/// Inverse of decompose_slices for the image channel (samples sorted by slice_index).
Grid3<float> restack_images(const std::vector<SliceSample>& slices, Plane plane);
Grid3<std::int16_t> restack_labels(const std::vector<LabelMap>& planes, Plane plane);

Image bilinear_resize(const Image& img, int out_h, int out_w);
LabelMap nearest_resize(const LabelMap& lab, int out_h, int out_w);

struct SynthSpec {
  int size = 32;
  int classes = 2;
  int volumes_per_domain = 8;
  int depth = 12;
};

struct SynthDataset {
  std::vector<Volume> domain_a;
  std::vector<Volume> domain_b;
};

/// Two-domain toy segmentation task. Both domains draw organ geometry from the
/// same law; A renders bright organs on a dark background under a smooth bias
/// field, B renders inverted contrast with spatially correlated noise.
/// Volumes are returned normalized. Labels exist for both domains; B labels are
/// for evaluation only.
SynthDataset synth_dataset(const SynthSpec& spec, std::uint64_t seed);

/// Mean intensity over voxels with the given label value.
double mean_intensity_where(const Volume& v, int label_value);

/// Deterministic batch order for one epoch: independent seeded shuffles of
/// each domain, paired batch by batch. An epoch is one pass over the smaller
/// domain; incomplete trailing batches are dropped unless that would leave no
/// batch at all.
struct EpochPlan {
  std::vector<std::vector<int>> batches_a;
  std::vector<std::vector<int>> batches_b;
};
EpochPlan plan_epoch(int n_a, int n_b, int batch_size, Rng& rng);

/// Stacked batch handed to the trainer.
struct Batch {
  std::vector<const SliceSample*> samples;
  Domain domain = Domain::source;

  bool has_labels() const;
};

/// Builds a batch and enforces the target-label firewall: a target-domain
/// sample that carries a label raises LabelLeak.
Batch make_batch(const std::vector<SliceSample>& pool, const std::vector<int>& indices, Domain domain);

/// Number of batches the firewall has inspected since process start.
std::uint64_t firewall_checks();

// ---- container format ----------------------------------------------------

/// Writes `<dir>/{image.bin,label.bin,meta.json}`. Images are little-endian
/// float32, labels little-endian int16.
void write_volume(const Volume& v, const std::filesystem::path& dir,
                  const std::optional<Roi>& roi = std::nullopt);
Volume read_volume(const std::filesystem::path& dir);
std::optional<Roi> read_roi(const std::filesystem::path& dir);

/// Writes every volume under `<root>/<domain_name>/<volume_id>/`.
void write_domain(const std::vector<Volume>& volumes, const std::filesystem::path& root,
                  const std::string& domain_name);
std::vector<Volume> read_domain(const std::filesystem::path& root, const std::string& domain_name);

struct FoldFile {
  std::uint64_t seed = 0;
  int k = 4;
  std::map<std::string, FoldAssignment> domains;
};
void write_fold_file(const FoldFile& f, const std::filesystem::path& path);
FoldFile read_fold_file(const std::filesystem::path& path);

}  // namespace cisfa::data
