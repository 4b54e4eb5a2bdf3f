#pragma once

#include <array>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "cisfa/data.hpp"
#include "cisfa/grid.hpp"

namespace cisfa::metrics {

/// 2|P∩G| / (|P|+|G|); 1.0 when both masks are empty. Throws ShapeMismatch.
double dice_score(const Mask3& pred, const Mask3& gt);

/// Mask voxels with at least one 6-neighbour outside the mask or outside the array.
Mask3 surface(const Mask3& mask);

/// Average symmetric surface distance in mm. Empty optional ("undefined")
/// when either mask is empty. Distances come from an exact anisotropic
/// Euclidean distance transform of each surface.
std::optional<double> assd(const Mask3& pred, const Mask3& gt, const std::array<double, 3>& spacing_mm);

/// Exact squared Euclidean distance (mm²) from every voxel to the nearest
/// nonzero voxel of `seeds`; +inf everywhere when `seeds` is empty.
Grid3<double> squared_distance_transform(const Mask3& seeds, const std::array<double, 3>& spacing_mm);

Mask3 class_mask(const Grid3<std::int16_t>& labels, int cls);

struct VolumeMetrics {
  std::string volume_id;
  std::vector<std::string> class_names;
  std::vector<double> dice;
  std::vector<std::optional<double>> assd_mm;
};

VolumeMetrics evaluate_volume(const std::string& volume_id, const Grid3<std::int16_t>& pred,
                              const Grid3<std::int16_t>& gt, int classes, const std::array<double, 3>& spacing_mm,
                              const std::vector<std::string>& class_names = {});

/// Slice-wise predictor: receives an unlabeled slice, returns a label map of the same size.
using Predictor = std::function<LabelMap(const data::SliceSample&)>;

/// Runs `predict` on every slice of every volume, restacks the predictions in
/// 3D and scores them against the volume labels.
std::vector<VolumeMetrics> evaluate_predictor(const Predictor& predict, const std::vector<data::Volume>& volumes,
                                              data::Plane plane, int classes,
                                              const std::vector<std::string>& class_names = {});

std::vector<std::string> default_class_names(int classes);

struct Stat {
  double mean = 0.0;
  double std = 0.0;
  int folds = 0;  // folds that contributed a value
};

/// Cross-validation summary. Column order: one per class, then "avg".
struct CvReport {
  std::vector<std::string> columns;
  std::vector<Stat> dice;
  std::vector<Stat> assd_mm;
  std::vector<int> assd_undefined;  // per class, volumes excluded across all folds
  int folds = 0;
  bool single_fold = false;
};

/// Per fold: mean over volumes (undefined ASSD excluded), avg column = mean of
/// the class columns. Across folds: mean and population std.
CvReport aggregate_cv(const std::vector<std::vector<VolumeMetrics>>& folds);

std::string to_csv(const CvReport& r);
std::string to_table(const CvReport& r, const std::string& title = "");
std::string volume_metrics_csv(const std::vector<VolumeMetrics>& metrics);

}  // namespace cisfa::metrics
