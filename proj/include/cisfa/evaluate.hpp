#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "cisfa/metrics.hpp"
#include "cisfa/trainer.hpp"

namespace cisfa::eval {

struct LoadedModels {
  train::TrainConfig config;
  train::Models models;
};

/// Loads a checkpoint directory and switches every model to eval mode.
LoadedModels load_for_inference(const std::filesystem::path& checkpoint_dir);

/// Argmax segmentation of one slice. With `translate` the slice goes through G first.
LabelMap segment_slice(train::Models& models, const Image& image, bool translate = false);

/// G applied to one slice.
Image translate_slice(train::Models& models, const Image& image);

/// Predictor over the segmenter alone (target-domain inference).
metrics::Predictor segmenter_predictor(train::Models& models);

/// Scores `volumes` with the loaded segmenter.
std::vector<metrics::VolumeMetrics> evaluate_models(train::Models& models, const train::TrainConfig& cfg,
                                                    const std::vector<data::Volume>& volumes);

}  // namespace cisfa::eval
