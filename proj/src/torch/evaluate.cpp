#include "cisfa/evaluate.hpp"

namespace cisfa::eval {

namespace {

torch::Tensor to_tensor(const Image& img) {
  return torch::from_blob(const_cast<float*>(img.data.data()), {1, 1, img.height, img.width}, torch::kFloat32)
      .clone();
}

}  // namespace

LoadedModels load_for_inference(const std::filesystem::path& checkpoint_dir) {
  auto [cfg, state] = train::load_checkpoint(checkpoint_dir);
  state.models.train(false);
  return {cfg, std::move(state.models)};
}

LabelMap segment_slice(train::Models& models, const Image& image, bool translate) {
  torch::NoGradGuard guard;
  auto x = to_tensor(image);
  if (translate) x = models.gen->forward(x).image;
  const auto lab = models.seg->forward(x).argmax(1).to(torch::kInt16).contiguous();
  LabelMap out(image.height, image.width);
  std::copy(lab.data_ptr<std::int16_t>(), lab.data_ptr<std::int16_t>() + lab.numel(), out.data.begin());
  return out;
}

Image translate_slice(train::Models& models, const Image& image) {
  torch::NoGradGuard guard;
  const auto y = models.gen->forward(to_tensor(image)).image.contiguous();
  Image out(image.height, image.width);
  std::copy(y.data_ptr<float>(), y.data_ptr<float>() + y.numel(), out.data.begin());
  return out;
}

metrics::Predictor segmenter_predictor(train::Models& models) {
  return [&models](const data::SliceSample& s) { return segment_slice(models, s.image); };
}

std::vector<metrics::VolumeMetrics> evaluate_models(train::Models& models, const train::TrainConfig& cfg,
                                                    const std::vector<data::Volume>& volumes) {
  models.train(false);
  return metrics::evaluate_predictor(segmenter_predictor(models), volumes, cfg.plane, cfg.classes);
}

}  // namespace cisfa::eval
