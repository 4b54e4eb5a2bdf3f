#pragma once

#include <torch/torch.h>

#include <filesystem>
#include <functional>
#include <json.hpp>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "cisfa/contrastive.hpp"
#include "cisfa/data.hpp"
#include "cisfa/nets.hpp"
#include "cisfa/objectives.hpp"
#include "cisfa/optimizer.hpp"
#include "cisfa/rng.hpp"

namespace cisfa::train {

/// cisfa: full framework. no_adaptation: Seg on raw source slices only.
/// supervised: Seg on labelled target-domain slices (reference upper bound).
enum class TrainMode { cisfa, no_adaptation, supervised };
TrainMode train_mode_from_string(const std::string& s);
std::string to_string(TrainMode m);

struct Ablation {
  bool use_pcl = true;
  bool use_gcl = true;
  bool pcl_weighted = true;
  objectives::GclMode gcl_mode = objectives::GclMode::sum;
};

/// Multipliers on each objective term. All 1.0 by default.
struct LossWeights {
  double g_adv = 1.0;
  double pcl = 1.0;
  double dice = 1.0;
  double gcl = 1.0;
  double seg_adv = 1.0;
};

struct TrainConfig {
  TrainMode mode = TrainMode::cisfa;
  optim::AdamConfig adam{2e-4, 0.5, 0.999, 1e-8};
  int batch_size = 4;
  int epochs = 200;
  std::uint64_t seed = 0;
  Ablation ablation;
  contrastive::ContrastiveConfig contrastive;
  objectives::GanLossConfig gan;
  LossWeights weights;
  int classes = 2;
  nets::GeneratorSpec generator = nets::GeneratorSpec::paper_scale();
  nets::SegmenterSpec segmenter{4, 64, 3};
  int disc_base_channels = 64;
  nets::ProjectionHeadSpec head;
  int threads = 1;
  int checkpoint_every = 0;
  bool trace_checksums = false;
  data::Plane plane = data::Plane::axial;
  std::string direction = "a2b";
  int fold = 0;

  static TrainConfig paper_scale();
  /// Small networks and short schedule for CPU runs on the synthetic task.
  static TrainConfig desk_scale();
  void validate() const;
};

nlohmann::json to_json(const TrainConfig& cfg);
/// Overlays the keys present in `j` onto `base`.
TrainConfig config_from_json(const nlohmann::json& j, TrainConfig base = {});

struct Models {
  nets::Generator gen{nullptr};
  nets::Segmenter seg{nullptr};
  nets::Discriminator dg{nullptr};
  nets::Discriminator ds{nullptr};
  std::vector<nets::ProjectionHead> patch_heads;
  nets::ProjectionHead global_head{nullptr};

  /// Every named parameter and buffer, prefixed by model ("G.", "Seg.", ...).
  std::vector<std::pair<std::string, torch::Tensor>> named_state() const;
  void train(bool on = true);
};

/// Builds all models with torch's generator seeded from cfg.seed.
Models build_models(const TrainConfig& cfg);

/// Optimizer step counters of the four models, used as parameter-version stamps.
struct Versions {
  std::int64_t g = 0, seg = 0, dg = 0, ds = 0;
  bool operator==(const Versions&) const = default;
};

struct TrainState {
  Models models;
  optim::Adam opt_g;    // G + patch heads
  optim::Adam opt_seg;  // Seg + global head
  optim::Adam opt_dg;
  optim::Adam opt_ds;
  Rng rng;
  std::int64_t step = 0;
  int epoch = 0;  // completed epochs
  double best_val = -1.0;
  Versions versions;
};

TrainState init_state(const TrainConfig& cfg);

enum class Phase { g_update, g_reinfer, seg_encoder_update, seg_update, seg_reinfer, dg_update, ds_update };
std::string to_string(Phase p);

struct TraceEvent {
  Phase phase;
  Versions versions;              // stamps after the event
  std::int64_t input_version = -1;  // version of the network that produced this event's inputs
  std::map<std::string, int> forwards;
  double g_checksum = 0.0;
  double seg_checksum = 0.0;
};

struct StepTrace {
  std::int64_t step = 0;
  std::vector<TraceEvent> events;
  int patch_position_draws = 0;
  int patch_layers = 0;

  std::vector<Phase> phases() const;
  int optimizer_steps(const std::string& model) const;
};

struct StepResult {
  objectives::LossReport report;
  StepTrace trace;
};

/// One training iteration. cisfa mode runs G → (re-infer G) → Seg → (re-infer
/// Seg) → D_g & D_s. Throws LabelLeak when batch_b carries labels and
/// NonFiniteLoss on any non-finite loss term.
StepResult train_step(const data::Batch& batch_a, const data::Batch& batch_b, TrainState& state,
                      const TrainConfig& cfg);

/// Sum of all parameter values of a module (cheap mutation detector).
double parameter_checksum(const torch::nn::Module& m);

torch::Tensor stack_images(const data::Batch& b);
torch::Tensor stack_labels(const data::Batch& b);

struct FitData {
  std::vector<data::SliceSample> train_a;  // labelled, Domain::source
  std::vector<data::SliceSample> train_b;  // unlabelled, Domain::target
  std::vector<data::Volume> val_a;         // held-out source fold
  std::vector<data::Volume> test_b;        // held-out target fold (labels for scoring only)
};

/// Fold protocol: train on every fold except `fold` of both domains; the
/// held-out source fold validates, the held-out target fold is the test set.
/// In supervised mode the target training folds keep their labels and act as
/// the labelled domain.
FitData make_fit_data(const std::vector<data::Volume>& source, const std::vector<data::Volume>& target,
                      const data::FoldAssignment& source_folds, const data::FoldAssignment& target_folds, int fold,
                      TrainMode mode, data::Plane plane);

struct EpochRecord {
  int epoch = 0;
  double val_dice = 0.0;
  double test_dice = 0.0;
  double mean_dice_loss = 0.0;
  bool best = false;
};

struct FitResult {
  std::vector<EpochRecord> history;
  double best_val = -1.0;
  std::int64_t steps = 0;
};

struct FitOptions {
  bool resume = false;
  nlohmann::json manifest_extra = nlohmann::json::object();
  std::function<void(const EpochRecord&)> on_epoch;
  /// Called after every train_step (tests use it to inspect traces).
  std::function<void(const StepResult&)> on_step;
};

/// Trains for cfg.epochs, writing into `run_dir`: manifest.json, losses.csv,
/// losses.jsonl, metrics.csv, ckpt_last/, ckpt_best/ and optional ckpt_epoch_{n}/.
FitResult fit(const TrainConfig& cfg, const FitData& data, const std::filesystem::path& run_dir,
              const FitOptions& options = {});

/// Mean foreground dice of the segmenter (applied after G in cisfa mode) on labelled volumes.
double validation_dice(Models& models, const TrainConfig& cfg, const std::vector<data::Volume>& volumes,
                       bool translate);

// ---- checkpoints -----------------------------------------------------------

void save_checkpoint(const TrainState& state, const TrainConfig& cfg, const std::filesystem::path& dir);
/// Restores config and full training state (parameters, buffers, optimizer moments, RNG).
std::pair<TrainConfig, TrainState> load_checkpoint(const std::filesystem::path& dir);

std::string code_version();

}  // namespace cisfa::train
