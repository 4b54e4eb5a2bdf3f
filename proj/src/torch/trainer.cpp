#include "cisfa/trainer.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <mutex>
#include <sstream>

#include "cisfa/errors.hpp"
#include "cisfa/loss_functions.hpp"
#include "cisfa/metrics.hpp"

namespace cisfa::train {

namespace fs = std::filesystem;
namespace F = torch::nn::functional;
using nlohmann::json;
using objectives::GclMode;

std::string code_version() { return "cisfa-0.1.0"; }

TrainMode train_mode_from_string(const std::string& s) {
  if (s == "cisfa") return TrainMode::cisfa;
  if (s == "no-adaptation" || s == "no_adaptation") return TrainMode::no_adaptation;
  if (s == "supervised") return TrainMode::supervised;
  throw InvalidMode("unknown training mode '" + s + "'");
}

std::string to_string(TrainMode m) {
  switch (m) {
    case TrainMode::cisfa: return "cisfa";
    case TrainMode::no_adaptation: return "no-adaptation";
    case TrainMode::supervised: return "supervised";
  }
  return "cisfa";
}

std::string to_string(Phase p) {
  switch (p) {
    case Phase::g_update: return "G-update";
    case Phase::g_reinfer: return "G-reinfer";
    case Phase::seg_encoder_update: return "Seg-encoder-update";
    case Phase::seg_update: return "Seg-update";
    case Phase::seg_reinfer: return "Seg-reinfer";
    case Phase::dg_update: return "Dg-update";
    case Phase::ds_update: return "Ds-update";
  }
  return "?";
}

TrainConfig TrainConfig::paper_scale() { return TrainConfig{}; }

TrainConfig TrainConfig::desk_scale() {
  TrainConfig c;
  c.generator = nets::GeneratorSpec::desk_scale();
  c.segmenter = {4, 16, 3};
  c.disc_base_channels = 48;
  c.adam.lr = 5e-4;
  // Unit patch-contrastive weight keeps G from inverting contrast on the 32×32
  // task, and the segmenter adversarial term stalls the dice loss.
  c.weights.pcl = 0.1;
  c.weights.seg_adv = 0.0;
  c.epochs = 30;
  return c;
}

void TrainConfig::validate() const {
  contrastive::validate(contrastive);
  if (batch_size < 1) throw InvalidMode("batch size must be positive");
  if (epochs < 0) throw InvalidMode("epochs must be non-negative");
  if (classes < 1) throw InvalidMode("need at least one foreground class");
  if (segmenter.out_channels != classes + 1) throw InvalidMode("segmenter out_channels must equal classes + 1");
  if (!(adam.lr > 0.0)) throw InvalidMode("learning rate must be positive");
  if (direction != "a2b" && direction != "b2a") throw InvalidMode("direction must be a2b or b2a");
  if (threads < 1) throw InvalidMode("threads must be positive");
}

json to_json(const TrainConfig& c) {
  json taps = json::array();
  for (const auto& t : c.generator.feature_layers) taps.push_back(t.str());
  return {
      {"mode", to_string(c.mode)},
      {"lr", c.adam.lr},
      {"beta1", c.adam.beta1},
      {"beta2", c.adam.beta2},
      {"adam_eps", c.adam.eps},
      {"batch_size", c.batch_size},
      {"epochs", c.epochs},
      {"seed", c.seed},
      {"use_pcl", c.ablation.use_pcl},
      {"use_gcl", c.ablation.use_gcl},
      {"pcl_weighted", c.ablation.pcl_weighted},
      {"gcl_mode", objectives::to_string(c.ablation.gcl_mode)},
      {"tau", c.contrastive.tau},
      {"patch_weight", c.contrastive.w},
      {"n_patches", c.contrastive.n_patches_per_layer},
      {"denominator", c.contrastive.denominator == contrastive::DenominatorMode::with_positive ? "with-positive"
                                                                                                : "negatives-only"},
      {"gan", objectives::to_string(c.gan.flavor)},
      {"lambda_g_adv", c.weights.g_adv},
      {"lambda_pcl", c.weights.pcl},
      {"lambda_dice", c.weights.dice},
      {"lambda_gcl", c.weights.gcl},
      {"lambda_seg_adv", c.weights.seg_adv},
      {"classes", c.classes},
      {"gen_channels", c.generator.base_channels},
      {"resblocks", c.generator.n_resblocks},
      {"taps", taps},
      {"seg_stages", c.segmenter.stages},
      {"seg_channels", c.segmenter.base_channels},
      {"disc_channels", c.disc_base_channels},
      {"head_dim", c.head.out_dim},
      {"head_hidden", c.head.hidden_dim},
      {"threads", c.threads},
      {"checkpoint_every", c.checkpoint_every},
      {"trace_checksums", c.trace_checksums},
      {"plane", data::to_string(c.plane)},
      {"direction", c.direction},
      {"fold", c.fold},
  };
}

TrainConfig config_from_json(const json& j, TrainConfig c) {
  try {
    auto get = [&](const char* key, auto& field) {
      if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
    };
    if (j.contains("mode")) c.mode = train_mode_from_string(j.at("mode").get<std::string>());
    get("lr", c.adam.lr);
    get("beta1", c.adam.beta1);
    get("beta2", c.adam.beta2);
    get("adam_eps", c.adam.eps);
    get("batch_size", c.batch_size);
    get("epochs", c.epochs);
    get("seed", c.seed);
    get("use_pcl", c.ablation.use_pcl);
    get("use_gcl", c.ablation.use_gcl);
    get("pcl_weighted", c.ablation.pcl_weighted);
    if (j.contains("gcl_mode")) c.ablation.gcl_mode = objectives::gcl_mode_from_string(j.at("gcl_mode").get<std::string>());
    get("tau", c.contrastive.tau);
    get("patch_weight", c.contrastive.w);
    get("n_patches", c.contrastive.n_patches_per_layer);
    if (j.contains("denominator")) {
      const auto d = j.at("denominator").get<std::string>();
      if (d == "with-positive")
        c.contrastive.denominator = contrastive::DenominatorMode::with_positive;
      else if (d == "negatives-only")
        c.contrastive.denominator = contrastive::DenominatorMode::negatives_only;
      else
        throw InvalidMode("unknown denominator mode '" + d + "'");
    }
    if (j.contains("gan")) c.gan.flavor = objectives::gan_flavor_from_string(j.at("gan").get<std::string>());
    get("lambda_g_adv", c.weights.g_adv);
    get("lambda_pcl", c.weights.pcl);
    get("lambda_dice", c.weights.dice);
    get("lambda_gcl", c.weights.gcl);
    get("lambda_seg_adv", c.weights.seg_adv);
    get("classes", c.classes);
    get("gen_channels", c.generator.base_channels);
    const bool resblocks_given = j.contains("resblocks");
    get("resblocks", c.generator.n_resblocks);
    if (j.contains("taps")) {
      c.generator.feature_layers.clear();
      for (const auto& t : j.at("taps")) c.generator.feature_layers.push_back(nets::Tap::parse(t.get<std::string>()));
    } else if (resblocks_given) {
      c.generator.feature_layers = nets::default_taps(c.generator.n_resblocks);
    }
    get("seg_stages", c.segmenter.stages);
    get("seg_channels", c.segmenter.base_channels);
    c.segmenter.out_channels = c.classes + 1;
    get("disc_channels", c.disc_base_channels);
    get("head_dim", c.head.out_dim);
    get("head_hidden", c.head.hidden_dim);
    get("threads", c.threads);
    get("checkpoint_every", c.checkpoint_every);
    get("trace_checksums", c.trace_checksums);
    if (j.contains("plane")) c.plane = data::plane_from_string(j.at("plane").get<std::string>());
    get("direction", c.direction);
    get("fold", c.fold);
  } catch (const json::exception& e) {
    throw InvalidMode(std::string("bad config value: ") + e.what());
  }
  return c;
}

// ---- models and state --------------------------------------------------------

Models build_models(const TrainConfig& cfg) {
  cfg.validate();
  // torch's default generator is process-global; concurrent fits must not interleave draws.
  static std::mutex seed_mutex;
  std::lock_guard lock(seed_mutex);
  torch::manual_seed(cfg.seed);
  Models m;
  m.gen = nets::Generator(cfg.generator);
  auto seg_spec = cfg.segmenter;
  seg_spec.out_channels = cfg.classes + 1;
  m.seg = nets::Segmenter(seg_spec);
  m.dg = nets::Discriminator(nets::DiscriminatorSpec{3, 1, cfg.disc_base_channels});
  m.ds = nets::Discriminator(nets::DiscriminatorSpec{3, cfg.classes + 1, cfg.disc_base_channels});
  for (const auto& tap : cfg.generator.feature_layers)
    m.patch_heads.emplace_back(nets::tap_channels(cfg.generator, tap), cfg.head);
  m.global_head = nets::ProjectionHead(m.seg->global_feature_dim(), cfg.head);
  return m;
}

std::vector<std::pair<std::string, torch::Tensor>> Models::named_state() const {
  std::vector<std::pair<std::string, torch::Tensor>> out;
  auto add = [&](const std::string& prefix, const torch::nn::Module& mod) {
    for (const auto& p : mod.named_parameters()) out.emplace_back(prefix + p.key(), p.value());
    for (const auto& b : mod.named_buffers()) out.emplace_back(prefix + b.key(), b.value());
  };
  add("G.", *gen);
  add("Seg.", *seg);
  add("Dg.", *dg);
  add("Ds.", *ds);
  for (std::size_t i = 0; i < patch_heads.size(); ++i) add("H" + std::to_string(i) + ".", *patch_heads[i]);
  add("GH.", *global_head);
  return out;
}

void Models::train(bool on) {
  gen->train(on);
  seg->train(on);
  dg->train(on);
  ds->train(on);
  for (auto& h : patch_heads) h->train(on);
  global_head->train(on);
}

TrainState init_state(const TrainConfig& cfg) {
  TrainState s;
  s.models = build_models(cfg);
  std::vector<torch::Tensor> g_params = s.models.gen->parameters();
  for (auto& h : s.models.patch_heads)
    for (auto& p : h->parameters()) g_params.push_back(p);
  std::vector<torch::Tensor> seg_params = s.models.seg->parameters();
  for (auto& p : s.models.global_head->parameters()) seg_params.push_back(p);
  s.opt_g = optim::Adam(g_params, cfg.adam);
  s.opt_seg = optim::Adam(seg_params, cfg.adam);
  s.opt_dg = optim::Adam(s.models.dg->parameters(), cfg.adam);
  s.opt_ds = optim::Adam(s.models.ds->parameters(), cfg.adam);
  s.rng = Rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);
  return s;
}

double parameter_checksum(const torch::nn::Module& m) {
  torch::NoGradGuard guard;
  double s = 0.0;
  for (const auto& p : m.parameters()) s += p.to(torch::kFloat64).sum().item<double>();
  return s;
}

std::vector<Phase> StepTrace::phases() const {
  std::vector<Phase> out;
  for (const auto& e : events) out.push_back(e.phase);
  return out;
}

int StepTrace::optimizer_steps(const std::string& model) const {
  int n = 0;
  for (const auto& e : events) {
    if (model == "G" && e.phase == Phase::g_update) ++n;
    if (model == "Seg" && (e.phase == Phase::seg_update || e.phase == Phase::seg_encoder_update)) ++n;
    if (model == "Dg" && e.phase == Phase::dg_update) ++n;
    if (model == "Ds" && e.phase == Phase::ds_update) ++n;
  }
  return n;
}

// ---- one iteration -----------------------------------------------------------

torch::Tensor stack_images(const data::Batch& b) {
  if (b.samples.empty()) throw DegenerateBatch("empty batch");
  const int h = b.samples[0]->image.height, w = b.samples[0]->image.width;
  auto t = torch::empty({static_cast<std::int64_t>(b.samples.size()), 1, h, w}, torch::kFloat32);
  auto* dst = t.data_ptr<float>();
  for (const auto* s : b.samples) {
    if (s->image.height != h || s->image.width != w) throw ShapeMismatch("batch images differ in size");
    std::copy(s->image.data.begin(), s->image.data.end(), dst);
    dst += static_cast<std::size_t>(h) * w;
  }
  return t;
}

torch::Tensor stack_labels(const data::Batch& b) {
  if (b.samples.empty()) throw DegenerateBatch("empty batch");
  const int h = b.samples[0]->image.height, w = b.samples[0]->image.width;
  auto t = torch::empty({static_cast<std::int64_t>(b.samples.size()), h, w}, torch::kInt64);
  auto* dst = t.data_ptr<std::int64_t>();
  for (const auto* s : b.samples) {
    if (!s->label) throw FormatError("labelled batch contains a slice without a label");
    std::copy(s->label->data.begin(), s->label->data.end(), dst);
    dst += static_cast<std::size_t>(h) * w;
  }
  return t;
}

namespace {

// Freezes batch-norm running statistics for the guard's lifetime (momentum 0).
// Seg's statistics track only the supervised forward on x̂; auxiliary passes
// (x_a for the global loss, re-inference on x_b) would otherwise mix in other
// domains. Buffers are not written afterwards, so saved autograd state stays valid.
class FrozenBatchStats {
 public:
  explicit FrozenBatchStats(torch::nn::Module& m) {
    for (const auto& child : m.modules(/*include_self=*/false))
      if (auto* bn = child->as<torch::nn::BatchNorm2d>()) {
        saved_.emplace_back(bn, bn->options.momentum());
        bn->options.momentum(0.0);
      }
  }
  ~FrozenBatchStats() {
    for (auto& [bn, momentum] : saved_) bn->options.momentum(momentum);
  }
  FrozenBatchStats(const FrozenBatchStats&) = delete;
  FrozenBatchStats& operator=(const FrozenBatchStats&) = delete;

 private:
  std::vector<std::pair<torch::nn::BatchNorm2dImpl*, std::optional<double>>> saved_;
};

// Gathers B × n × c rows at `positions` from a B × c × h × w map.
torch::Tensor gather_rows(const torch::Tensor& feat, const std::vector<contrastive::Position>& positions) {
  const auto w = feat.size(3);
  std::vector<std::int64_t> flat;
  flat.reserve(positions.size());
  for (const auto& p : positions) flat.push_back(static_cast<std::int64_t>(p.y) * w + p.x);
  const auto idx = torch::tensor(flat, torch::kLong);
  return feat.flatten(2).index_select(2, idx).transpose(1, 2);
}

torch::Tensor project(nets::ProjectionHead& head, const torch::Tensor& rows) {
  const auto b = rows.size(0), n = rows.size(1);
  auto z = head->forward(rows.reshape({b * n, rows.size(2)}));
  z = F::normalize(z, F::NormalizeFuncOptions().p(2).dim(1));
  return z.view({b, n, z.size(1)});
}

void require_finite(const torch::Tensor& loss, const std::string& name, const objectives::LossReport& partial) {
  const double v = loss.item<double>();
  if (!std::isfinite(v)) {
    std::ostringstream os;
    os << "non-finite " << name << " at step " << partial.step << "; terms so far:";
    for (const auto& [k, val] : partial.entries()) os << ' ' << k << '=' << val;
    throw NonFiniteLoss(os.str());
  }
}

struct Recorder {
  TrainState& state;
  const TrainConfig& cfg;
  StepTrace& trace;

  void event(Phase p, std::int64_t input_version, std::map<std::string, int> forwards) {
    TraceEvent e{p, state.versions, input_version, std::move(forwards), 0.0, 0.0};
    if (cfg.trace_checksums) {
      e.g_checksum = parameter_checksum(*state.models.gen);
      e.seg_checksum = parameter_checksum(*state.models.seg);
    }
    trace.events.push_back(std::move(e));
  }
};

StepResult segmenter_only_step(const data::Batch& batch_a, TrainState& state, const TrainConfig& cfg) {
  StepResult r;
  r.report.step = state.step;
  r.trace.step = state.step;
  Recorder rec{state, cfg, r.trace};
  auto& m = state.models;
  m.train(true);
  const auto xa = stack_images(batch_a);
  const auto ya = stack_labels(batch_a);
  state.opt_seg.zero_grad();
  const auto probs = torch::softmax(m.seg->forward(xa), 1);
  const auto l_dice = losses::soft_dice(probs, ya);
  require_finite(l_dice, "L_dice", r.report);
  r.report.set("L_dice", l_dice.item<double>());
  const auto total = cfg.weights.dice * l_dice;
  r.report.set("L_seg_total", total.item<double>());
  total.backward();
  state.opt_seg.step();
  ++state.versions.seg;
  rec.event(Phase::seg_update, -1, {{"Seg", 1}});
  ++state.step;
  return r;
}

}  // namespace

StepResult train_step(const data::Batch& batch_a, const data::Batch& batch_b, TrainState& state,
                      const TrainConfig& cfg) {
  if (batch_b.domain != data::Domain::target || batch_b.has_labels())
    throw LabelLeak("target batch carries labels at step " + std::to_string(state.step));
  if (batch_a.samples.empty() || batch_b.samples.empty()) throw DegenerateBatch("empty batch");
  if (cfg.mode != TrainMode::cisfa) return segmenter_only_step(batch_a, state, cfg);

  StepResult r;
  r.report.step = state.step;
  r.trace.step = state.step;
  Recorder rec{state, cfg, r.trace};
  auto& m = state.models;
  m.train(true);

  const auto xa = stack_images(batch_a);
  const auto ya = stack_labels(batch_a);
  const auto xb = stack_images(batch_b);
  const auto& taps = cfg.generator.feature_layers;
  const auto batch = xa.size(0);

  // Phase 1: generator.
  {
    state.opt_g.zero_grad();
    const auto out = m.gen->forward(xa, taps);
    const auto l_adv = losses::gan_g_loss(m.dg->forward(out.image), cfg.gan);
    require_finite(l_adv, "L_G_adv", r.report);
    r.report.set("L_G_adv", l_adv.item<double>());
    auto total = cfg.weights.g_adv * l_adv;

    std::vector<double> per_layer;
    int g_forwards = 1;
    if (cfg.ablation.use_pcl) {
      const auto feats_hat = m.gen->encode(out.image, taps);
      ++g_forwards;
      torch::Tensor pcl_sum;
      r.trace.patch_layers = static_cast<int>(taps.size());
      for (std::size_t l = 0; l < taps.size(); ++l) {
        const auto& fa = out.features[l];
        const int h = static_cast<int>(fa.size(2)), w = static_cast<int>(fa.size(3));
        const int n = std::min(cfg.contrastive.n_patches_per_layer, h * w);
        // One draw per layer, shared by the input and its translation.
        const auto positions = contrastive::sample_patch_positions(h, w, n, state.rng);
        ++r.trace.patch_position_draws;
        const auto keys = project(m.patch_heads[l], gather_rows(fa, positions));
        const auto queries = project(m.patch_heads[l], gather_rows(feats_hat[l], positions));
        torch::Tensor layer_loss;
        for (std::int64_t b = 0; b < batch; ++b) {
          std::vector<double> weights(positions.size(), 1.0);
          if (cfg.ablation.pcl_weighted) {
            const auto wm = contrastive::patch_weight_map(*batch_a.samples[b]->label, h, w, cfg.contrastive.w);
            weights = contrastive::weights_at(wm, positions);
          }
          auto li = losses::patch_nce(queries[b], keys[b], weights, cfg.contrastive.tau, cfg.contrastive.denominator);
          layer_loss = layer_loss.defined() ? layer_loss + li : li;
        }
        layer_loss = layer_loss / static_cast<double>(batch);
        require_finite(layer_loss, "L_pcl_" + taps[l].str(), r.report);
        per_layer.push_back(layer_loss.item<double>());
        r.report.set("L_pcl_" + taps[l].str(), per_layer.back());
        pcl_sum = pcl_sum.defined() ? pcl_sum + layer_loss : layer_loss;
      }
      const auto pcl_mean = pcl_sum / static_cast<double>(taps.size());
      const auto g_total = objectives::total_generator_loss(r.report.get("L_G_adv"), per_layer);
      r.report.set("L_pcl_weighted", *g_total.pcl_mean);
      total = total + cfg.weights.pcl * pcl_mean;
    }
    r.report.set("L_G_total", total.item<double>());
    total.backward();
    state.opt_g.step();
    ++state.versions.g;
    rec.event(Phase::g_update, -1, {{"G", g_forwards}, {"Dg", 1}});
  }

  // Phase 2: fresh translation with the updated G, then the segmenter.
  torch::Tensor x_hat;
  {
    torch::NoGradGuard guard;
    x_hat = m.gen->forward(xa).image;
  }
  rec.event(Phase::g_reinfer, state.versions.g, {{"G", 1}});

  auto global_loss = [&]() {
    FrozenBatchStats frozen(*m.seg);
    const auto z_raw = m.seg->encode_global(torch::cat({xa, x_hat}, 0));
    const auto z = F::normalize(m.global_head->forward(z_raw), F::NormalizeFuncOptions().p(2).dim(1));
    return losses::global_nce(z, cfg.contrastive.tau);
  };

  const bool gcl_on = cfg.ablation.use_gcl;
  if (gcl_on && cfg.ablation.gcl_mode == GclMode::sequential) {
    state.opt_seg.zero_grad();
    const auto l_gcl = global_loss();
    require_finite(l_gcl, "L_gcl", r.report);
    r.report.set("L_gcl", l_gcl.item<double>());
    (cfg.weights.gcl * l_gcl).backward();
    state.opt_seg.step();
    ++state.versions.seg;
    rec.event(Phase::seg_encoder_update, state.versions.g, {{"Seg", 1}});
  }
  {
    state.opt_seg.zero_grad();
    const auto probs_hat = torch::softmax(m.seg->forward(x_hat), 1);
    const auto l_dice = losses::soft_dice(probs_hat, ya);
    require_finite(l_dice, "L_dice", r.report);
    r.report.set("L_dice", l_dice.item<double>());
    const auto l_adv = losses::gan_g_loss(m.ds->forward(probs_hat), cfg.gan);
    require_finite(l_adv, "L_seg_adv", r.report);
    r.report.set("L_seg_adv", l_adv.item<double>());
    auto total = cfg.weights.dice * l_dice + cfg.weights.seg_adv * l_adv;
    int seg_forwards = 1;
    std::optional<double> gcl_value;
    if (gcl_on && cfg.ablation.gcl_mode == GclMode::sum) {
      const auto l_gcl = global_loss();
      ++seg_forwards;
      require_finite(l_gcl, "L_gcl", r.report);
      gcl_value = l_gcl.item<double>();
      r.report.set("L_gcl", *gcl_value);
      total = total + cfg.weights.gcl * l_gcl;
    }
    r.report.set("L_seg_total", total.item<double>());
    total.backward();
    state.opt_seg.step();
    ++state.versions.seg;
    rec.event(Phase::seg_update, state.versions.g, {{"Seg", seg_forwards}, {"Ds", 1}});
  }

  // Phase 3: fresh masks from the updated Seg; discriminators on detached inputs.
  torch::Tensor s_b, s_hat;
  {
    torch::NoGradGuard guard;
    FrozenBatchStats frozen(*m.seg);
    s_b = torch::softmax(m.seg->forward(xb), 1);
    s_hat = torch::softmax(m.seg->forward(x_hat), 1);
  }
  rec.event(Phase::seg_reinfer, state.versions.seg, {{"Seg", 2}});
  {
    state.opt_dg.zero_grad();
    const auto l = losses::gan_d_loss(m.dg->forward(xb), m.dg->forward(x_hat.detach()), cfg.gan);
    require_finite(l, "L_D_G", r.report);
    r.report.set("L_D_G", l.item<double>());
    l.backward();
    state.opt_dg.step();
    ++state.versions.dg;
    rec.event(Phase::dg_update, state.versions.g, {{"Dg", 2}});
  }
  {
    state.opt_ds.zero_grad();
    const auto l = losses::gan_d_loss(m.ds->forward(s_b.detach()), m.ds->forward(s_hat.detach()), cfg.gan);
    require_finite(l, "L_D_S", r.report);
    r.report.set("L_D_S", l.item<double>());
    l.backward();
    state.opt_ds.step();
    ++state.versions.ds;
    rec.event(Phase::ds_update, state.versions.seg, {{"Ds", 2}});
  }
  // Generator/segmenter gradients left by the D-side graphs are not carried over.
  state.opt_g.zero_grad();
  state.opt_seg.zero_grad();

  r.report.check_finite();
  ++state.step;
  return r;
}

// ---- fitting -----------------------------------------------------------------

FitData make_fit_data(const std::vector<data::Volume>& source, const std::vector<data::Volume>& target,
                      const data::FoldAssignment& source_folds, const data::FoldAssignment& target_folds, int fold,
                      TrainMode mode, data::Plane plane) {
  if (fold < 0 || fold >= source_folds.k || fold >= target_folds.k) throw InvalidMode("fold index out of range");
  FitData d;
  for (const auto& v : source) {
    if (source_folds.fold_of(v.id) == fold) {
      d.val_a.push_back(v);
    } else if (mode != TrainMode::supervised) {
      if (!v.labels) throw FormatError("source volume " + v.id + " has no labels");
      auto s = data::decompose_slices(v, plane, data::Domain::source);
      d.train_a.insert(d.train_a.end(), std::make_move_iterator(s.begin()), std::make_move_iterator(s.end()));
    }
  }
  for (const auto& v : target) {
    if (target_folds.fold_of(v.id) == fold) {
      d.test_b.push_back(v);
    } else {
      auto s = data::decompose_slices(v, plane, data::Domain::target);
      d.train_b.insert(d.train_b.end(), std::make_move_iterator(s.begin()), std::make_move_iterator(s.end()));
      if (mode == TrainMode::supervised) {
        if (!v.labels) throw FormatError("supervised mode needs target labels (" + v.id + ")");
        auto l = data::decompose_slices(v, plane, data::Domain::source);
        d.train_a.insert(d.train_a.end(), std::make_move_iterator(l.begin()), std::make_move_iterator(l.end()));
      }
    }
  }
  if (mode == TrainMode::supervised) {
    // Validation on held-out target labels is the only option when training on target labels.
    d.val_a = d.test_b;
  }
  if (d.train_a.empty() || d.train_b.empty()) throw TooFewVolumes("a training split is empty");
  return d;
}

double validation_dice(Models& models, const TrainConfig& cfg, const std::vector<data::Volume>& volumes,
                       bool translate) {
  if (volumes.empty()) return 0.0;
  torch::NoGradGuard guard;
  models.train(false);
  auto predict = [&](const data::SliceSample& s) {
    auto x = torch::from_blob(const_cast<float*>(s.image.data.data()), {1, 1, s.image.height, s.image.width},
                              torch::kFloat32)
                 .clone();
    if (translate) x = models.gen->forward(x).image;
    const auto lab = models.seg->forward(x).argmax(1).to(torch::kInt16).contiguous();
    LabelMap out(s.image.height, s.image.width);
    std::copy(lab.data_ptr<std::int16_t>(), lab.data_ptr<std::int16_t>() + lab.numel(), out.data.begin());
    return out;
  };
  const auto vm = metrics::evaluate_predictor(predict, volumes, cfg.plane, cfg.classes);
  models.train(true);
  double s = 0.0;
  std::size_t n = 0;
  for (const auto& v : vm)
    for (double d : v.dice) {
      s += d;
      ++n;
    }
  return n ? s / static_cast<double>(n) : 0.0;
}

namespace {

void write_json_file(const json& j, const fs::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw FormatError("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

// Drops log lines past `last_step` so a resumed run continues a clean log.
void truncate_log(const fs::path& path, std::int64_t last_step, bool csv) {
  if (!fs::exists(path)) return;
  std::ifstream in(path);
  std::vector<std::string> keep;
  std::string line;
  bool header = csv;
  while (std::getline(in, line)) {
    if (header) {
      keep.push_back(line);
      header = false;
      continue;
    }
    std::int64_t step = 0;
    if (csv) {
      step = std::stoll(line.substr(0, line.find(',')));
    } else {
      const auto p = line.find(':');
      step = std::stoll(line.substr(p + 1));
    }
    if (step <= last_step) keep.push_back(line);
  }
  in.close();
  std::ofstream out(path, std::ios::trunc);
  for (const auto& l : keep) out << l << '\n';
}

void truncate_metrics(const fs::path& path, int last_epoch) {
  if (!fs::exists(path)) return;
  std::ifstream in(path);
  std::vector<std::string> keep;
  std::string line;
  bool header = true;
  while (std::getline(in, line)) {
    if (header || std::stoi(line.substr(0, line.find(','))) <= last_epoch) keep.push_back(line);
    header = false;
  }
  in.close();
  std::ofstream out(path, std::ios::trunc);
  for (const auto& l : keep) out << l << '\n';
}

}  // namespace

FitResult fit(const TrainConfig& cfg_in, const FitData& data, const fs::path& run_dir, const FitOptions& options) {
  cfg_in.validate();
  fs::create_directories(run_dir);
  torch::set_num_threads(cfg_in.threads);

  TrainConfig cfg = cfg_in;
  TrainState state;
  const bool resuming = options.resume && fs::exists(run_dir / "ckpt_last" / "manifest.json");
  if (resuming) {
    auto [saved_cfg, saved_state] = load_checkpoint(run_dir / "ckpt_last");
    const int epochs = cfg.epochs;
    cfg = saved_cfg;
    cfg.epochs = epochs;
    state = std::move(saved_state);
    truncate_log(run_dir / "losses.csv", state.step - 1, true);
    truncate_log(run_dir / "losses.jsonl", state.step - 1, false);
    truncate_metrics(run_dir / "metrics.csv", state.epoch);
  } else {
    state = init_state(cfg);
  }

  json manifest = options.manifest_extra;
  manifest["config"] = to_json(cfg);
  manifest["seed"] = cfg.seed;
  manifest["code_version"] = code_version();
  manifest["layout"] = {{"losses", "losses.csv"},         {"losses_jsonl", "losses.jsonl"},
                        {"metrics", "metrics.csv"},       {"last", "ckpt_last"},
                        {"best", "ckpt_best"},            {"per_epoch", "ckpt_epoch_{n}"}};
  write_json_file(manifest, run_dir / "manifest.json");

  objectives::LossLog log(run_dir / "losses.csv", run_dir / "losses.jsonl", resuming);
  const bool metrics_exist = resuming && fs::exists(run_dir / "metrics.csv");
  std::ofstream metrics_out(run_dir / "metrics.csv", metrics_exist ? std::ios::app : std::ios::trunc);
  if (!metrics_exist) metrics_out << "epoch,val_dice,test_dice,mean_dice_loss,best\n";

  FitResult result;
  result.best_val = state.best_val;
  const bool translate = cfg.mode == TrainMode::cisfa;
  while (state.epoch < cfg.epochs) {
    const auto plan = data::plan_epoch(static_cast<int>(data.train_a.size()), static_cast<int>(data.train_b.size()),
                                       cfg.batch_size, state.rng);
    double dice_sum = 0.0;
    for (std::size_t b = 0; b < plan.batches_a.size(); ++b) {
      const auto ba = data::make_batch(data.train_a, plan.batches_a[b], data::Domain::source);
      const auto bb = data::make_batch(data.train_b, plan.batches_b[b], data::Domain::target);
      StepResult sr;
      try {
        sr = train_step(ba, bb, state, cfg);
      } catch (const NonFiniteLoss& e) {
        write_json_file({{"error", e.what()}, {"step", state.step}, {"epoch", state.epoch}},
                        run_dir / "nonfinite_dump.json");
        throw;
      }
      log.write(sr.report);
      dice_sum += sr.report.get("L_dice");
      if (options.on_step) options.on_step(sr);
    }
    ++state.epoch;

    EpochRecord rec;
    rec.epoch = state.epoch;
    rec.mean_dice_loss = dice_sum / static_cast<double>(plan.batches_a.size());
    rec.val_dice = validation_dice(state.models, cfg, data.val_a, translate);
    // Target-fold score is monitoring only; checkpoint selection uses the source validation fold.
    rec.test_dice = validation_dice(state.models, cfg, data.test_b, false);
    if (rec.val_dice > state.best_val) {
      state.best_val = rec.val_dice;
      rec.best = true;
    }
    save_checkpoint(state, cfg, run_dir / "ckpt_last");
    if (rec.best) save_checkpoint(state, cfg, run_dir / "ckpt_best");
    if (cfg.checkpoint_every > 0 && state.epoch % cfg.checkpoint_every == 0)
      save_checkpoint(state, cfg, run_dir / ("ckpt_epoch_" + std::to_string(state.epoch)));
    metrics_out << rec.epoch << ',' << std::setprecision(17) << rec.val_dice << ',' << rec.test_dice << ','
                << rec.mean_dice_loss << ',' << (rec.best ? 1 : 0) << '\n';
    metrics_out.flush();
    result.history.push_back(rec);
    if (options.on_epoch) options.on_epoch(rec);
  }
  result.best_val = state.best_val;
  result.steps = state.step;
  return result;
}

}  // namespace cisfa::train
