#include "commands.hpp"

#include <CLI11.hpp>
#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <json.hpp>
#include <map>
#include <ostream>
#include <sstream>

#include "cisfa/container.hpp"
#include "cisfa/data.hpp"
#include "cisfa/errors.hpp"
#include "cisfa/evaluate.hpp"
#include "cisfa/metrics.hpp"
#include "cisfa/objectives.hpp"
#include "cisfa/raster.hpp"
#include "cisfa/trainer.hpp"

namespace cisfa::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Display window for normalized intensities in image dumps.
constexpr float kDisplayLo = -3.0f, kDisplayHi = 3.0f;

json read_json(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw FormatError("cannot open " + p.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw FormatError(p.string() + ": " + e.what());
  }
}

void write_json(const json& j, const fs::path& p) {
  std::ofstream out(p, std::ios::trunc);
  if (!out) throw FormatError("cannot write " + p.string());
  out << j.dump(2) << '\n';
}

void write_text(const std::string& s, const fs::path& p) {
  std::ofstream out(p, std::ios::trunc);
  if (!out) throw FormatError("cannot write " + p.string());
  out << s;
}

// ---- dataset directory -----------------------------------------------------
// <data>/dataset.json, <data>/folds.json, <data>/<domain>/<volume>/{meta.json,image.bin,label.bin}

struct Dataset {
  fs::path root;
  int classes = 2;
  data::Plane plane = data::Plane::axial;
  std::string source, target;
  std::vector<data::Volume> source_volumes, target_volumes;
  data::FoldFile folds;
};

void write_dataset_files(const fs::path& root, const json& info, const data::FoldFile& folds) {
  write_json(info, root / "dataset.json");
  data::write_fold_file(folds, root / "folds.json");
}

Dataset load_dataset(const fs::path& root) {
  const json info = read_json(root / "dataset.json");
  Dataset d;
  d.root = root;
  try {
    d.classes = info.at("classes").get<int>();
    d.plane = data::plane_from_string(info.value("plane", "axial"));
    d.source = info.at("source").get<std::string>();
    d.target = info.at("target").get<std::string>();
  } catch (const json::exception& e) {
    throw FormatError((root / "dataset.json").string() + ": " + e.what());
  }
  d.source_volumes = data::read_domain(root, d.source);
  d.target_volumes = data::read_domain(root, d.target);
  for (const auto* vols : {&d.source_volumes, &d.target_volumes})
    for (const auto& v : *vols) data::validate(v, d.classes);
  d.folds = data::read_fold_file(root / "folds.json");
  for (const auto& name : {d.source, d.target})
    if (!d.folds.domains.count(name)) throw FormatError("folds.json has no entry for domain " + name);
  return d;
}

// Source/target roles after applying the run direction.
struct Roles {
  const std::vector<data::Volume>* source;
  const std::vector<data::Volume>* target;
  const data::FoldAssignment* source_folds;
  const data::FoldAssignment* target_folds;
};

Roles roles(const Dataset& d, const std::string& direction) {
  const auto& fa = d.folds.domains.at(d.source);
  const auto& fb = d.folds.domains.at(d.target);
  if (direction == "b2a") return {&d.target_volumes, &d.source_volumes, &fb, &fa};
  return {&d.source_volumes, &d.target_volumes, &fa, &fb};
}

std::vector<data::Volume> fold_volumes(const std::vector<data::Volume>& vols, const data::FoldAssignment& f,
                                       int fold) {
  std::vector<data::Volume> out;
  for (const auto& v : vols)
    if (f.fold_of(v.id) == fold) out.push_back(v);
  return out;
}

std::string dataset_summary(const Dataset& d) {
  std::ostringstream os;
  const auto& v0 = d.source_volumes.front();
  os << "dataset " << d.root.string() << ": " << d.source << " " << d.source_volumes.size() << " volumes, "
     << d.target << " " << d.target_volumes.size() << " volumes, " << d.classes << " classes, slices "
     << v0.voxels.height << "x" << v0.voxels.width << ", " << d.folds.k << " folds (seed " << d.folds.seed << ")\n";
  return os.str();
}

// ---- run directory helpers -------------------------------------------------

struct RunInfo {
  fs::path dir;
  json manifest;
  train::TrainConfig cfg;
  fs::path data;
};

RunInfo load_run(const fs::path& dir) {
  RunInfo r;
  r.dir = dir;
  r.manifest = read_json(dir / "manifest.json");
  if (!r.manifest.contains("config")) throw FormatError((dir / "manifest.json").string() + ": no config");
  r.cfg = train::config_from_json(r.manifest.at("config"));
  if (r.manifest.contains("data")) r.data = r.manifest.at("data").get<std::string>();
  return r;
}

fs::path checkpoint_dir(const fs::path& run, const std::string& which) {
  if (which != "best" && which != "last") throw InvalidMode("--checkpoint must be best or last");
  const auto dir = run / ("ckpt_" + which);
  if (!fs::exists(dir / "manifest.json")) throw FormatError("missing checkpoint " + dir.string());
  return dir;
}

// Parses a flag value as JSON, falling back to a plain string ("sum", "a2b", ...).
json parse_value(const std::string& key, const std::string& text) {
  if (key == "taps") {
    json arr = json::array();
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) arr.push_back(item);
    return arr;
  }
  try {
    return json::parse(text);
  } catch (const json::exception&) {
    return text;
  }
}

std::string flag_name(std::string key) {
  std::replace(key.begin(), key.end(), '_', '-');
  return "--" + key;
}

// ---- commands ------------------------------------------------------------------

struct Context {
  fs::path workdir = ".";
  std::ostream& out;
  std::ostream& err;

  fs::path resolve(const fs::path& p) const { return p.is_absolute() ? p : workdir / p; }
};

struct SynthArgs {
  std::string out_dir;
  std::uint64_t seed = 0;
  bool seed_given = false;
  data::SynthSpec spec;
  int folds = 4;
};

int cmd_synth_data(const Context& ctx, SynthArgs a) {
  if (!a.seed_given)
    if (const char* env = std::getenv("CISFA_SEED")) a.seed = std::strtoull(env, nullptr, 10);
  const auto root = ctx.resolve(a.out_dir);
  const auto ds = data::synth_dataset(a.spec, a.seed);
  fs::remove_all(root / "A");
  fs::remove_all(root / "B");
  data::write_domain(ds.domain_a, root, "A");
  data::write_domain(ds.domain_b, root, "B");
  data::FoldFile folds;
  folds.seed = a.seed;
  folds.k = a.folds;
  folds.domains["A"] = data::split_folds(ds.domain_a, a.folds, a.seed);
  folds.domains["B"] = data::split_folds(ds.domain_b, a.folds, a.seed);
  json info{{"name", "synthetic"}, {"classes", a.spec.classes}, {"plane", "axial"}, {"source", "A"},
            {"target", "B"},       {"seed", a.seed},            {"size", a.spec.size}, {"depth", a.spec.depth}};
  write_dataset_files(root, info, folds);
  ctx.out << dataset_summary(load_dataset(root));
  return 0;
}

struct PrepareArgs {
  std::string raw, out_dir, source = "source", target = "target", plane = "axial";
  int size = 256, classes = 4, folds = 4;
  std::uint64_t seed = 0;
  bool seed_given = false;
};

int cmd_prepare_data(const Context& ctx, PrepareArgs a) {
  if (!a.seed_given)
    if (const char* env = std::getenv("CISFA_SEED")) a.seed = std::strtoull(env, nullptr, 10);
  const auto raw = ctx.resolve(a.raw), root = ctx.resolve(a.out_dir);
  if (raw == root) throw InvalidMode("--raw and --out must differ");
  const auto plane = data::plane_from_string(a.plane);
  data::FoldFile folds;
  folds.seed = a.seed;
  folds.k = a.folds;
  for (const auto& name : {a.source, a.target}) {
    if (!fs::is_directory(raw / name)) throw FormatError("missing domain directory " + (raw / name).string());
    std::vector<fs::path> dirs;
    for (const auto& e : fs::directory_iterator(raw / name))
      if (e.is_directory()) dirs.push_back(e.path());
    std::sort(dirs.begin(), dirs.end());
    std::vector<data::Volume> prepared;
    for (const auto& dir : dirs) {
      const auto v = data::read_volume(dir);
      data::validate(v, a.classes);
      const auto roi = data::read_roi(dir).value_or(data::Roi::full(v.voxels));
      prepared.push_back(data::normalize_volume(data::crop_and_resize(v, roi, {a.size, a.size}, plane)));
    }
    fs::remove_all(root / name);
    data::write_domain(prepared, root, name);
    folds.domains[name] = data::split_folds(prepared, a.folds, a.seed);
  }
  json info{{"name", raw.filename().string()}, {"classes", a.classes}, {"plane", a.plane},
            {"source", a.source},              {"target", a.target},   {"seed", a.seed},
            {"size", a.size}};
  write_dataset_files(root, info, folds);
  ctx.out << dataset_summary(load_dataset(root));
  return 0;
}

struct TrainArgs {
  std::string data_dir, out_dir, config_file, scale = "desk";
  bool resume = false, no_pcl = false, no_gcl = false, unweighted_pcl = false;
  std::map<std::string, std::string> overrides;  // TrainConfig json key → flag text
};

int cmd_train(const Context& ctx, const TrainArgs& a) {
  if (a.scale != "desk" && a.scale != "paper") throw InvalidMode("--scale must be desk or paper");
  auto cfg = a.scale == "paper" ? train::TrainConfig::paper_scale() : train::TrainConfig::desk_scale();
  bool seed_set = false;
  if (!a.config_file.empty()) {
    const auto file = read_json(ctx.resolve(a.config_file));
    seed_set = file.contains("seed");
    cfg = train::config_from_json(file, cfg);
  }
  json flags = json::object();
  for (const auto& [key, text] : a.overrides) flags[key] = parse_value(key, text);
  seed_set = seed_set || flags.contains("seed");
  if (!seed_set)
    if (const char* env = std::getenv("CISFA_SEED")) flags["seed"] = std::strtoull(env, nullptr, 10);
  if (a.no_pcl) flags["use_pcl"] = false;
  if (a.no_gcl) flags["use_gcl"] = false;
  if (a.unweighted_pcl) flags["pcl_weighted"] = false;

  const auto data_root = fs::absolute(ctx.resolve(a.data_dir));
  const auto ds = load_dataset(data_root);
  flags["classes"] = ds.classes;
  flags["plane"] = data::to_string(ds.plane);
  cfg = train::config_from_json(flags, cfg);
  cfg.validate();

  const auto r = roles(ds, cfg.direction);
  const auto fit_data = train::make_fit_data(*r.source, *r.target, *r.source_folds, *r.target_folds, cfg.fold,
                                             cfg.mode, cfg.plane);
  train::FitOptions opts;
  opts.resume = a.resume;
  opts.manifest_extra = {{"data", data_root.string()},
                         {"dataset_hash", io::hash_tree(data_root)},
                         {"source_domain", cfg.direction == "b2a" ? ds.target : ds.source},
                         {"target_domain", cfg.direction == "b2a" ? ds.source : ds.target}};
  opts.on_epoch = [&](const train::EpochRecord& e) {
    ctx.out << "epoch " << e.epoch << "  val dice " << std::fixed << std::setprecision(4) << e.val_dice
            << "  target dice " << e.test_dice << "  mean L_dice " << e.mean_dice_loss << (e.best ? "  *" : "")
            << std::defaultfloat << '\n';
  };
  const auto run_dir = ctx.resolve(a.out_dir);
  const auto res = train::fit(cfg, fit_data, run_dir, opts);
  ctx.out << "trained " << res.steps << " steps; best val dice " << res.best_val << "; run " << run_dir.string()
          << '\n';
  return 0;
}

struct EvaluateArgs {
  std::vector<std::string> runs;
  std::string folds, checkpoint = "best", out_dir, data_dir;
  bool oracle = false;
};

int cmd_evaluate(const Context& ctx, const EvaluateArgs& a) {
  std::vector<fs::path> runs;
  if (a.folds == "all") {
    if (a.runs.size() != 1) throw InvalidMode("--folds all takes one --run directory holding fold0..foldK-1");
    const auto root = ctx.resolve(a.runs.front());
    for (int k = 0; fs::exists(root / ("fold" + std::to_string(k))); ++k) runs.push_back(root / ("fold" + std::to_string(k)));
    if (runs.empty()) throw FormatError("no fold runs under " + root.string());
  } else if (!a.folds.empty()) {
    throw InvalidMode("--folds accepts only 'all'");
  } else {
    for (const auto& r : a.runs) runs.push_back(ctx.resolve(r));
  }

  std::vector<std::vector<metrics::VolumeMetrics>> per_fold;
  std::vector<metrics::VolumeMetrics> all;
  std::map<fs::path, Dataset> datasets;
  for (const auto& run : runs) {
    const auto info = load_run(run);
    const auto data_root = a.data_dir.empty() ? info.data : ctx.resolve(a.data_dir);
    if (data_root.empty()) throw FormatError(run.string() + ": manifest does not name a dataset");
    if (!datasets.count(data_root)) datasets.emplace(data_root, load_dataset(data_root));
    const auto& ds = datasets.at(data_root);
    const auto r = roles(ds, info.cfg.direction);
    const auto test = fold_volumes(*r.target, *r.target_folds, info.cfg.fold);
    std::vector<metrics::VolumeMetrics> vm;
    if (a.oracle) {
      for (const auto& v : test) {
        if (!v.labels) throw FormatError("volume " + v.id + " has no labels to score against");
        vm.push_back(metrics::evaluate_volume(v.id, *v.labels, *v.labels, ds.classes, v.spacing));
      }
    } else {
      auto loaded = eval::load_for_inference(checkpoint_dir(run, a.checkpoint));
      vm = eval::evaluate_models(loaded.models, loaded.config, test);
    }
    all.insert(all.end(), vm.begin(), vm.end());
    per_fold.push_back(std::move(vm));
  }
  const auto report = metrics::aggregate_cv(per_fold);
  const auto out_dir = a.out_dir.empty() ? (a.folds == "all" ? ctx.resolve(a.runs.front()) : runs.front()) / "eval"
                                         : ctx.resolve(a.out_dir);
  fs::create_directories(out_dir);
  const std::string title = a.oracle ? "oracle (ground truth as prediction)" : "checkpoint " + a.checkpoint;
  write_text(metrics::to_csv(report), out_dir / "cv_report.csv");
  write_text(metrics::volume_metrics_csv(all), out_dir / "volumes.csv");
  const auto table = metrics::to_table(report, title);
  write_text(table, out_dir / "table.txt");
  ctx.out << table;
  return 0;
}

struct TranslateArgs {
  std::string run, checkpoint = "best", out_file;
  int rows = 4;
};

int cmd_translate(const Context& ctx, const TranslateArgs& a) {
  if (a.rows < 1) throw InvalidMode("--rows must be positive");
  const auto run = ctx.resolve(a.run);
  const auto info = load_run(run);
  auto loaded = eval::load_for_inference(checkpoint_dir(run, a.checkpoint));
  const auto ds = load_dataset(info.data);
  const auto r = roles(ds, info.cfg.direction);
  auto vols = fold_volumes(*r.source, *r.source_folds, info.cfg.fold);
  if (vols.empty()) throw FormatError("held-out source fold is empty");

  const int classes = ds.classes;
  std::vector<data::SliceSample> picked;
  for (int row = 0; row < a.rows; ++row) {
    const auto& v = vols[row % vols.size()];
    auto slices = data::decompose_slices(v, ds.plane, data::Domain::source);
    // Spread rows that share a volume across its slices.
    const int uses = (a.rows + static_cast<int>(vols.size()) - 1) / static_cast<int>(vols.size());
    const int k = row / static_cast<int>(vols.size());
    const auto idx = static_cast<std::size_t>((k + 1) * slices.size() / (uses + 1));
    picked.push_back(slices[std::min(idx, slices.size() - 1)]);
  }
  const int h = picked.front().image.height, w = picked.front().image.width, pad = 2;
  raster::Gray canvas(a.rows * (h + pad) - pad, 3 * (w + pad) - pad, 0);
  json rows = json::array();
  for (int row = 0; row < a.rows; ++row) {
    const auto& s = picked[row];
    const auto xhat = eval::translate_slice(loaded.models, s.image);
    Image lab(h, w);
    for (std::size_t i = 0; i < lab.data.size(); ++i) lab.data[i] = (*s.label).data[i];
    raster::blit(canvas, raster::to_gray(s.image, kDisplayLo, kDisplayHi), row * (h + pad), 0);
    raster::blit(canvas, raster::to_gray(xhat, kDisplayLo, kDisplayHi), row * (h + pad), w + pad);
    raster::blit(canvas, raster::to_gray(lab, 0.0f, static_cast<float>(classes)), row * (h + pad), 2 * (w + pad));
    auto range = [](const Image& img) {
      const auto [lo, hi] = std::minmax_element(img.data.begin(), img.data.end());
      return json::array({*lo, *hi});
    };
    rows.push_back({{"volume", s.volume_id},
                    {"slice", s.slice_index},
                    {"source_range", range(s.image)},
                    {"translated_range", range(xhat)}});
  }
  const auto out = a.out_file.empty() ? run / "translate.pgm" : ctx.resolve(a.out_file);
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  raster::write_pgm(canvas, out);
  auto sidecar = out;
  sidecar.replace_extension(".json");
  write_json({{"panels", {"source", "translated", "label"}},
              {"rows", rows},
              {"grid", {a.rows, 3}},
              {"tile", {h, w}},
              {"display_range", {kDisplayLo, kDisplayHi}},
              {"label_range", {0, classes}},
              {"checkpoint", a.checkpoint}},
             sidecar);
  ctx.out << "wrote " << out.string() << " (" << a.rows << "x3 panels) and " << sidecar.string() << '\n';
  return 0;
}

struct PlotArgs {
  std::string run, out_dir;
};

int cmd_plot(const Context& ctx, const PlotArgs& a) {
  const auto run = ctx.resolve(a.run);
  const auto table = objectives::read_loss_csv(run / "losses.csv");
  if (table.steps.empty()) throw FormatError("empty loss log " + (run / "losses.csv").string());
  const auto out = a.out_dir.empty() ? run / "plots" : ctx.resolve(a.out_dir);
  fs::create_directories(out);
  int figures = 0;
  for (std::size_t c = 0; c < table.columns.size(); ++c) {
    std::vector<double> ys;
    for (const auto& row : table.rows)
      if (row[c]) ys.push_back(*row[c]);
    if (ys.empty()) continue;
    raster::write_pgm(raster::line_plot(ys), out / ("loss_" + table.columns[c] + ".pgm"));
    ++figures;
  }
  if (fs::exists(run / "metrics.csv")) {
    std::ifstream in(run / "metrics.csv");
    std::string line;
    std::getline(in, line);  // header
    std::vector<double> val, test;
    while (std::getline(in, line)) {
      std::stringstream ss(line);
      std::string epoch, v, t;
      std::getline(ss, epoch, ',');
      std::getline(ss, v, ',');
      std::getline(ss, t, ',');
      val.push_back(std::stod(v));
      test.push_back(std::stod(t));
    }
    if (!val.empty()) {
      raster::write_pgm(raster::bar_plot(val, 1.0), out / "metric_val_dice.pgm");
      raster::write_pgm(raster::bar_plot(test, 1.0), out / "metric_target_dice.pgm");
      figures += 2;
    }
  }
  ctx.out << "wrote " << figures << " figures to " << out.string() << '\n';
  return 0;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"cisfa: contrastive image synthesis and feature alignment for unsupervised domain adaptation"};
  app.require_subcommand(1);
  std::string workdir = ".";
  app.add_option("--workdir", workdir, "Base directory for every relative path");

  SynthArgs synth;
  auto* synth_cmd = app.add_subcommand("synth-data", "Generate the synthetic two-domain dataset");
  synth_cmd->add_option("--out", synth.out_dir, "Output dataset directory")->required();
  auto* synth_seed = synth_cmd->add_option("--seed", synth.seed, "Generator seed (default: $CISFA_SEED or 0)");
  synth_cmd->add_option("--classes", synth.spec.classes, "Foreground classes")->check(CLI::Range(1, 16));
  synth_cmd->add_option("--size", synth.spec.size, "Slice height and width")->check(CLI::Range(4, 1024));
  synth_cmd->add_option("--depth", synth.spec.depth, "Slices per volume")->check(CLI::Range(1, 1024));
  synth_cmd->add_option("--volumes", synth.spec.volumes_per_domain, "Volumes per domain")->check(CLI::Range(1, 1000));
  synth_cmd->add_option("--folds", synth.folds, "Cross-validation folds")->check(CLI::Range(2, 100));

  PrepareArgs prep;
  auto* prep_cmd = app.add_subcommand("prepare-data", "Crop, resample and normalize raw volumes");
  prep_cmd->add_option("--raw", prep.raw, "Raw dataset root with <domain>/<volume>/ containers")->required();
  prep_cmd->add_option("--out", prep.out_dir, "Output dataset directory")->required();
  prep_cmd->add_option("--source", prep.source, "Source domain directory name");
  prep_cmd->add_option("--target", prep.target, "Target domain directory name");
  prep_cmd->add_option("--size", prep.size, "Output slice size")->check(CLI::Range(4, 4096));
  prep_cmd->add_option("--classes", prep.classes, "Foreground classes")->check(CLI::Range(1, 64));
  prep_cmd->add_option("--plane", prep.plane, "Slicing plane")->check(CLI::IsMember({"axial", "coronal"}));
  prep_cmd->add_option("--folds", prep.folds, "Cross-validation folds")->check(CLI::Range(2, 100));
  auto* prep_seed = prep_cmd->add_option("--seed", prep.seed, "Fold split seed (default: $CISFA_SEED or 0)");

  TrainArgs tr;
  auto* train_cmd = app.add_subcommand("train", "Train one fold");
  train_cmd->add_option("--data", tr.data_dir, "Dataset directory")->required();
  train_cmd->add_option("--out", tr.out_dir, "Run directory")->required();
  train_cmd->add_option("--config", tr.config_file, "JSON file with TrainConfig keys");
  train_cmd->add_option("--scale", tr.scale, "Base configuration: desk or paper")->check(CLI::IsMember({"desk", "paper"}));
  train_cmd->add_flag("--resume", tr.resume, "Continue from <out>/ckpt_last");
  train_cmd->add_flag("--no-pcl", tr.no_pcl, "Disable the patch contrastive loss");
  train_cmd->add_flag("--no-gcl", tr.no_gcl, "Disable the global contrastive loss");
  train_cmd->add_flag("--unweighted-pcl", tr.unweighted_pcl, "Uniform patch weights");
  // Every TrainConfig field is settable by its JSON key.
  std::map<std::string, std::string> raw_overrides;
  std::vector<std::pair<std::string, CLI::Option*>> override_opts;
  const auto defaults = train::to_json(train::TrainConfig{});
  for (const auto& [key, value] : defaults.items()) {
    auto* opt = train_cmd->add_option(flag_name(key), raw_overrides[key], "TrainConfig." + key + " (default " + value.dump() + ")");
    override_opts.emplace_back(key, opt);
  }

  EvaluateArgs ev;
  auto* eval_cmd = app.add_subcommand("evaluate", "Score checkpoints on the held-out target fold");
  eval_cmd->add_option("--run", ev.runs, "Run directory (repeat for several folds)")->required();
  eval_cmd->add_option("--folds", ev.folds, "'all': --run holds fold0..foldK-1 subdirectories");
  eval_cmd->add_option("--checkpoint", ev.checkpoint, "best or last")->check(CLI::IsMember({"best", "last"}));
  eval_cmd->add_option("--out", ev.out_dir, "Report directory (default <run>/eval)");
  eval_cmd->add_option("--data", ev.data_dir, "Dataset directory (default: from the run manifest)");
  eval_cmd->add_flag("--oracle", ev.oracle, "Score ground truth against itself");

  TranslateArgs tl;
  auto* tl_cmd = app.add_subcommand("translate", "Write source / translated / label triptychs");
  tl_cmd->add_option("--run", tl.run, "Run directory")->required();
  tl_cmd->add_option("--checkpoint", tl.checkpoint, "best or last")->check(CLI::IsMember({"best", "last"}));
  tl_cmd->add_option("--rows", tl.rows, "Number of slices");
  tl_cmd->add_option("--out", tl.out_file, "Output .pgm (default <run>/translate.pgm)");

  PlotArgs pl;
  auto* plot_cmd = app.add_subcommand("plot", "Loss curves and metric bars from a run's logs");
  plot_cmd->add_option("--run", pl.run, "Run directory")->required();
  plot_cmd->add_option("--out", pl.out_dir, "Figure directory (default <run>/plots)");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    if (code == 0) return 0;
    const auto subs = app.get_subcommands();
    err << (subs.empty() ? app.help() : subs.front()->help());
    return 2;
  }

  Context ctx{workdir, out, err};
  try {
    synth.seed_given = synth_seed->count() > 0;
    prep.seed_given = prep_seed->count() > 0;
    for (const auto& [key, opt] : override_opts)
      if (opt->count() > 0) tr.overrides[key] = raw_overrides[key];
    if (synth_cmd->parsed()) return cmd_synth_data(ctx, synth);
    if (prep_cmd->parsed()) return cmd_prepare_data(ctx, prep);
    if (train_cmd->parsed()) return cmd_train(ctx, tr);
    if (eval_cmd->parsed()) return cmd_evaluate(ctx, ev);
    if (tl_cmd->parsed()) return cmd_translate(ctx, tl);
    if (plot_cmd->parsed()) return cmd_plot(ctx, pl);
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    if (e.exit_code() == 2) err << app.help();
    return e.exit_code();
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << '\n';
    return 3;
  } catch (const json::exception& e) {
    err << "error: " << e.what() << '\n';
    return 3;
  }
  return 2;
}

}  // namespace cisfa::cli
