#include <fstream>

#include "cisfa/container.hpp"
#include "cisfa/errors.hpp"
#include "cisfa/trainer.hpp"

namespace cisfa::train {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Writer {
  std::ofstream out;
  std::uint64_t offset = 0;
  json entries = json::array();

  template <typename T>
  void add(const std::string& name, std::span<const T> values, std::vector<std::int64_t> shape, const char* dtype) {
    io::append_raw(out, values);
    entries.push_back({{"name", name}, {"shape", shape}, {"dtype", dtype}, {"offset", offset}});
    offset += values.size_bytes();
  }

  void add_tensor(const std::string& name, const torch::Tensor& t) {
    const auto c = t.detach().contiguous();
    const std::vector<std::int64_t> shape(c.sizes().begin(), c.sizes().end());
    if (c.scalar_type() == torch::kFloat32) {
      add<float>(name, {c.data_ptr<float>(), static_cast<std::size_t>(c.numel())}, shape, "float32");
    } else if (c.scalar_type() == torch::kInt64) {
      add<std::int64_t>(name, {c.data_ptr<std::int64_t>(), static_cast<std::size_t>(c.numel())}, shape, "int64");
    } else {
      throw FormatError("checkpoint: unsupported dtype for " + name);
    }
  }

  void add_optimizer(const std::string& prefix, const optim::Adam& opt) {
    const auto& states = opt.states();
    for (std::size_t i = 0; i < states.size(); ++i) {
      const auto n = static_cast<std::int64_t>(states[i].m.size());
      add<float>(prefix + "." + std::to_string(i) + ".m", states[i].m, {n}, "float32");
      add<float>(prefix + "." + std::to_string(i) + ".v", states[i].v, {n}, "float32");
    }
  }
};

json optimizer_meta(const optim::Adam& opt) {
  json steps = json::array();
  for (const auto& s : opt.states()) steps.push_back(s.step);
  return {{"steps", opt.steps()}, {"param_steps", steps}};
}

struct Reader {
  fs::path bin;
  std::map<std::string, json> entries;

  const json& entry(const std::string& name) const {
    const auto it = entries.find(name);
    if (it == entries.end()) throw FormatError("checkpoint missing tensor " + name);
    return it->second;
  }

  static std::size_t numel(const json& e) {
    std::size_t n = 1;
    for (const auto& d : e.at("shape")) n *= d.get<std::size_t>();
    return n;
  }

  void fill(const std::string& name, torch::Tensor& t) const {
    const auto& e = entry(name);
    const std::vector<std::int64_t> shape = e.at("shape");
    if (shape != std::vector<std::int64_t>(t.sizes().begin(), t.sizes().end()))
      throw ShapeMismatch("checkpoint tensor " + name + " has a different shape");
    const auto off = e.at("offset").get<std::size_t>();
    torch::NoGradGuard guard;
    const auto dtype = e.at("dtype").get<std::string>();
    if (dtype == "float32") {
      const auto v = io::read_raw<float>(bin, numel(e), off);
      t.copy_(torch::from_blob(const_cast<float*>(v.data()), t.sizes(), torch::kFloat32));
    } else if (dtype == "int64") {
      const auto v = io::read_raw<std::int64_t>(bin, numel(e), off);
      t.copy_(torch::from_blob(const_cast<std::int64_t*>(v.data()), t.sizes(), torch::kInt64));
    } else {
      throw FormatError("checkpoint: unknown dtype " + dtype);
    }
  }

  std::vector<float> floats(const std::string& name) const {
    const auto& e = entry(name);
    return io::read_raw<float>(bin, numel(e), e.at("offset").get<std::size_t>());
  }

  void fill_optimizer(const std::string& prefix, optim::Adam& opt, const json& meta) const {
    auto& states = opt.states();
    const auto& steps = meta.at("param_steps");
    if (steps.size() != states.size()) throw FormatError("checkpoint optimizer " + prefix + " size mismatch");
    for (std::size_t i = 0; i < states.size(); ++i) {
      states[i].m = floats(prefix + "." + std::to_string(i) + ".m");
      states[i].v = floats(prefix + "." + std::to_string(i) + ".v");
      states[i].step = steps[i].get<std::int64_t>();
    }
    opt.set_steps(meta.at("steps").get<std::int64_t>());
  }
};

}  // namespace

void save_checkpoint(const TrainState& state, const TrainConfig& cfg, const fs::path& dir) {
  const fs::path tmp = dir.string() + ".tmp";
  fs::remove_all(tmp);
  fs::create_directories(tmp);
  Writer w;
  w.out.open(tmp / "tensors.bin", std::ios::binary | std::ios::trunc);
  if (!w.out) throw FormatError("cannot write checkpoint in " + tmp.string());
  for (const auto& [name, t] : state.models.named_state()) w.add_tensor(name, t);
  w.add_optimizer("opt_g", state.opt_g);
  w.add_optimizer("opt_seg", state.opt_seg);
  w.add_optimizer("opt_dg", state.opt_dg);
  w.add_optimizer("opt_ds", state.opt_ds);
  w.out.close();
  if (!w.out) throw FormatError("short write in " + tmp.string());

  const json manifest = {
      {"code_version", code_version()},
      {"config", to_json(cfg)},
      {"step", state.step},
      {"epoch", state.epoch},
      {"best_val", state.best_val},
      {"versions", {state.versions.g, state.versions.seg, state.versions.dg, state.versions.ds}},
      {"rng", serialize_rng(state.rng)},
      {"optimizers",
       {{"opt_g", optimizer_meta(state.opt_g)},
        {"opt_seg", optimizer_meta(state.opt_seg)},
        {"opt_dg", optimizer_meta(state.opt_dg)},
        {"opt_ds", optimizer_meta(state.opt_ds)}}},
      {"tensors", w.entries},
  };
  {
    std::ofstream out(tmp / "manifest.json", std::ios::trunc);
    out << manifest.dump(1) << '\n';
    if (!out) throw FormatError("cannot write checkpoint manifest");
  }
  fs::remove_all(dir);
  fs::rename(tmp, dir);
}

std::pair<TrainConfig, TrainState> load_checkpoint(const fs::path& dir) {
  std::ifstream in(dir / "manifest.json");
  if (!in) throw FormatError("no checkpoint at " + dir.string());
  json manifest;
  try {
    manifest = json::parse(in);
  } catch (const json::exception& e) {
    throw FormatError("corrupt checkpoint manifest: " + std::string(e.what()));
  }
  auto cfg = config_from_json(manifest.at("config"));
  auto state = init_state(cfg);

  Reader r{dir / "tensors.bin", {}};
  for (const auto& e : manifest.at("tensors")) r.entries[e.at("name").get<std::string>()] = e;
  for (auto& [name, t] : state.models.named_state()) r.fill(name, t);
  const auto& opts = manifest.at("optimizers");
  r.fill_optimizer("opt_g", state.opt_g, opts.at("opt_g"));
  r.fill_optimizer("opt_seg", state.opt_seg, opts.at("opt_seg"));
  r.fill_optimizer("opt_dg", state.opt_dg, opts.at("opt_dg"));
  r.fill_optimizer("opt_ds", state.opt_ds, opts.at("opt_ds"));

  state.step = manifest.at("step").get<std::int64_t>();
  state.epoch = manifest.at("epoch").get<int>();
  state.best_val = manifest.at("best_val").get<double>();
  const auto& v = manifest.at("versions");
  state.versions = {v[0].get<std::int64_t>(), v[1].get<std::int64_t>(), v[2].get<std::int64_t>(),
                    v[3].get<std::int64_t>()};
  state.rng = deserialize_rng(manifest.at("rng").get<std::string>());
  return {cfg, std::move(state)};
}

}  // namespace cisfa::train
