#include "cisfa/container.hpp"

#include <algorithm>
#include <cstdio>
#include <json.hpp>

#include "cisfa/data.hpp"

namespace cisfa::io {

std::uint64_t fnv1a(std::span<const unsigned char> bytes, std::uint64_t h) {
  for (unsigned char b : bytes) {
    h ^= b;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t fnv1a_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  std::vector<unsigned char> buf(1 << 16);
  std::uint64_t h = 0xcbf29ce484222325ULL;
  while (in) {
    in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    h = fnv1a(std::span(buf.data(), static_cast<std::size_t>(in.gcount())), h);
  }
  return h;
}

std::string hash_tree(const std::filesystem::path& root) {
  std::vector<std::filesystem::path> files;
  for (const auto& e : std::filesystem::recursive_directory_iterator(root))
    if (e.is_regular_file()) files.push_back(std::filesystem::relative(e.path(), root));
  std::sort(files.begin(), files.end());
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& f : files) {
    const auto name = f.generic_string();
    h = fnv1a(std::span(reinterpret_cast<const unsigned char*>(name.data()), name.size()), h);
    const std::uint64_t fh = fnv1a_file(root / f);
    h = fnv1a(std::span(reinterpret_cast<const unsigned char*>(&fh), sizeof fh), h);
  }
  char hex[17];
  std::snprintf(hex, sizeof hex, "%016llx", static_cast<unsigned long long>(h));
  return hex;
}

}  // namespace cisfa::io

namespace cisfa::data {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

void write_json(const json& j, const fs::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw FormatError("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

}  // namespace

void write_volume(const Volume& v, const fs::path& dir, const std::optional<Roi>& roi) {
  fs::create_directories(dir);
  io::write_raw<float>(dir / "image.bin", v.voxels.data);
  json meta;
  meta["shape"] = {v.voxels.depth, v.voxels.height, v.voxels.width};
  meta["dtype"] = "float32";
  meta["spacing_mm"] = {v.spacing[0], v.spacing[1], v.spacing[2]};
  meta["modality"] = to_string(v.modality);
  meta["id"] = v.id;
  if (v.labels) {
    io::write_raw<std::int16_t>(dir / "label.bin", v.labels->data);
    meta["label_dtype"] = "int16";
  } else if (fs::exists(dir / "label.bin")) {
    fs::remove(dir / "label.bin");
  }
  if (roi) meta["roi"] = {roi->z0, roi->z1, roi->y0, roi->y1, roi->x0, roi->x1};
  write_json(meta, dir / "meta.json");
}

std::optional<Roi> read_roi(const fs::path& dir) {
  const json meta = read_json(dir / "meta.json");
  if (!meta.contains("roi")) return std::nullopt;
  const auto r = meta.at("roi").get<std::vector<int>>();
  if (r.size() != 6) throw FormatError(dir.string() + ": roi must have 6 entries");
  return Roi{r[0], r[1], r[2], r[3], r[4], r[5]};
}

Volume read_volume(const fs::path& dir) {
  const json meta = read_json(dir / "meta.json");
  try {
    const auto shape = meta.at("shape").get<std::vector<int>>();
    if (shape.size() != 3 || shape[0] <= 0 || shape[1] <= 0 || shape[2] <= 0)
      throw FormatError(dir.string() + ": shape must be [D,H,W] with positive entries");
    if (meta.value("dtype", "float32") != "float32")
      throw FormatError(dir.string() + ": only float32 images are supported");
    Volume v;
    v.id = meta.value("id", dir.filename().string());
    v.modality = modality_from_string(meta.value("modality", "source"));
    const auto sp = meta.at("spacing_mm").get<std::vector<double>>();
    if (sp.size() != 3) throw FormatError(dir.string() + ": spacing_mm must have 3 entries");
    v.spacing = {sp[0], sp[1], sp[2]};
    v.voxels = Grid3<float>(shape[0], shape[1], shape[2]);
    v.voxels.data = io::read_raw<float>(dir / "image.bin", v.voxels.size());
    if (fs::exists(dir / "label.bin")) {
      Grid3<std::int16_t> lab(shape[0], shape[1], shape[2]);
      lab.data = io::read_raw<std::int16_t>(dir / "label.bin", lab.size());
      v.labels = std::move(lab);
    }
    return v;
  } catch (const json::exception& e) {
    throw FormatError(dir.string() + "/meta.json: " + e.what());
  }
}

void write_domain(const std::vector<Volume>& volumes, const fs::path& root, const std::string& domain_name) {
  for (const auto& v : volumes) write_volume(v, root / domain_name / v.id);
}

std::vector<Volume> read_domain(const fs::path& root, const std::string& domain_name) {
  const fs::path dir = root / domain_name;
  if (!fs::is_directory(dir)) throw FormatError("missing domain directory " + dir.string());
  std::vector<fs::path> entries;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_directory()) entries.push_back(e.path());
  std::sort(entries.begin(), entries.end());
  std::vector<Volume> out;
  for (const auto& p : entries) out.push_back(read_volume(p));
  if (out.empty()) throw FormatError("no volumes in " + dir.string());
  return out;
}

void write_fold_file(const FoldFile& f, const fs::path& path) {
  json j;
  j["seed"] = f.seed;
  j["k"] = f.k;
  for (const auto& [domain, fa] : f.domains) j["folds"][domain] = fa.mapping;
  write_json(j, path);
}

FoldFile read_fold_file(const fs::path& path) {
  const json j = read_json(path);
  try {
    FoldFile f;
    f.seed = j.at("seed").get<std::uint64_t>();
    f.k = j.at("k").get<int>();
    for (const auto& [domain, m] : j.at("folds").items()) {
      FoldAssignment fa;
      fa.k = f.k;
      fa.seed = f.seed;
      fa.mapping = m.get<std::map<std::string, int>>();
      f.domains[domain] = std::move(fa);
    }
    return f;
  } catch (const json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

}  // namespace cisfa::data
