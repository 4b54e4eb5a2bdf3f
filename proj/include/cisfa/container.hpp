#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <type_traits>
#include <vector>

#include "cisfa/errors.hpp"

namespace cisfa::io {

static_assert(std::endian::native == std::endian::little || std::endian::native == std::endian::big);

template <typename T>
T to_little(T v) {
  if constexpr (std::endian::native == std::endian::big && sizeof(T) > 1) {
    unsigned char b[sizeof(T)];
    std::memcpy(b, &v, sizeof(T));
    for (std::size_t i = 0; i < sizeof(T) / 2; ++i) std::swap(b[i], b[sizeof(T) - 1 - i]);
    std::memcpy(&v, b, sizeof(T));
  }
  return v;
}

/// Appends `values` to `out` as little-endian bytes.
template <typename T>
void append_raw(std::ofstream& out, std::span<const T> values) {
  static_assert(std::is_arithmetic_v<T>);
  if constexpr (std::endian::native == std::endian::little) {
    out.write(reinterpret_cast<const char*>(values.data()), static_cast<std::streamsize>(values.size_bytes()));
  } else {
    for (T v : values) {
      T le = to_little(v);
      out.write(reinterpret_cast<const char*>(&le), sizeof(T));
    }
  }
}

template <typename T>
void write_raw(const std::filesystem::path& path, std::span<const T> values) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot write " + path.string());
  append_raw(out, values);
  if (!out) throw FormatError("short write to " + path.string());
}

template <typename T>
std::vector<T> read_raw(const std::filesystem::path& path, std::size_t count, std::size_t offset_bytes = 0) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  in.seekg(static_cast<std::streamoff>(offset_bytes));
  std::vector<T> values(count);
  in.read(reinterpret_cast<char*>(values.data()), static_cast<std::streamsize>(count * sizeof(T)));
  if (in.gcount() != static_cast<std::streamsize>(count * sizeof(T)))
    throw FormatError(path.string() + ": expected " + std::to_string(count * sizeof(T)) + " bytes");
  for (auto& v : values) v = to_little(v);
  return values;
}

/// FNV-1a 64-bit over a file's bytes; used for dataset fingerprints in manifests.
std::uint64_t fnv1a_file(const std::filesystem::path& path);
std::uint64_t fnv1a(std::span<const unsigned char> bytes, std::uint64_t h = 0xcbf29ce484222325ULL);

/// Hex fingerprint of every regular file under `root` (sorted relative paths and contents).
std::string hash_tree(const std::filesystem::path& root);

}  // namespace cisfa::io
