#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace cisfa {

/// Dense row-major 2D array.
template <typename T>
struct Grid2 {
  int height = 0;
  int width = 0;
  std::vector<T> data;

  Grid2() = default;
  Grid2(int h, int w, T fill = T{}) : height(h), width(w), data(static_cast<std::size_t>(h) * w, fill) {}

  T& operator()(int y, int x) { return data[static_cast<std::size_t>(y) * width + x]; }
  const T& operator()(int y, int x) const { return data[static_cast<std::size_t>(y) * width + x]; }
  std::size_t size() const { return data.size(); }
  bool empty() const { return data.empty(); }
  bool operator==(const Grid2&) const = default;
};

/// Dense row-major 3D array indexed (z, y, x) for a D×H×W shape.
template <typename T>
struct Grid3 {
  int depth = 0;
  int height = 0;
  int width = 0;
  std::vector<T> data;

  Grid3() = default;
  Grid3(int d, int h, int w, T fill = T{})
      : depth(d), height(h), width(w), data(static_cast<std::size_t>(d) * h * w, fill) {}

  std::size_t index(int z, int y, int x) const {
    return (static_cast<std::size_t>(z) * height + y) * width + x;
  }
  T& operator()(int z, int y, int x) { return data[index(z, y, x)]; }
  const T& operator()(int z, int y, int x) const { return data[index(z, y, x)]; }
  std::array<int, 3> shape() const { return {depth, height, width}; }
  std::size_t size() const { return data.size(); }
  bool empty() const { return data.empty(); }
  bool operator==(const Grid3&) const = default;
};

using Image = Grid2<float>;
using LabelMap = Grid2<std::int16_t>;
using Mask3 = Grid3<std::uint8_t>;

}  // namespace cisfa
