#include "cisfa/raster.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "cisfa/errors.hpp"

namespace cisfa::raster {

void write_pgm(const Gray& img, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot write " + path.string());
  out << "P5\n" << img.width << ' ' << img.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(img.data.data()), static_cast<std::streamsize>(img.data.size()));
}

Gray read_pgm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::string magic;
  int w = 0, h = 0, maxv = 0;
  in >> magic >> w >> h >> maxv;
  if (!in || magic != "P5" || maxv != 255 || w <= 0 || h <= 0) throw FormatError(path.string() + " is not an 8-bit PGM");
  in.get();
  Gray img(h, w);
  in.read(reinterpret_cast<char*>(img.data.data()), static_cast<std::streamsize>(img.data.size()));
  if (!in) throw FormatError(path.string() + " is truncated");
  return img;
}

Gray to_gray(const Image& img, float lo, float hi) {
  Gray out(img.height, img.width);
  const float range = hi > lo ? hi - lo : 1.0f;
  for (std::size_t i = 0; i < img.data.size(); ++i) {
    const float t = std::clamp((img.data[i] - lo) / range, 0.0f, 1.0f);
    out.data[i] = static_cast<unsigned char>(std::lround(255.0f * t));
  }
  return out;
}

void blit(Gray& canvas, const Gray& tile, int y, int x) {
  for (int r = 0; r < tile.height; ++r)
    for (int c = 0; c < tile.width; ++c) {
      const int yy = y + r, xx = x + c;
      if (yy >= 0 && xx >= 0 && yy < canvas.height && xx < canvas.width) canvas(yy, xx) = tile(r, c);
    }
}

namespace {

constexpr int kMargin = 12;

void frame(Gray& g) {
  for (int x = kMargin; x < g.width - kMargin; ++x) {
    g(kMargin, x) = 0;
    g(g.height - kMargin - 1, x) = 0;
  }
  for (int y = kMargin; y < g.height - kMargin; ++y) {
    g(y, kMargin) = 0;
    g(y, g.width - kMargin - 1) = 0;
  }
}

void line(Gray& g, int x0, int y0, int x1, int y1) {
  const int dx = std::abs(x1 - x0), dy = -std::abs(y1 - y0);
  const int sx = x0 < x1 ? 1 : -1, sy = y0 < y1 ? 1 : -1;
  int err = dx + dy;
  for (;;) {
    if (x0 >= 0 && y0 >= 0 && x0 < g.width && y0 < g.height) g(y0, x0) = 0;
    if (x0 == x1 && y0 == y1) break;
    const int e2 = 2 * err;
    if (e2 >= dy) {
      err += dy;
      x0 += sx;
    }
    if (e2 <= dx) {
      err += dx;
      y0 += sy;
    }
  }
}

}  // namespace

Gray line_plot(const std::vector<double>& ys, int height, int width) {
  Gray g(height, width, 255);
  frame(g);
  std::vector<double> finite;
  for (double v : ys)
    if (std::isfinite(v)) finite.push_back(v);
  if (finite.empty()) return g;
  auto [lo_it, hi_it] = std::minmax_element(finite.begin(), finite.end());
  double lo = *lo_it, hi = *hi_it;
  if (hi - lo < 1e-12) {
    lo -= 0.5;
    hi += 0.5;
  }
  const int x_span = width - 2 * kMargin - 3, y_span = height - 2 * kMargin - 3;
  auto px = [&](std::size_t i) {
    return kMargin + 1 + (ys.size() > 1 ? static_cast<int>(std::lround(x_span * double(i) / (ys.size() - 1))) : 0);
  };
  auto py = [&](double v) { return kMargin + 1 + static_cast<int>(std::lround(y_span * (hi - v) / (hi - lo))); };
  int prev_x = -1, prev_y = -1;
  for (std::size_t i = 0; i < ys.size(); ++i) {
    if (!std::isfinite(ys[i])) continue;
    const int x = px(i), y = py(ys[i]);
    if (prev_x >= 0)
      line(g, prev_x, prev_y, x, y);
    else
      g(y, x) = 0;
    prev_x = x;
    prev_y = y;
  }
  return g;
}

Gray bar_plot(const std::vector<double>& values, double max_value, int height, int width) {
  Gray g(height, width, 255);
  frame(g);
  if (values.empty() || !(max_value > 0)) return g;
  const int inner_w = width - 2 * kMargin - 2, inner_h = height - 2 * kMargin - 2;
  const int slot = std::max(1, inner_w / static_cast<int>(values.size()));
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double t = std::clamp(values[i] / max_value, 0.0, 1.0);
    const int bar_h = static_cast<int>(std::lround(inner_h * t));
    const int x0 = kMargin + 1 + static_cast<int>(i) * slot + slot / 6;
    const int x1 = kMargin + 1 + static_cast<int>(i + 1) * slot - slot / 6;
    for (int y = height - kMargin - 1 - bar_h; y < height - kMargin - 1; ++y)
      for (int x = x0; x < x1 && x < width; ++x) g(y, x) = 96;
  }
  return g;
}

}  // namespace cisfa::raster
