#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "cisfa/grid.hpp"

namespace cisfa::raster {

/// 8-bit grayscale raster written as binary PGM (P5).
using Gray = Grid2<unsigned char>;

void write_pgm(const Gray& img, const std::filesystem::path& path);
Gray read_pgm(const std::filesystem::path& path);

/// Linearly maps [lo, hi] to [0, 255], clipping outside values.
Gray to_gray(const Image& img, float lo, float hi);

/// Copies `tile` into `canvas` with its top-left corner at (y, x).
void blit(Gray& canvas, const Gray& tile, int y, int x);

/// Line chart of one series on a white canvas with a black frame.
Gray line_plot(const std::vector<double>& ys, int height = 240, int width = 400);

/// Vertical bars (values in [0, max_value]) with a frame.
Gray bar_plot(const std::vector<double>& values, double max_value, int height = 240, int width = 400);

}  // namespace cisfa::raster
