#pragma once

#include "xview/error.hpp"
#include "xview/world/types.hpp"

#include <cmath>
#include <optional>

namespace xview::training {

/// Pixel coordinate with 1-indexed rows and columns.
struct PixelPoint {
  double row = 0.0;
  double col = 0.0;
  friend bool operator==(const PixelPoint&, const PixelPoint&) = default;
};

/// Mass-weighted mean of the 1-indexed coordinates of set pixels; empty
/// masks have no centroid.
inline std::optional<PixelPoint> centroid(const world::Mask& mask) {
  long long n = 0;
  long long sum_r = 0;
  long long sum_c = 0;
  for (int r = 0; r < mask.height; ++r) {
    for (int c = 0; c < mask.width; ++c) {
      if (mask.at(r, c) == 0) continue;
      ++n;
      sum_r += r + 1;
      sum_c += c + 1;
    }
  }
  if (n == 0) return std::nullopt;
  return PixelPoint{static_cast<double>(sum_r) / static_cast<double>(n),
                    static_cast<double>(sum_c) / static_cast<double>(n)};
}

/// Row-major index of the patch cell containing `p` on a height x width
/// image cut into square patches.
inline int centroid_to_cell(const PixelPoint& p, int patch_size, int height, int width) {
  if (!(p.row >= 1.0 && p.col >= 1.0 && p.row <= height && p.col <= width)) {
    throw RangeError("centroid outside image bounds");
  }
  const int cells_per_row = width / patch_size;
  const int r = static_cast<int>(std::floor((p.row - 1.0) / patch_size));
  const int c = static_cast<int>(std::floor((p.col - 1.0) / patch_size));
  return r * cells_per_row + c;
}

/// Centre pixel (1-indexed) of a patch cell.
inline PixelPoint cell_center(int cell, int patch_size, int width) {
  const int cells_per_row = width / patch_size;
  const int r = cell / cells_per_row;
  const int c = cell % cells_per_row;
  return {r * patch_size + (patch_size + 1) / 2.0, c * patch_size + (patch_size + 1) / 2.0};
}

}  // namespace xview::training
