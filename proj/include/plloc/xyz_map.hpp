#pragma once

#include <cmath>
#include <limits>
#include <vector>

#include <Eigen/Core>

#include "plloc/error.hpp"

namespace plloc {

/// Per-pixel world coordinates of a database image, row-major. Invalid
/// pixels are marked by non-finite values. Storage is float to match the
/// on-disk format exactly.
struct XyzMap {
  int width = 0;
  int height = 0;
  std::vector<Eigen::Vector3f> data;

  XyzMap() = default;
  XyzMap(int w, int h)
      : width(w),
        height(h),
        data(static_cast<std::size_t>(w) * h,
             Eigen::Vector3f::Constant(std::numeric_limits<float>::quiet_NaN())) {
    if (w <= 0 || h <= 0) throw InvalidInput("XyzMap dimensions must be positive");
  }

  bool in_bounds(int x, int y) const { return x >= 0 && x < width && y >= 0 && y < height; }

  const Eigen::Vector3f& at(int x, int y) const {
    return data[static_cast<std::size_t>(y) * width + x];
  }
  Eigen::Vector3f& at(int x, int y) { return data[static_cast<std::size_t>(y) * width + x]; }

  bool valid(int x, int y) const { return in_bounds(x, y) && at(x, y).allFinite(); }
};

}  // namespace plloc
