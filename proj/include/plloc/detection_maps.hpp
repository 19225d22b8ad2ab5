#pragma once

#include <vector>

#include <Eigen/Core>

#include "plloc/geometry.hpp"

namespace plloc {

/// Output grids of a line-segment detection head at 1/stride resolution:
/// m_loc is the per-cell midpoint likelihood in [0,1], (off_x, off_y) the
/// sub-cell offset of the midpoint in [0,1)^2, and (dis_x, dis_y) the
/// midpoint-to-right-endpoint displacement in full-resolution pixels.
struct DetectionMaps {
  Eigen::MatrixXd m_loc;   // rows = image_height/stride, cols = image_width/stride
  Eigen::MatrixXd off_x, off_y;
  Eigen::MatrixXd dis_x, dis_y;
  int stride = 4;
  int image_width = 0;
  int image_height = 0;

  int grid_rows() const { return static_cast<int>(m_loc.rows()); }
  int grid_cols() const { return static_cast<int>(m_loc.cols()); }

  /// Throws InvalidMaps unless all grids share the shape implied by
  /// image size and stride.
  void validate() const;
};

/// Decode grid cells into segments: cells with likelihood >= conf_threshold
/// are kept (at most top_k, by descending likelihood), the midpoint is
/// stride*(col + off_x, row + off_y), the endpoints midpoint -/+ dis.
/// Segments shorter than min_length are dropped. Output is sorted by
/// confidence descending, ties in row-major cell order.
std::vector<Segment2d> decode_detection_maps(const DetectionMaps& maps, double conf_threshold,
                                             int top_k, double min_length = kMinSegmentLength);

/// Inverse of the decoder for test fixtures and synthetic data: writes each
/// segment into the grid cell containing its midpoint. At most one segment
/// per cell; later list entries overwrite earlier ones. Segments whose
/// midpoint falls outside the image are skipped.
DetectionMaps encode_to_maps(const std::vector<Segment2d>& segments, int image_width,
                             int image_height, int stride = 4);

}  // namespace plloc
