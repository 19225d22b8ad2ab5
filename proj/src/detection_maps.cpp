#include "plloc/detection_maps.hpp"

#include <algorithm>
#include <cmath>

#include "plloc/error.hpp"

namespace plloc {

void DetectionMaps::validate() const {
  if (stride <= 0) throw InvalidMaps("stride must be positive");
  if (image_width <= 0 || image_height <= 0) throw InvalidMaps("image size must be positive");
  if (image_width % stride != 0 || image_height % stride != 0)
    throw InvalidMaps("image size must be divisible by the stride");
  const auto rows = image_height / stride;
  const auto cols = image_width / stride;
  for (const Eigen::MatrixXd* g : {&m_loc, &off_x, &off_y, &dis_x, &dis_y}) {
    if (g->rows() != rows || g->cols() != cols) throw InvalidMaps("grid shape mismatch");
  }
  if (off_x.minCoeff() < 0.0 || off_x.maxCoeff() >= 1.0 || off_y.minCoeff() < 0.0 ||
      off_y.maxCoeff() >= 1.0)
    throw InvalidMaps("midpoint offsets must lie in [0, 1)");
}

std::vector<Segment2d> decode_detection_maps(const DetectionMaps& maps, double conf_threshold,
                                             int top_k, double min_length) {
  maps.validate();

  struct Cell {
    double conf;
    int row, col;
  };
  std::vector<Cell> cells;
  for (int r = 0; r < maps.grid_rows(); ++r)
    for (int c = 0; c < maps.grid_cols(); ++c)
      if (maps.m_loc(r, c) >= conf_threshold) cells.push_back({maps.m_loc(r, c), r, c});

  std::stable_sort(cells.begin(), cells.end(),
                   [](const Cell& a, const Cell& b) { return a.conf > b.conf; });
  if (top_k >= 0 && static_cast<int>(cells.size()) > top_k) cells.resize(top_k);

  std::vector<Segment2d> out;
  out.reserve(cells.size());
  const double stride = maps.stride;
  for (const Cell& cell : cells) {
    const Eigen::Vector2d mid(stride * (cell.col + maps.off_x(cell.row, cell.col)),
                              stride * (cell.row + maps.off_y(cell.row, cell.col)));
    const Eigen::Vector2d dis(maps.dis_x(cell.row, cell.col), maps.dis_y(cell.row, cell.col));
    Segment2d seg(mid - dis, mid + dis, cell.conf);
    if (seg.length() < min_length) continue;
    out.push_back(seg);
  }
  return out;
}

DetectionMaps encode_to_maps(const std::vector<Segment2d>& segments, int image_width,
                             int image_height, int stride) {
  DetectionMaps maps;
  maps.stride = stride;
  maps.image_width = image_width;
  maps.image_height = image_height;
  const int rows = image_height / stride;
  const int cols = image_width / stride;
  maps.m_loc = Eigen::MatrixXd::Zero(rows, cols);
  maps.off_x = Eigen::MatrixXd::Zero(rows, cols);
  maps.off_y = Eigen::MatrixXd::Zero(rows, cols);
  maps.dis_x = Eigen::MatrixXd::Zero(rows, cols);
  maps.dis_y = Eigen::MatrixXd::Zero(rows, cols);
  maps.validate();

  for (const Segment2d& seg : segments) {
    const Eigen::Vector2d mid = seg.midpoint();
    const int c = static_cast<int>(std::floor(mid.x() / stride));
    const int r = static_cast<int>(std::floor(mid.y() / stride));
    if (r < 0 || r >= rows || c < 0 || c >= cols) continue;
    maps.m_loc(r, c) = seg.confidence;
    maps.off_x(r, c) = mid.x() / stride - c;
    maps.off_y(r, c) = mid.y() / stride - r;
    const Eigen::Vector2d dis = seg.p_right - mid;
    maps.dis_x(r, c) = dis.x();
    maps.dis_y(r, c) = dis.y();
  }
  return maps;
}

}  // namespace plloc
