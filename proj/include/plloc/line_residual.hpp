#pragma once

#include <algorithm>
#include <cmath>

#include "plloc/geometry.hpp"

namespace plloc {

/// Scale factor applied to the sine-of-angle term so that it is commensurate
/// with the midpoint distance (pixels). By default it is the length of the
/// reprojected segment; a fixed constant can be configured instead.
struct AngleScale {
  enum class Mode { kReprojectedLength, kConstant };
  Mode mode = Mode::kReprojectedLength;
  double constant = 1.0;

  double value(double reprojected_length) const {
    return mode == Mode::kReprojectedLength ? reprojected_length : constant;
  }
};

/// Closed 1D interval used for overlap computation along a line.
struct Interval1D {
  double lo = 0.0;
  double hi = 0.0;

  static Interval1D from_unordered(double a, double b) {
    return Interval1D{std::min(a, b), std::max(a, b)};
  }
  double length() const { return hi - lo; }
};

/// Interval IoU: intersection length over union length, 0 when disjoint.
/// Throws DegenerateSegment when either interval has zero length.
inline double overlap_ratio(const Interval1D& a, const Interval1D& b) {
  if (a.length() <= 0.0 || b.length() <= 0.0)
    throw DegenerateSegment("overlap of a zero-length interval");
  const double inter = std::min(a.hi, b.hi) - std::max(a.lo, b.lo);
  if (inter <= 0.0) return 0.0;
  const double uni = std::max(a.hi, b.hi) - std::min(a.lo, b.lo);
  return inter / uni;
}

struct LineReprojResidual {
  double midpoint_distance = 0.0;  // pixels
  double angle_term = 0.0;         // scale * sine of the angle, pixels
  double total = 0.0;              // midpoint_distance + angle_term
};

/// Residual between an observed 2D segment and the projection of a 3D
/// segment: midpoint distance plus the scaled sine of the angle between the
/// two carrier lines. Throws BehindCamera when the 3D segment does not
/// project. The result does not depend on the stored endpoint order of
/// either segment.
inline LineReprojResidual line_reproj_residual(const Segment2d& seg2d, const Segment3d& seg3d,
                                               const CameraIntrinsicsd& intr, const PoseSE3d& pose,
                                               const AngleScale& scale = {}) {
  const Segment2d proj = project_segment(intr, pose, seg3d);
  LineReprojResidual r;
  r.midpoint_distance = (seg2d.midpoint() - proj.midpoint()).norm();

  const HomogeneousLine2d l_obs = line_of_segment(seg2d);
  const HomogeneousLine2d l_proj = line_of_segment(proj);
  // Lines are stored with unit normals, so the cross term is the sine of the
  // angle between them.
  const double sine = std::abs(l_obs.a * l_proj.b - l_obs.b * l_proj.a);
  r.angle_term = scale.value(proj.length()) * sine;
  r.total = r.midpoint_distance + r.angle_term;
  return r;
}

}  // namespace plloc
