#pragma once

#include <cmath>
#include <utility>

#include <Eigen/Core>
#include <Eigen/Geometry>

#include "plloc/error.hpp"

namespace plloc {

template <typename T>
using Vector2 = Eigen::Matrix<T, 2, 1>;
template <typename T>
using Vector3 = Eigen::Matrix<T, 3, 1>;
template <typename T>
using Matrix3 = Eigen::Matrix<T, 3, 3>;

/// Minimum 2D segment length (pixels) admitted to representation conversion
/// and matching. Shorter segments carry no usable direction information.
inline constexpr double kMinSegmentLength = 4.0;

/// Points with camera-frame depth at or below this are behind the camera.
inline constexpr double kDepthEpsilon = 1e-9;

/// Two normalized 2D lines are parallel when the third coordinate of the
/// cross product of their coefficient vectors is at most this.
inline constexpr double kParallelTolerance = 1e-12;

// ---------------------------------------------------------------------------
// Domain types
// ---------------------------------------------------------------------------

/// Pinhole calibration. No distortion model.
template <typename T>
struct CameraIntrinsics {
  T fx = T(1);
  T fy = T(1);
  T cx = T(0);
  T cy = T(0);

  Matrix3<T> matrix() const {
    Matrix3<T> k;
    k << fx, T(0), cx, T(0), fy, cy, T(0), T(0), T(1);
    return k;
  }

  Matrix3<T> inverse_matrix() const {
    Matrix3<T> k;
    k << T(1) / fx, T(0), -cx / fx, T(0), T(1) / fy, -cy / fy, T(0), T(0), T(1);
    return k;
  }
};

/// Rigid transform mapping world coordinates to camera coordinates:
/// X_cam = rotation * X_world + translation. Translation is in meters.
template <typename T>
struct PoseSE3 {
  Matrix3<T> rotation = Matrix3<T>::Identity();
  Vector3<T> translation = Vector3<T>::Zero();

  static PoseSE3 Identity() { return PoseSE3{}; }

  Vector3<T> apply(const Vector3<T>& p_world) const { return rotation * p_world + translation; }

  /// Camera center expressed in world coordinates.
  Vector3<T> center() const { return -rotation.transpose() * translation; }

  PoseSE3 inverse() const {
    PoseSE3 inv;
    inv.rotation = rotation.transpose();
    inv.translation = -(rotation.transpose() * translation);
    return inv;
  }

  /// Composition: (a * b).apply(x) == a.apply(b.apply(x)).
  PoseSE3 operator*(const PoseSE3& rhs) const {
    PoseSE3 out;
    out.rotation = rotation * rhs.rotation;
    out.translation = rotation * rhs.translation + translation;
    return out;
  }

  bool is_valid(T tol = T(1e-9)) const {
    const Matrix3<T> rtr = rotation.transpose() * rotation;
    return (rtr - Matrix3<T>::Identity()).template lpNorm<Eigen::Infinity>() <= tol &&
           std::abs(rotation.determinant() - T(1)) <= tol && translation.allFinite();
  }
};

/// Finite 2D segment with canonical endpoint order: smaller x first, ties
/// broken by smaller y. Equality of segments is therefore well-defined.
template <typename T>
struct Segment2 {
  Vector2<T> p_left = Vector2<T>::Zero();
  Vector2<T> p_right = Vector2<T>::Zero();
  T confidence = T(1);

  Segment2() = default;

  Segment2(const Vector2<T>& a, const Vector2<T>& b, T conf = T(1)) : confidence(conf) {
    const bool a_first = a.x() < b.x() || (a.x() == b.x() && a.y() <= b.y());
    p_left = a_first ? a : b;
    p_right = a_first ? b : a;
  }

  T length() const { return (p_right - p_left).norm(); }
  Vector2<T> midpoint() const { return (p_left + p_right) / T(2); }
  Vector2<T> direction() const { return p_right - p_left; }
};

/// Finite 3D segment in world coordinates (meters), with provenance of the
/// database observation it was lifted from (-1 when not applicable).
template <typename T>
struct Segment3 {
  Vector3<T> p_left = Vector3<T>::Zero();
  Vector3<T> p_right = Vector3<T>::Zero();
  int source_image = -1;
  int source_segment = -1;

  T length() const { return (p_right - p_left).norm(); }
  Vector3<T> midpoint() const { return (p_left + p_right) / T(2); }
};

/// 2D line a*x + b*y + c = 0 stored with a^2 + b^2 = 1, so that
/// signed_distance() is an exact point-to-line distance.
template <typename T>
struct HomogeneousLine2 {
  T a = T(1);
  T b = T(0);
  T c = T(0);

  static HomogeneousLine2 from_coeffs(const Vector3<T>& v) {
    if (v.norm() == T(0)) throw DegenerateLine("line coefficients are the zero vector");
    const T n = std::hypot(v.x(), v.y());
    if (n <= T(1e-12) * v.norm()) throw DegenerateLine("line normal is numerically zero");
    return HomogeneousLine2{v.x() / n, v.y() / n, v.z() / n};
  }

  Vector3<T> coeffs() const { return Vector3<T>(a, b, c); }
  Vector2<T> normal() const { return Vector2<T>(a, b); }
  Vector2<T> direction() const { return Vector2<T>(-b, a); }
  T signed_distance(const Vector2<T>& p) const { return a * p.x() + b * p.y() + c; }
};

template <typename T>
struct PointCorrespondence {
  Vector2<T> p2d = Vector2<T>::Zero();  // pixels
  Vector3<T> p3d = Vector3<T>::Zero();  // meters, world frame
};

template <typename T>
struct LineCorrespondence {
  Segment2<T> seg2d;
  Segment3<T> seg3d;
};

using CameraIntrinsicsd = CameraIntrinsics<double>;
using PoseSE3d = PoseSE3<double>;
using Segment2d = Segment2<double>;
using Segment3d = Segment3<double>;
using HomogeneousLine2d = HomogeneousLine2<double>;
using PointCorrespondenced = PointCorrespondence<double>;
using LineCorrespondenced = LineCorrespondence<double>;

// ---------------------------------------------------------------------------
// Rotation helpers
// ---------------------------------------------------------------------------

template <typename T>
Matrix3<T> skew(const Vector3<T>& v) {
  Matrix3<T> m;
  m << T(0), -v.z(), v.y(), v.z(), T(0), -v.x(), -v.y(), v.x(), T(0);
  return m;
}

/// Rodrigues formula; stable for small angles.
template <typename T>
Matrix3<T> rotation_from_axis_angle(const Vector3<T>& omega) {
  const T theta = omega.norm();
  if (theta < T(1e-12)) {
    return Matrix3<T>::Identity() + skew(omega);
  }
  const Vector3<T> axis = omega / theta;
  return Eigen::AngleAxis<T>(theta, axis).toRotationMatrix();
}

/// Angle (radians) of the rotation taking one frame to the other.
template <typename T>
T rotation_angle(const Matrix3<T>& r) {
  const T arg = std::clamp((r.trace() - T(1)) / T(2), T(-1), T(1));
  return std::acos(arg);
}

// ---------------------------------------------------------------------------
// Projection
// ---------------------------------------------------------------------------

/// Pinhole projection of a world point. Throws BehindCamera when the
/// camera-frame depth is at or below kDepthEpsilon.
template <typename T>
Vector2<T> project_point(const CameraIntrinsics<T>& intr, const PoseSE3<T>& pose,
                         const Vector3<T>& p_world) {
  const Vector3<T> pc = pose.apply(p_world);
  if (pc.z() <= T(kDepthEpsilon)) throw BehindCamera("point is behind the camera");
  return Vector2<T>(intr.fx * pc.x() / pc.z() + intr.cx, intr.fy * pc.y() / pc.z() + intr.cy);
}

/// Endpoint-wise projection of a 3D segment; result is canonically ordered
/// with confidence 1. No clipping against the image border is performed.
template <typename T>
Segment2<T> project_segment(const CameraIntrinsics<T>& intr, const PoseSE3<T>& pose,
                            const Segment3<T>& seg) {
  return Segment2<T>(project_point(intr, pose, seg.p_left), project_point(intr, pose, seg.p_right),
                     T(1));
}

// ---------------------------------------------------------------------------
// Homogeneous 2D line algebra
// ---------------------------------------------------------------------------

/// Line through two homogeneous 2D points (cross product, then normalized).
template <typename T>
HomogeneousLine2<T> line_through_points(const Vector3<T>& p, const Vector3<T>& q) {
  return HomogeneousLine2<T>::from_coeffs(p.cross(q));
}

template <typename T>
HomogeneousLine2<T> line_through_points(const Vector2<T>& p, const Vector2<T>& q) {
  return line_through_points(Vector3<T>(p.x(), p.y(), T(1)), Vector3<T>(q.x(), q.y(), T(1)));
}

template <typename T>
HomogeneousLine2<T> line_of_segment(const Segment2<T>& seg) {
  return line_through_points(seg.p_left, seg.p_right);
}

/// Intersection of two lines as a homogeneous point. Throws ParallelLines
/// when the third coordinate is at most kParallelTolerance (the lines are
/// stored normalized, so that coordinate is the sine of their angle).
template <typename T>
Vector3<T> intersect_lines(const HomogeneousLine2<T>& l1, const HomogeneousLine2<T>& l2) {
  const Vector3<T> p = l1.coeffs().cross(l2.coeffs());
  if (std::abs(p.z()) <= T(kParallelTolerance)) throw ParallelLines("lines are parallel");
  return p;
}

// ---------------------------------------------------------------------------
// Two-view geometry
// ---------------------------------------------------------------------------

/// Fundamental matrix mapping query-image points to epipolar lines in the
/// database image: l_db = F * p_query. Normalized to unit Frobenius norm.
template <typename T>
Matrix3<T> fundamental_matrix(const CameraIntrinsics<T>& intr_q, const PoseSE3<T>& pose_q,
                              const CameraIntrinsics<T>& intr_d, const PoseSE3<T>& pose_d) {
  if ((pose_q.center() - pose_d.center()).norm() <= T(1e-9))
    throw DegenerateBaseline("camera centers coincide");
  // Relative pose taking query camera coordinates to database camera
  // coordinates.
  const Matrix3<T> r_rel = pose_d.rotation * pose_q.rotation.transpose();
  const Vector3<T> t_rel = pose_d.translation - r_rel * pose_q.translation;
  Matrix3<T> f =
      intr_d.inverse_matrix().transpose() * skew(t_rel) * r_rel * intr_q.inverse_matrix();
  return f / f.norm();
}

struct PoseError {
  double translation_m = 0.0;
  double rotation_deg = 0.0;
};

/// Benchmark pose error: Euclidean distance between camera centers and the
/// angle of the relative rotation in degrees.
template <typename T>
PoseError pose_error(const PoseSE3<T>& est, const PoseSE3<T>& gt) {
  PoseError e;
  e.translation_m = static_cast<double>((est.center() - gt.center()).norm());
  const Matrix3<T> r_rel = est.rotation.transpose() * gt.rotation;
  e.rotation_deg = static_cast<double>(rotation_angle(r_rel)) * 180.0 / M_PI;
  return e;
}

}  // namespace plloc
