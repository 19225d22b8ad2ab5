#pragma once

#include <cmath>

#include "plloc/geometry.hpp"

namespace plloc {

/// Segment as midpoint plus half-displacement to the canonical right
/// endpoint: endpoints are p_mid -/+ v_r.
template <typename T>
struct MidpointRep {
  Vector2<T> p_mid = Vector2<T>::Zero();
  Vector2<T> v_r = Vector2<T>::Zero();
};

/// Segment as midpoint plus length and horizontal angle, theta in
/// (-pi/2, pi/2].
template <typename T>
struct PolarRep {
  Vector2<T> p_mid = Vector2<T>::Zero();
  T length = T(0);
  T theta = T(0);
};

using MidpointRepd = MidpointRep<double>;
using PolarRepd = PolarRep<double>;

template <typename T>
MidpointRep<T> endpoints_to_midrep(const Segment2<T>& s,
                                   T min_length = T(kMinSegmentLength)) {
  if (s.length() < min_length) throw DegenerateSegment("segment below minimum length");
  MidpointRep<T> rep;
  rep.p_mid = s.midpoint();
  rep.v_r = s.p_right - rep.p_mid;
  return rep;
}

template <typename T>
Segment2<T> midrep_to_endpoints(const MidpointRep<T>& m,
                                T min_length = T(kMinSegmentLength)) {
  if (T(2) * m.v_r.norm() < min_length)
    throw DegenerateSegment("midpoint displacement below half the minimum length");
  return Segment2<T>(m.p_mid - m.v_r, m.p_mid + m.v_r, T(1));
}

template <typename T>
MidpointRep<T> polar_to_midrep(const PolarRep<T>& p) {
  MidpointRep<T> rep;
  rep.p_mid = p.p_mid;
  rep.v_r = Vector2<T>(p.length / T(2) * std::cos(p.theta), p.length / T(2) * std::sin(p.theta));
  return rep;
}

template <typename T>
PolarRep<T> midrep_to_polar(const MidpointRep<T>& m) {
  PolarRep<T> rep;
  rep.p_mid = m.p_mid;
  rep.length = T(2) * m.v_r.norm();
  T theta = std::atan2(m.v_r.y(), m.v_r.x());
  // Fold into (-pi/2, pi/2]; a segment direction is only defined up to sign.
  if (theta > T(M_PI) / T(2)) theta -= T(M_PI);
  if (theta <= -T(M_PI) / T(2)) theta += T(M_PI);
  rep.theta = theta;
  return rep;
}

}  // namespace plloc
