#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "plloc/geometry.hpp"
#include "plloc/pose_refinement.hpp"
#include "plloc/xyz_map.hpp"

namespace plloc {

struct RansacConfig {
  int iterations = 200;
  double inlier_threshold = 3.0;  // pixels
  int min_sample = 6;
  std::uint64_t seed = 0;
  double min_inlier_ratio = 0.3;  // below this the consensus is rejected

  void validate() const;
};

/// Lift a 2D segment into world coordinates through a per-pixel XYZ map:
/// ceil(length)+1 equally spaced samples are looked up at their nearest
/// pixel, a 3D line is fit by total least squares (principal axis through
/// the centroid), and the endpoints are the projections of the first and
/// last valid samples onto that axis. Out-of-bounds or non-finite samples
/// are invalid; at least 2 valid samples and a 50% valid ratio are required,
/// otherwise InsufficientDepth is thrown.
Segment3d lift_segment_to_3d(const Segment2d& seg, const XyzMap& xyz);

struct RansacResult {
  std::vector<std::uint8_t> inliers;
  PoseSE3d pose;                  // L-M refit on the consensus set
  int inlier_count = 0;
  PoseSE3d consensus_pose;        // minimal-sample pose that defined the inliers
};

/// Classic PnP RANSAC over 2D-3D point pairs. Each iteration solves a pose
/// from min_sample pairs by DLT on the 3x4 projection matrix (in normalized
/// camera coordinates, with the rotation factor orthonormalized) and counts
/// reprojection inliers. The largest consensus set is kept and the pose is
/// refit on it with the point-only L-M refinement. Deterministic in
/// cfg.seed.
RansacResult pnp_ransac_filter(const std::vector<Eigen::Vector2d>& points2d,
                               const std::vector<Eigen::Vector3d>& points3d,
                               const CameraIntrinsicsd& intr, const RansacConfig& cfg);

struct LineMap3D {
  std::vector<Segment3d> segments;  // sorted by (source_image, source_segment)

  /// Index into segments for a database observation, or -1 if that
  /// observation was filtered out.
  int find_by_source(int image_id, int segment_id) const;
};

struct MappingImage {
  int id = 0;
  std::vector<Segment2d> segments;
  XyzMap xyz;
  PoseSE3d pose;
  CameraIntrinsicsd intrinsics;
};

struct ImageBuildRecord {
  int image_id = 0;
  int segments_in = 0;
  int lifted = 0;
  int kept = 0;
  bool skipped = false;
  std::string skip_reason;
  // Deviation of the RANSAC consensus pose from the supplied database pose;
  // a large value indicates unreliable depth for that image.
  double ransac_pose_translation_dev = 0.0;
  double ransac_pose_rotation_dev = 0.0;
};

struct BuildResult {
  LineMap3D map;
  std::vector<ImageBuildRecord> records;
};

/// Build the 3D line map: per image, lift all segments, run the PnP-RANSAC
/// endpoint filter over all lifted endpoints, and keep a segment only when
/// both its endpoints are inliers. Images are processed independently (the
/// per-image RANSAC stream is derived from cfg.seed and the image id), and
/// the output is sorted by (image id, segment id), so permuting the input
/// yields the same map.
BuildResult build_line_map(const std::vector<MappingImage>& images, const RansacConfig& cfg);

}  // namespace plloc
