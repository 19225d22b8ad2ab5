#pragma once

#include <cstdint>
#include <map>
#include <vector>

#include "plloc/geometry.hpp"
#include "plloc/line_mapping.hpp"
#include "plloc/line_matching.hpp"
#include "plloc/xyz_map.hpp"

namespace plloc {

/// A 2D line observation in one image, tagged with the 3D line it renders.
struct ObservedSegment {
  Segment2d seg;
  int line_id = -1;
  bool depth_corrupted = false;
};

struct SceneCamera {
  int id = 0;
  PoseSE3d pose;       // ground truth, world to camera
  bool database = false;
};

struct QueryView {
  int camera_id = 0;
  PoseSE3d initial_pose;
  std::vector<PointCorrespondenced> points;
};

/// Synthetic or loaded world: a box room whose walls carry the 3D lines and
/// points, posed cameras, per-database-camera XYZ maps, rendered 2D
/// observations and a query set with initial poses and point inliers.
struct Scene {
  CameraIntrinsicsd intrinsics;
  int image_width = 0;
  int image_height = 0;
  std::vector<SceneCamera> cameras;  // ascending id
  std::vector<Segment3d> lines3d;    // index is the line id
  std::vector<Eigen::Vector3d> points3d;
  std::map<int, std::vector<ObservedSegment>> observations;  // camera id -> segments
  std::map<int, XyzMap> xyz_maps;                            // database cameras only
  std::vector<QueryView> queries;

  const SceneCamera& camera(int id) const;
  std::vector<int> database_ids() const;
  std::vector<Segment2d> segments_of(int camera_id) const;
  std::vector<MappingImage> mapping_images() const;
  std::vector<DatabaseImage> database_images() const;

  void validate() const;
};

struct SceneGenConfig {
  std::uint64_t seed = 1;
  int n_cameras = 20;  // database cameras
  int n_queries = 5;
  int n_lines = 200;
  int n_points = 500;
  double room_extent = 5.0;  // box [0, extent]^3, meters
  double pixel_noise_sigma = 0.0;
  double init_perturb_translation = 0.3;   // meters
  double init_perturb_rotation_deg = 3.0;
  double depth_outlier_fraction = 0.0;     // per database line observation
  double point_outlier_fraction = 0.0;     // per query point correspondence
  int min_visible_lines = 10;   // co-visible with the database, per query
  int min_visible_points = 30;
  int image_width = 256;
  int image_height = 256;
  double focal = 128.0;
  int max_placement_attempts = 1000;

  void validate() const;
};

/// Deterministic synthetic scene: lines are room edges plus random wall
/// segments, points lie on the walls, cameras are placed inside the room
/// looking at the walls and re-sampled until the visibility minimums hold
/// (InfeasibleConfig after max_placement_attempts). XYZ maps are rendered
/// analytically by intersecting pixel rays with the room box; a pixel (x, y)
/// stores the hit of the ray through pixel coordinates exactly (x, y).
/// Depth-corrupted observations have the XYZ pixels along their sample path
/// displaced rigidly by 0.5 to 1 meter.
Scene generate_scene(const SceneGenConfig& cfg);

/// Random pose near `pose`: the camera center moves along a uniform random
/// direction by a uniform magnitude in [0, max_translation_m], and the
/// orientation rotates about a uniform random axis by a uniform angle in
/// [0, max_rotation_deg]. Deterministic in the seed.
PoseSE3d perturb_pose(const PoseSE3d& pose, double max_translation_m, double max_rotation_deg,
                      std::uint64_t seed);

/// Percentage of queries within (0.25 m, 10 deg), (0.5 m, 10 deg) and
/// (1 m, 10 deg); a query counts only when translation AND rotation errors
/// are both within the threshold.
struct LocalizationScore {
  double within_025m_10deg = 0.0;
  double within_05m_10deg = 0.0;
  double within_1m_10deg = 0.0;
};

LocalizationScore evaluate_localization(const std::vector<PoseSE3d>& estimates,
                                        const std::vector<PoseSE3d>& ground_truth);

}  // namespace plloc
