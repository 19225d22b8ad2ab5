#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "plloc/geometry.hpp"
#include "plloc/line_mapping.hpp"
#include "plloc/line_residual.hpp"

namespace plloc {

struct MatchConfig {
  double overlap_threshold = 0.5;        // ratio in (0, 1]
  int max_candidates_per_query_line = 10;
  double residual_threshold = 10.0;      // pixels
  AngleScale angle_scale = {};
  double min_segment_length = kMinSegmentLength;

  void validate() const;
};

struct EpipolarCandidate {
  int query_id = -1;
  int db_id = -1;
  double overlap = 0.0;
};

struct MatchStats {
  std::int64_t pairs_considered = 0;
  std::int64_t degenerate_skips = 0;
  std::int64_t short_segments_skipped = 0;
  std::int64_t below_overlap = 0;
  std::int64_t candidates_kept = 0;
  std::int64_t behind_camera_skips = 0;
  std::int64_t unmapped_db_segments = 0;
  // Residual histogram of selected correspondences: 1 px bins for [0, 10),
  // last bin counts >= 10 px.
  std::array<std::int64_t, 11> residual_histogram{};

  void merge(const MatchStats& other);
};

/// Epipolar candidate generation: the query segment endpoints are
/// transferred to the database image as epipolar lines through F, the
/// intersections with the database segment's carrier line span an interval,
/// and the pair is kept when the interval IoU with the database segment
/// reaches the overlap threshold. At most max_candidates_per_query_line
/// pairs (best overlaps) are kept per query line. Degenerate pairs (parallel
/// carrier/epipolar lines, epipole transfers) are skipped and counted.
std::vector<EpipolarCandidate> epipolar_candidates(const std::vector<Segment2d>& query_lines,
                                                   const std::vector<Segment2d>& db_lines,
                                                   const Eigen::Matrix3d& f,
                                                   const MatchConfig& cfg,
                                                   MatchStats* stats = nullptr);

struct CandidateMatch {
  int query_segment = -1;
  int database_image = -1;
  int database_segment = -1;
  int map_segment = -1;
  double overlap = 0.0;
  double residual = 0.0;  // total line reprojection residual, pixels
};

struct DatabaseImage {
  int id = 0;
  std::vector<Segment2d> segments;
  PoseSE3d pose;
  CameraIntrinsicsd intrinsics;
};

struct MatchResult {
  std::vector<LineCorrespondenced> correspondences;
  std::vector<CandidateMatch> selected;  // parallel to correspondences
  MatchStats stats;
};

/// One-to-one 2D-3D line matching for a query image. For every retrieved
/// database image a fundamental matrix is built from the initial query pose,
/// epipolar candidates are generated and routed to the 3D map through the
/// database observation provenance. Each query line keeps its candidate with
/// the lowest total reprojection residual under the initial pose (if below
/// the residual threshold), and each map segment is assigned to at most one
/// query line: on conflicts the lowest residual wins and losers take their
/// next-best free candidate in a single reassignment pass.
MatchResult match_query_to_map(const std::vector<Segment2d>& query_lines,
                               const std::vector<int>& retrieval_pairs,
                               const std::vector<DatabaseImage>& db_images,
                               const LineMap3D& line_map, const PoseSE3d& init_pose,
                               const CameraIntrinsicsd& query_intrinsics, const MatchConfig& cfg);

}  // namespace plloc
