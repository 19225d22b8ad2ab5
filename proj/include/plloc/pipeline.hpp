#pragma once

#include <string>
#include <vector>

#include "plloc/line_mapping.hpp"
#include "plloc/line_matching.hpp"
#include "plloc/pose_refinement.hpp"
#include "plloc/scene.hpp"

namespace plloc {

struct PipelineConfig {
  RansacConfig ransac;
  MatchConfig match;
  OptimizerConfig optimizer;
  // Line matches are used in refinement only when at least this many
  // survive; with fewer, a handful of wrong matches would carry the whole
  // weight of the line family. Queries below the gate refine from points
  // alone (joint) or keep their initial pose (line-only).
  int min_line_matches = 5;
};

struct QueryRecord {
  int camera_id = 0;
  int matched_lines = 0;
  int point_count = 0;
  bool line_only_fallback = false;  // kept the initial pose
  bool joint_fallback = false;
  PoseSE3d initial_pose;
  PoseSE3d line_only_pose;
  PoseSE3d joint_pose;
  PoseError initial_error;
  PoseError line_only_error;
  PoseError joint_error;
  RefinementResult line_only;
  RefinementResult joint;
  MatchStats match_stats;
};

struct PipelineResult {
  BuildResult map_build;
  MatchStats match_stats;
  std::vector<QueryRecord> queries;
  LocalizationScore initial_score;
  LocalizationScore line_only_score;
  LocalizationScore joint_score;
};

/// End-to-end run over a scene: build the 3D line map from the database
/// images, match every query against it from its initial pose, refine
/// line-only and jointly, and score all three pose sets. A query whose
/// matching or refinement fails keeps its initial pose and is flagged.
PipelineResult run_pipeline(const Scene& scene, const PipelineConfig& cfg);

/// Table shaped like the localization-score summaries: one row per variant,
/// three thresholds per row.
std::string format_score_table(const PipelineResult& result);

}  // namespace plloc
