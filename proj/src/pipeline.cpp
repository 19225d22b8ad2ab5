#include "plloc/pipeline.hpp"

#include <algorithm>
#include <cstdio>

#include "plloc/error.hpp"

namespace plloc {

PipelineResult run_pipeline(const Scene& scene, const PipelineConfig& cfg) {
  if (scene.queries.empty()) throw LengthMismatch("scene has no queries to evaluate");
  scene.validate();

  PipelineResult result;
  result.map_build = build_line_map(scene.mapping_images(), cfg.ransac);

  const std::vector<int> retrieval = scene.database_ids();
  const std::vector<DatabaseImage> db_images = scene.database_images();

  std::vector<PoseSE3d> gt, initial, line_only, joint;
  for (const QueryView& query : scene.queries) {
    QueryRecord record;
    record.camera_id = query.camera_id;
    record.point_count = static_cast<int>(query.points.size());
    record.initial_pose = query.initial_pose;
    const PoseSE3d& gt_pose = scene.camera(query.camera_id).pose;

    const std::vector<Segment2d> query_lines = scene.segments_of(query.camera_id);
    MatchResult matches;
    try {
      matches = match_query_to_map(query_lines, retrieval, db_images, result.map_build.map,
                                   query.initial_pose, scene.intrinsics, cfg.match);
    } catch (const DegenerateError&) {
      // Keep the query with no correspondences; both variants fall back.
    }
    record.matched_lines = static_cast<int>(matches.correspondences.size());
    record.match_stats = matches.stats;
    result.match_stats.merge(matches.stats);

    const std::size_t line_gate =
        std::max<std::size_t>(3, static_cast<std::size_t>(cfg.min_line_matches));
    const bool use_lines = matches.correspondences.size() >= line_gate;
    const std::vector<LineCorrespondenced> lines =
        use_lines ? matches.correspondences : std::vector<LineCorrespondenced>{};

    record.line_only_pose = query.initial_pose;
    record.line_only_fallback = true;
    if (use_lines) {
      try {
        record.line_only =
            refine_pose_line_only(query.initial_pose, lines, scene.intrinsics, cfg.optimizer);
        record.line_only_pose = record.line_only.pose;
        record.line_only_fallback = false;
      } catch (const DegenerateError&) {
      }
    }

    record.joint_pose = query.initial_pose;
    record.joint_fallback = true;
    if (lines.size() + query.points.size() >= 3) {
      try {
        record.joint = refine_pose_joint(query.initial_pose, lines, query.points,
                                         scene.intrinsics, cfg.optimizer);
        record.joint_pose = record.joint.pose;
        record.joint_fallback = false;
      } catch (const DegenerateError&) {
      }
    }

    record.initial_error = pose_error(record.initial_pose, gt_pose);
    record.line_only_error = pose_error(record.line_only_pose, gt_pose);
    record.joint_error = pose_error(record.joint_pose, gt_pose);

    gt.push_back(gt_pose);
    initial.push_back(record.initial_pose);
    line_only.push_back(record.line_only_pose);
    joint.push_back(record.joint_pose);
    result.queries.push_back(std::move(record));
  }

  result.initial_score = evaluate_localization(initial, gt);
  result.line_only_score = evaluate_localization(line_only, gt);
  result.joint_score = evaluate_localization(joint, gt);
  return result;
}

std::string format_score_table(const PipelineResult& result) {
  char buffer[256];
  std::string out = "variant                      (0.25m,10deg)  (0.5m,10deg)  (1.0m,10deg)\n";
  const auto row = [&](const char* name, const LocalizationScore& s) {
    std::snprintf(buffer, sizeof(buffer), "%-28s %12.1f %13.1f %13.1f\n", name,
                  s.within_025m_10deg, s.within_05m_10deg, s.within_1m_10deg);
    out += buffer;
  };
  row("initial", result.initial_score);
  row("line optimization", result.line_only_score);
  row("point-line joint", result.joint_score);
  return out;
}

}  // namespace plloc
