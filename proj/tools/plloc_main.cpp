#include <cstdio>
#include <exception>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "plloc/detection_maps.hpp"
#include "plloc/error.hpp"
#include "plloc/io.hpp"
#include "plloc/pipeline.hpp"
#include "plloc/sap.hpp"

namespace {

using namespace plloc;

constexpr int kExitOk = 0;
constexpr int kExitInvalidInput = 2;
constexpr int kExitDegenerate = 3;
constexpr int kExitInternal = 4;

void add_ransac_options(CLI::App* cmd, RansacConfig& cfg) {
  cmd->add_option("--ransac-iterations", cfg.iterations, "RANSAC iterations");
  cmd->add_option("--inlier-threshold", cfg.inlier_threshold, "Inlier threshold, pixels");
  cmd->add_option("--min-sample", cfg.min_sample, "Minimal DLT sample size");
  cmd->add_option("--min-inlier-ratio", cfg.min_inlier_ratio, "Consensus floor");
}

void add_match_options(CLI::App* cmd, MatchConfig& cfg) {
  cmd->add_option("--overlap-threshold", cfg.overlap_threshold, "Epipolar overlap IoU threshold");
  cmd->add_option("--max-candidates", cfg.max_candidates_per_query_line,
                  "Candidate cap per query line");
  cmd->add_option("--residual-threshold", cfg.residual_threshold,
                  "Reprojection residual threshold, pixels");
  cmd->add_option("--min-segment-length", cfg.min_segment_length,
                  "Minimum admitted segment length, pixels");
}

void add_optimizer_options(CLI::App* cmd, OptimizerConfig& cfg) {
  cmd->add_option("--max-iterations", cfg.max_iterations, "L-M iteration cap");
  cmd->add_option("--initial-lambda", cfg.initial_lambda, "Initial damping");
  cmd->add_option("--convergence-tol", cfg.convergence_tol, "Relative cost decrease tolerance");
  cmd->add_option("--step-tol", cfg.step_tol, "Update norm tolerance");
  cmd->add_option("--huber-delta", cfg.huber_delta, "Huber loss width, pixels");
}

void add_scene_gen_options(CLI::App* cmd, SceneGenConfig& cfg) {
  cmd->add_option("--seed", cfg.seed, "Scene seed");
  cmd->add_option("--cameras", cfg.n_cameras, "Database cameras");
  cmd->add_option("--queries", cfg.n_queries, "Query cameras");
  cmd->add_option("--lines", cfg.n_lines, "3D lines");
  cmd->add_option("--points", cfg.n_points, "3D points");
  cmd->add_option("--extent", cfg.room_extent, "Room extent, meters");
  cmd->add_option("--noise", cfg.pixel_noise_sigma, "Observation noise sigma, pixels");
  cmd->add_option("--perturb-translation", cfg.init_perturb_translation,
                  "Initial pose translation bound, meters");
  cmd->add_option("--perturb-rotation", cfg.init_perturb_rotation_deg,
                  "Initial pose rotation bound, degrees");
  cmd->add_option("--depth-outliers", cfg.depth_outlier_fraction,
                  "Depth-corrupted line observation fraction");
  cmd->add_option("--point-outliers", cfg.point_outlier_fraction,
                  "Corrupted query point fraction");
  cmd->add_option("--image-width", cfg.image_width, "Image width, pixels");
  cmd->add_option("--image-height", cfg.image_height, "Image height, pixels");
  cmd->add_option("--focal", cfg.focal, "Focal length, pixels");
  cmd->add_option("--min-visible-lines", cfg.min_visible_lines, "Per-query visibility minimum");
  cmd->add_option("--min-visible-points", cfg.min_visible_points, "Per-query visibility minimum");
}

PipelineResult refine_from_matches(const Scene& scene, const std::vector<QueryMatches>& matches,
                                   const std::string& mode, const OptimizerConfig& opt,
                                   int min_line_matches) {
  const std::size_t line_gate = std::max<std::size_t>(3, min_line_matches);
  PipelineResult result;
  std::vector<PoseSE3d> gt, initial, line_only, joint;
  for (const QueryView& query : scene.queries) {
    QueryRecord record;
    record.camera_id = query.camera_id;
    record.point_count = static_cast<int>(query.points.size());
    record.initial_pose = query.initial_pose;
    record.line_only_pose = query.initial_pose;
    record.joint_pose = query.initial_pose;
    record.line_only_fallback = true;
    record.joint_fallback = true;

    const QueryMatches* qm = nullptr;
    for (const QueryMatches& m : matches)
      if (m.camera_id == query.camera_id) qm = &m;
    const std::vector<LineCorrespondenced> lines =
        qm != nullptr ? qm->matches.correspondences : std::vector<LineCorrespondenced>{};
    record.matched_lines = static_cast<int>(lines.size());

    const bool use_lines = lines.size() >= line_gate;
    const std::vector<LineCorrespondenced> gated =
        use_lines ? lines : std::vector<LineCorrespondenced>{};
    try {
      if (mode == "line" && use_lines) {
        record.line_only = refine_pose_line_only(query.initial_pose, gated, scene.intrinsics, opt);
        record.line_only_pose = record.line_only.pose;
        record.line_only_fallback = false;
      } else if (mode == "joint" && gated.size() + query.points.size() >= 3) {
        record.joint =
            refine_pose_joint(query.initial_pose, gated, query.points, scene.intrinsics, opt);
        record.joint_pose = record.joint.pose;
        record.joint_fallback = false;
      } else if (mode == "point" && query.points.size() >= 3) {
        record.joint = refine_pose_joint(query.initial_pose, {}, query.points, scene.intrinsics,
                                         opt);
        record.joint_pose = record.joint.pose;
        record.joint_fallback = false;
      }
    } catch (const DegenerateError&) {
      // Fall back to the initial pose for this query.
    }

    const PoseSE3d& gt_pose = scene.camera(query.camera_id).pose;
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

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Camera pose refinement by joint 2D-3D point and line optimization"};
  app.require_subcommand(1);
  app.set_config("--config", "", "Read options from a TOML config file");

  // synth -------------------------------------------------------------------
  auto* synth = app.add_subcommand("synth", "Generate a synthetic scene directory");
  SceneGenConfig gen_cfg;
  std::string synth_out;
  add_scene_gen_options(synth, gen_cfg);
  synth->add_option("--out", synth_out, "Output scene directory")->required();

  // map ---------------------------------------------------------------------
  auto* map_cmd = app.add_subcommand("map", "Build the 3D line map from a scene");
  std::string map_scene, map_out;
  RansacConfig map_ransac;
  std::uint64_t map_seed = 0;
  map_cmd->add_option("--scene", map_scene, "Scene directory")->required();
  map_cmd->add_option("--out", map_out, "Output line map JSON")->required();
  map_cmd->add_option("--seed", map_seed, "RANSAC seed");
  add_ransac_options(map_cmd, map_ransac);

  // match -------------------------------------------------------------------
  auto* match_cmd = app.add_subcommand("match", "Match query lines against the 3D map");
  std::string match_scene, match_map, match_out;
  MatchConfig match_cfg;
  match_cmd->add_option("--scene", match_scene, "Scene directory")->required();
  match_cmd->add_option("--map", match_map, "Line map JSON")->required();
  match_cmd->add_option("--out", match_out, "Output matches JSON")->required();
  add_match_options(match_cmd, match_cfg);

  // refine ------------------------------------------------------------------
  auto* refine_cmd = app.add_subcommand("refine", "Refine query poses from matches");
  std::string refine_scene, refine_matches, refine_mode = "joint", refine_report;
  bool refine_trace = false;
  int refine_min_lines = 5;
  OptimizerConfig refine_opt;
  refine_cmd->add_option("--scene", refine_scene, "Scene directory")->required();
  refine_cmd->add_option("--matches", refine_matches, "Matches JSON")->required();
  refine_cmd->add_option("--mode", refine_mode, "line|joint|point")
      ->check(CLI::IsMember({"line", "joint", "point"}));
  refine_cmd->add_option("--report", refine_report, "Output report JSON")->required();
  refine_cmd->add_flag("--cost-trace", refine_trace, "Record per-iteration costs");
  refine_cmd->add_option("--min-line-matches", refine_min_lines,
                         "Line matches required before lines join the refinement");
  add_optimizer_options(refine_cmd, refine_opt);

  // eval --------------------------------------------------------------------
  auto* eval_cmd = app.add_subcommand("eval", "Score report poses against scene ground truth");
  std::string eval_scene, eval_report;
  eval_cmd->add_option("--scene", eval_scene, "Scene directory")->required();
  eval_cmd->add_option("--report", eval_report, "Report JSON with per-query poses")->required();

  // pipeline ----------------------------------------------------------------
  auto* pipe_cmd = app.add_subcommand("pipeline", "Run map, match, refine and eval end to end");
  SceneGenConfig pipe_gen;
  std::string pipe_scene_dir, pipe_report;
  bool pipe_trace = false;
  PipelineConfig pipe_cfg;
  pipe_cmd->add_option("--scene", pipe_scene_dir,
                       "Scene directory (generated from the synth options when omitted)");
  pipe_cmd->add_option("--report", pipe_report, "Output report JSON");
  pipe_cmd->add_flag("--cost-trace", pipe_trace, "Record per-iteration costs");
  pipe_cmd->add_option("--min-line-matches", pipe_cfg.min_line_matches,
                       "Line matches required before lines join the refinement");
  add_scene_gen_options(pipe_cmd, pipe_gen);
  add_ransac_options(pipe_cmd, pipe_cfg.ransac);
  add_match_options(pipe_cmd, pipe_cfg.match);
  add_optimizer_options(pipe_cmd, pipe_cfg.optimizer);

  // decode ------------------------------------------------------------------
  auto* decode_cmd = app.add_subcommand("decode", "Decode detection map grids into segments");
  std::string decode_maps, decode_out, decode_gt;
  int decode_stride = 4, decode_topk = 1000;
  double decode_conf = 0.5;
  decode_cmd->add_option("--maps", decode_maps, "Detection maps file (DMAP)")->required();
  decode_cmd->add_option("--out", decode_out, "Output segments JSON")->required();
  decode_cmd->add_option("--stride", decode_stride, "Grid stride");
  decode_cmd->add_option("--conf", decode_conf, "Confidence threshold");
  decode_cmd->add_option("--top-k", decode_topk, "Maximum decoded segments");
  decode_cmd->add_option("--gt", decode_gt, "Ground-truth segments JSON; prints sAP");

  try {
    app.parse(argc, argv);

    if (synth->parsed()) {
      const Scene scene = generate_scene(gen_cfg);
      save_scene(scene, synth_out);
      std::printf("scene: %d cameras, %d queries, %zu lines, %zu points -> %s\n",
                  gen_cfg.n_cameras, gen_cfg.n_queries, scene.lines3d.size(),
                  scene.points3d.size(), synth_out.c_str());
    } else if (map_cmd->parsed()) {
      const Scene scene = load_scene(map_scene);
      map_ransac.seed = map_seed;
      const BuildResult build = build_line_map(scene.mapping_images(), map_ransac);
      save_line_map(build, map_out);
      std::printf("line map: %zu segments from %zu images -> %s\n", build.map.segments.size(),
                  build.records.size(), map_out.c_str());
    } else if (match_cmd->parsed()) {
      const Scene scene = load_scene(match_scene);
      const BuildResult build = load_line_map(match_map);
      const std::vector<int> retrieval = scene.database_ids();
      const std::vector<DatabaseImage> db_images = scene.database_images();
      std::vector<QueryMatches> all;
      for (const QueryView& query : scene.queries) {
        QueryMatches qm;
        qm.camera_id = query.camera_id;
        qm.matches = match_query_to_map(scene.segments_of(query.camera_id), retrieval, db_images,
                                        build.map, query.initial_pose, scene.intrinsics,
                                        match_cfg);
        all.push_back(std::move(qm));
      }
      save_matches(all, match_out);
      std::size_t total = 0;
      for (const QueryMatches& qm : all) total += qm.matches.correspondences.size();
      std::printf("matches: %zu correspondences over %zu queries -> %s\n", total, all.size(),
                  match_out.c_str());
    } else if (refine_cmd->parsed()) {
      const Scene scene = load_scene(refine_scene);
      refine_opt.record_cost_trace = refine_trace;
      const PipelineResult result = refine_from_matches(scene, load_matches(refine_matches),
                                                        refine_mode, refine_opt, refine_min_lines);
      save_report(result, refine_report, refine_trace);
      std::printf("%s", format_score_table(result).c_str());
    } else if (eval_cmd->parsed()) {
      const Scene scene = load_scene(eval_scene);
      const ReportPoses poses = load_report_poses(eval_report);
      std::vector<PoseSE3d> gt;
      for (int id : poses.camera_ids) gt.push_back(scene.camera(id).pose);
      PipelineResult result;
      result.initial_score = evaluate_localization(poses.initial, gt);
      result.line_only_score = evaluate_localization(poses.line_only, gt);
      result.joint_score = evaluate_localization(poses.joint, gt);
      std::printf("%s", format_score_table(result).c_str());
    } else if (pipe_cmd->parsed()) {
      const Scene scene =
          pipe_scene_dir.empty() ? generate_scene(pipe_gen) : load_scene(pipe_scene_dir);
      pipe_cfg.ransac.seed = pipe_gen.seed;
      pipe_cfg.optimizer.record_cost_trace = pipe_trace;
      const PipelineResult result = run_pipeline(scene, pipe_cfg);
      if (!pipe_report.empty()) save_report(result, pipe_report, pipe_trace);
      std::printf("%s", format_score_table(result).c_str());
    } else if (decode_cmd->parsed()) {
      const DetectionMaps maps = load_detection_maps(decode_maps, decode_stride);
      const std::vector<Segment2d> segments =
          decode_detection_maps(maps, decode_conf, decode_topk);
      save_segments(segments, decode_out);
      std::printf("decoded %zu segments -> %s\n", segments.size(), decode_out.c_str());
      if (!decode_gt.empty()) {
        const auto scores = sap_score(segments, load_segments(decode_gt), maps.image_width,
                                      maps.image_height, SapConfig{});
        for (const auto& [threshold, ap] : scores)
          std::printf("sAP@%g = %.2f\n", threshold, ap);
      }
    }
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitInvalidInput;
  } catch (const InvalidInput& e) {
    std::cerr << "invalid input: " << e.what() << "\n";
    return kExitInvalidInput;
  } catch (const DegenerateError& e) {
    std::cerr << "degenerate or infeasible input: " << e.what() << "\n";
    return kExitDegenerate;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return kExitInternal;
  }
}
