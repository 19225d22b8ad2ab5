#pragma once

#include <string>
#include <vector>

#include "plloc/detection_maps.hpp"
#include "plloc/pipeline.hpp"
#include "plloc/scene.hpp"

namespace plloc {

// Binary grid files: 4-byte magic ("XYZM" or "DMAP"), little-endian u32
// width, height and channel count, then row-major channel-interleaved
// 32-bit IEEE-754 little-endian floats. Non-finite values mark invalid
// pixels.

void save_xyz_map(const XyzMap& map, const std::string& path);
XyzMap load_xyz_map(const std::string& path);

/// Detection grids as one 5-channel file: likelihood, offset x/y, and
/// displacement x/y per grid cell. The image size is the grid size times the
/// stride, which is not stored and must be supplied on load.
void save_detection_maps(const DetectionMaps& maps, const std::string& path);
DetectionMaps load_detection_maps(const std::string& path, int stride = 4);

// Scene directory: scene.json plus one xyz/cam_<id>.xyzm per database
// camera. Poses are stored as unit quaternion (w, x, y, z) plus translation,
// world-to-camera, meters.

void save_scene(const Scene& scene, const std::string& dir);
Scene load_scene(const std::string& dir);
std::string scene_to_json_string(const Scene& scene);

void save_line_map(const BuildResult& build, const std::string& path);
BuildResult load_line_map(const std::string& path);

/// Per-query match results, carrying the full 2D-3D segment data so that
/// refinement can run from the file alone.
struct QueryMatches {
  int camera_id = 0;
  MatchResult matches;
};

void save_matches(const std::vector<QueryMatches>& matches, const std::string& path);
std::vector<QueryMatches> load_matches(const std::string& path);

/// Report with the three score rows, the per-query refinement outcomes and
/// the mapping/matching statistics. Per-iteration cost traces are included
/// when with_cost_traces is set.
std::string report_to_string(const PipelineResult& result, bool with_cost_traces = false);
void save_report(const PipelineResult& result, const std::string& path,
                 bool with_cost_traces = false);

struct ReportPoses {
  std::vector<int> camera_ids;
  std::vector<PoseSE3d> initial;
  std::vector<PoseSE3d> line_only;
  std::vector<PoseSE3d> joint;
};

ReportPoses load_report_poses(const std::string& path);

void save_segments(const std::vector<Segment2d>& segments, const std::string& path);
std::vector<Segment2d> load_segments(const std::string& path);

}  // namespace plloc
