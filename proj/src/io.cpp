#include "plloc/io.hpp"

#include <cstring>
#include <filesystem>
#include <fstream>

#include <Eigen/Geometry>
#include <json.hpp>

#include "plloc/error.hpp"

namespace plloc {

using nlohmann::json;

namespace {

constexpr const char* kPoseConvention = "world_to_camera";

// --- binary grids -----------------------------------------------------------

void write_u32(std::ostream& os, std::uint32_t v) {
  const char bytes[4] = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
                         static_cast<char>((v >> 16) & 0xff),
                         static_cast<char>((v >> 24) & 0xff)};
  os.write(bytes, 4);
}

std::uint32_t read_u32(std::istream& is) {
  unsigned char bytes[4];
  is.read(reinterpret_cast<char*>(bytes), 4);
  return static_cast<std::uint32_t>(bytes[0]) | (static_cast<std::uint32_t>(bytes[1]) << 8) |
         (static_cast<std::uint32_t>(bytes[2]) << 16) |
         (static_cast<std::uint32_t>(bytes[3]) << 24);
}

void write_f32(std::ostream& os, float f) {
  std::uint32_t bits;
  std::memcpy(&bits, &f, 4);
  write_u32(os, bits);
}

float read_f32(std::istream& is) {
  const std::uint32_t bits = read_u32(is);
  float f;
  std::memcpy(&f, &bits, 4);
  return f;
}

struct GridData {
  std::uint32_t width = 0, height = 0, channels = 0;
  std::vector<float> values;  // row-major, channel-interleaved
};

void write_grid(const std::string& path, const char magic[4], const GridData& grid) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw InvalidInput("cannot open file for writing: " + path);
  os.write(magic, 4);
  write_u32(os, grid.width);
  write_u32(os, grid.height);
  write_u32(os, grid.channels);
  for (float v : grid.values) write_f32(os, v);
  if (!os) throw InvalidInput("write failed: " + path);
}

GridData read_grid(const std::string& path, const char magic[4]) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw InvalidInput("cannot open file: " + path);
  char found[4];
  is.read(found, 4);
  if (!is || std::memcmp(found, magic, 4) != 0)
    throw InvalidInput("bad magic in grid file: " + path);
  GridData grid;
  grid.width = read_u32(is);
  grid.height = read_u32(is);
  grid.channels = read_u32(is);
  const std::size_t count =
      static_cast<std::size_t>(grid.width) * grid.height * grid.channels;
  if (!is || grid.width == 0 || grid.height == 0 || grid.channels == 0 || count > (1u << 28))
    throw InvalidInput("bad grid header: " + path);
  grid.values.resize(count);
  for (float& v : grid.values) v = read_f32(is);
  if (!is) throw InvalidInput("truncated grid file: " + path);
  return grid;
}

// --- json helpers -----------------------------------------------------------

json to_json(const Eigen::Vector2d& v) { return json::array({v.x(), v.y()}); }
json to_json(const Eigen::Vector3d& v) { return json::array({v.x(), v.y(), v.z()}); }

Eigen::Vector2d vec2_from(const json& j) { return {j.at(0).get<double>(), j.at(1).get<double>()}; }
Eigen::Vector3d vec3_from(const json& j) {
  return {j.at(0).get<double>(), j.at(1).get<double>(), j.at(2).get<double>()};
}

json pose_to_json(const PoseSE3d& pose) {
  Eigen::Quaterniond q(pose.rotation);
  q.normalize();
  if (q.w() < 0.0) q.coeffs() *= -1.0;
  return json{{"q", json::array({q.w(), q.x(), q.y(), q.z()})},
              {"t", to_json(pose.translation)}};
}

PoseSE3d pose_from_json(const json& j) {
  const json& q = j.at("q");
  Eigen::Quaterniond quat(q.at(0).get<double>(), q.at(1).get<double>(), q.at(2).get<double>(),
                          q.at(3).get<double>());
  if (quat.norm() < 1e-9) throw InvalidInput("zero quaternion in pose");
  quat.normalize();
  PoseSE3d pose;
  pose.rotation = quat.toRotationMatrix();
  pose.translation = vec3_from(j.at("t"));
  return pose;
}

json segment2_to_json(const Segment2d& s) {
  return json{{"p_left", to_json(s.p_left)},
              {"p_right", to_json(s.p_right)},
              {"confidence", s.confidence}};
}

Segment2d segment2_from_json(const json& j) {
  return Segment2d(vec2_from(j.at("p_left")), vec2_from(j.at("p_right")),
                   j.value("confidence", 1.0));
}

json segment3_to_json(const Segment3d& s) {
  return json{{"p_left", to_json(s.p_left)},
              {"p_right", to_json(s.p_right)},
              {"image", s.source_image},
              {"segment", s.source_segment}};
}

Segment3d segment3_from_json(const json& j) {
  Segment3d s;
  s.p_left = vec3_from(j.at("p_left"));
  s.p_right = vec3_from(j.at("p_right"));
  s.source_image = j.value("image", -1);
  s.source_segment = j.value("segment", -1);
  return s;
}

json score_to_json(const LocalizationScore& s) {
  return json{{"0.25m_10deg", s.within_025m_10deg},
              {"0.5m_10deg", s.within_05m_10deg},
              {"1m_10deg", s.within_1m_10deg}};
}

json stats_to_json(const MatchStats& s) {
  return json{{"pairs_considered", s.pairs_considered},
              {"degenerate_skips", s.degenerate_skips},
              {"short_segments_skipped", s.short_segments_skipped},
              {"below_overlap", s.below_overlap},
              {"candidates_kept", s.candidates_kept},
              {"behind_camera_skips", s.behind_camera_skips},
              {"unmapped_db_segments", s.unmapped_db_segments},
              {"residual_histogram", s.residual_histogram}};
}

MatchStats stats_from_json(const json& j) {
  MatchStats s;
  s.pairs_considered = j.value("pairs_considered", std::int64_t{0});
  s.degenerate_skips = j.value("degenerate_skips", std::int64_t{0});
  s.short_segments_skipped = j.value("short_segments_skipped", std::int64_t{0});
  s.below_overlap = j.value("below_overlap", std::int64_t{0});
  s.candidates_kept = j.value("candidates_kept", std::int64_t{0});
  s.behind_camera_skips = j.value("behind_camera_skips", std::int64_t{0});
  s.unmapped_db_segments = j.value("unmapped_db_segments", std::int64_t{0});
  if (j.contains("residual_histogram"))
    for (std::size_t i = 0; i < s.residual_histogram.size(); ++i)
      s.residual_histogram[i] = j.at("residual_histogram").at(i).get<std::int64_t>();
  return s;
}

json parse_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw InvalidInput("cannot open file: " + path);
  json j;
  try {
    is >> j;
  } catch (const json::exception& e) {
    throw InvalidInput("malformed JSON in " + path + ": " + e.what());
  }
  return j;
}

void write_file(const std::string& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw InvalidInput("cannot open file for writing: " + path);
  os << text;
  if (!os) throw InvalidInput("write failed: " + path);
}

}  // namespace

// --- binary grids -----------------------------------------------------------

void save_xyz_map(const XyzMap& map, const std::string& path) {
  GridData grid;
  grid.width = static_cast<std::uint32_t>(map.width);
  grid.height = static_cast<std::uint32_t>(map.height);
  grid.channels = 3;
  grid.values.reserve(map.data.size() * 3);
  for (const Eigen::Vector3f& p : map.data) {
    grid.values.push_back(p.x());
    grid.values.push_back(p.y());
    grid.values.push_back(p.z());
  }
  write_grid(path, "XYZM", grid);
}

XyzMap load_xyz_map(const std::string& path) {
  const GridData grid = read_grid(path, "XYZM");
  if (grid.channels != 3) throw InvalidInput("XYZ map must have 3 channels: " + path);
  XyzMap map(static_cast<int>(grid.width), static_cast<int>(grid.height));
  for (std::size_t i = 0; i < map.data.size(); ++i)
    map.data[i] =
        Eigen::Vector3f(grid.values[3 * i], grid.values[3 * i + 1], grid.values[3 * i + 2]);
  return map;
}

void save_detection_maps(const DetectionMaps& maps, const std::string& path) {
  maps.validate();
  GridData grid;
  grid.width = static_cast<std::uint32_t>(maps.grid_cols());
  grid.height = static_cast<std::uint32_t>(maps.grid_rows());
  grid.channels = 5;
  grid.values.reserve(static_cast<std::size_t>(grid.width) * grid.height * 5);
  for (int r = 0; r < maps.grid_rows(); ++r) {
    for (int c = 0; c < maps.grid_cols(); ++c) {
      grid.values.push_back(static_cast<float>(maps.m_loc(r, c)));
      grid.values.push_back(static_cast<float>(maps.off_x(r, c)));
      grid.values.push_back(static_cast<float>(maps.off_y(r, c)));
      grid.values.push_back(static_cast<float>(maps.dis_x(r, c)));
      grid.values.push_back(static_cast<float>(maps.dis_y(r, c)));
    }
  }
  write_grid(path, "DMAP", grid);
}

DetectionMaps load_detection_maps(const std::string& path, int stride) {
  const GridData grid = read_grid(path, "DMAP");
  if (grid.channels != 5) throw InvalidMaps("detection maps must have 5 channels: " + path);
  DetectionMaps maps;
  maps.stride = stride;
  maps.image_width = static_cast<int>(grid.width) * stride;
  maps.image_height = static_cast<int>(grid.height) * stride;
  const int rows = static_cast<int>(grid.height);
  const int cols = static_cast<int>(grid.width);
  maps.m_loc.resize(rows, cols);
  maps.off_x.resize(rows, cols);
  maps.off_y.resize(rows, cols);
  maps.dis_x.resize(rows, cols);
  maps.dis_y.resize(rows, cols);
  std::size_t i = 0;
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      maps.m_loc(r, c) = grid.values[i++];
      maps.off_x(r, c) = grid.values[i++];
      maps.off_y(r, c) = grid.values[i++];
      maps.dis_x(r, c) = grid.values[i++];
      maps.dis_y(r, c) = grid.values[i++];
    }
  }
  maps.validate();
  return maps;
}

// --- scene -------------------------------------------------------------------

std::string scene_to_json_string(const Scene& scene) {
  json j;
  j["format"] = "plloc-scene-v1";
  j["pose_convention"] = kPoseConvention;
  j["intrinsics"] = {{"fx", scene.intrinsics.fx},
                     {"fy", scene.intrinsics.fy},
                     {"cx", scene.intrinsics.cx},
                     {"cy", scene.intrinsics.cy}};
  j["image_size"] = {{"width", scene.image_width}, {"height", scene.image_height}};

  json cameras = json::array();
  for (const SceneCamera& cam : scene.cameras) {
    json c = pose_to_json(cam.pose);
    c["id"] = cam.id;
    c["database"] = cam.database;
    cameras.push_back(c);
  }
  j["cameras"] = cameras;

  json lines = json::array();
  for (std::size_t i = 0; i < scene.lines3d.size(); ++i) {
    json l = segment3_to_json(scene.lines3d[i]);
    l["id"] = static_cast<int>(i);
    lines.push_back(l);
  }
  j["lines3d"] = lines;

  json points = json::array();
  for (const Eigen::Vector3d& p : scene.points3d) points.push_back(to_json(p));
  j["points3d"] = points;

  json observations = json::object();
  for (const auto& [cam_id, obs] : scene.observations) {
    json list = json::array();
    for (const ObservedSegment& o : obs) {
      json e = segment2_to_json(o.seg);
      e["line_id"] = o.line_id;
      e["depth_corrupted"] = o.depth_corrupted;
      list.push_back(e);
    }
    observations[std::to_string(cam_id)] = list;
  }
  j["observations"] = observations;

  json xyz = json::object();
  for (const auto& entry : scene.xyz_maps) {
    char name[64];
    std::snprintf(name, sizeof(name), "xyz/cam_%04d.xyzm", entry.first);
    xyz[std::to_string(entry.first)] = name;
  }
  j["xyz_maps"] = xyz;

  json queries = json::array();
  for (const QueryView& q : scene.queries) {
    json e;
    e["camera_id"] = q.camera_id;
    e["initial_pose"] = pose_to_json(q.initial_pose);
    json pts = json::array();
    for (const PointCorrespondenced& p : q.points)
      pts.push_back(json{{"p2d", to_json(p.p2d)}, {"P3d", to_json(p.p3d)}});
    e["points"] = pts;
    queries.push_back(e);
  }
  j["queries"] = queries;
  return j.dump(2) + "\n";
}

void save_scene(const Scene& scene, const std::string& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(fs::path(dir) / "xyz");
  write_file((fs::path(dir) / "scene.json").string(), scene_to_json_string(scene));
  for (const auto& [cam_id, map] : scene.xyz_maps) {
    char name[64];
    std::snprintf(name, sizeof(name), "cam_%04d.xyzm", cam_id);
    save_xyz_map(map, (fs::path(dir) / "xyz" / name).string());
  }
}

Scene load_scene(const std::string& dir) {
  namespace fs = std::filesystem;
  const json j = parse_file((fs::path(dir) / "scene.json").string());
  try {
    Scene scene;
    scene.intrinsics.fx = j.at("intrinsics").at("fx").get<double>();
    scene.intrinsics.fy = j.at("intrinsics").at("fy").get<double>();
    scene.intrinsics.cx = j.at("intrinsics").at("cx").get<double>();
    scene.intrinsics.cy = j.at("intrinsics").at("cy").get<double>();
    scene.image_width = j.at("image_size").at("width").get<int>();
    scene.image_height = j.at("image_size").at("height").get<int>();
    for (const json& c : j.at("cameras")) {
      SceneCamera cam;
      cam.id = c.at("id").get<int>();
      cam.database = c.at("database").get<bool>();
      cam.pose = pose_from_json(c);
      scene.cameras.push_back(cam);
    }
    for (const json& l : j.at("lines3d")) scene.lines3d.push_back(segment3_from_json(l));
    for (const json& p : j.at("points3d")) scene.points3d.push_back(vec3_from(p));
    for (const auto& [key, list] : j.at("observations").items()) {
      std::vector<ObservedSegment> obs;
      for (const json& e : list) {
        ObservedSegment o;
        o.seg = segment2_from_json(e);
        o.line_id = e.value("line_id", -1);
        o.depth_corrupted = e.value("depth_corrupted", false);
        obs.push_back(o);
      }
      scene.observations[std::stoi(key)] = std::move(obs);
    }
    for (const auto& [key, rel] : j.at("xyz_maps").items()) {
      scene.xyz_maps.emplace(std::stoi(key),
                             load_xyz_map((fs::path(dir) / rel.get<std::string>()).string()));
    }
    for (const json& q : j.at("queries")) {
      QueryView query;
      query.camera_id = q.at("camera_id").get<int>();
      query.initial_pose = pose_from_json(q.at("initial_pose"));
      for (const json& p : q.at("points"))
        query.points.push_back({vec2_from(p.at("p2d")), vec3_from(p.at("P3d"))});
      scene.queries.push_back(std::move(query));
    }
    scene.validate();
    return scene;
  } catch (const json::exception& e) {
    throw InvalidInput(std::string("malformed scene file: ") + e.what());
  }
}

// --- line map ----------------------------------------------------------------

void save_line_map(const BuildResult& build, const std::string& path) {
  json j;
  j["format"] = "plloc-linemap-v1";
  j["pose_convention"] = kPoseConvention;
  json segments = json::array();
  for (std::size_t i = 0; i < build.map.segments.size(); ++i) {
    json s = segment3_to_json(build.map.segments[i]);
    s["id"] = static_cast<int>(i);
    segments.push_back(s);
  }
  j["segments"] = segments;
  json records = json::array();
  for (const ImageBuildRecord& r : build.records) {
    records.push_back(json{{"image_id", r.image_id},
                           {"segments_in", r.segments_in},
                           {"lifted", r.lifted},
                           {"kept", r.kept},
                           {"skipped", r.skipped},
                           {"skip_reason", r.skip_reason},
                           {"ransac_translation_dev", r.ransac_pose_translation_dev},
                           {"ransac_rotation_dev", r.ransac_pose_rotation_dev}});
  }
  j["build"] = records;
  write_file(path, j.dump(2) + "\n");
}

BuildResult load_line_map(const std::string& path) {
  const json j = parse_file(path);
  try {
    BuildResult build;
    for (const json& s : j.at("segments")) build.map.segments.push_back(segment3_from_json(s));
    if (j.contains("build")) {
      for (const json& r : j.at("build")) {
        ImageBuildRecord record;
        record.image_id = r.at("image_id").get<int>();
        record.segments_in = r.value("segments_in", 0);
        record.lifted = r.value("lifted", 0);
        record.kept = r.value("kept", 0);
        record.skipped = r.value("skipped", false);
        record.skip_reason = r.value("skip_reason", std::string());
        record.ransac_pose_translation_dev = r.value("ransac_translation_dev", 0.0);
        record.ransac_pose_rotation_dev = r.value("ransac_rotation_dev", 0.0);
        build.records.push_back(record);
      }
    }
    return build;
  } catch (const json::exception& e) {
    throw InvalidInput(std::string("malformed line map file: ") + e.what());
  }
}

// --- matches -----------------------------------------------------------------

void save_matches(const std::vector<QueryMatches>& matches, const std::string& path) {
  json j;
  j["format"] = "plloc-matches-v1";
  j["pose_convention"] = kPoseConvention;
  json queries = json::array();
  for (const QueryMatches& qm : matches) {
    json e;
    e["camera_id"] = qm.camera_id;
    json corrs = json::array();
    for (std::size_t i = 0; i < qm.matches.correspondences.size(); ++i) {
      const LineCorrespondenced& c = qm.matches.correspondences[i];
      json cj;
      cj["seg2d"] = segment2_to_json(c.seg2d);
      cj["seg3d"] = segment3_to_json(c.seg3d);
      if (i < qm.matches.selected.size()) {
        const CandidateMatch& m = qm.matches.selected[i];
        cj["query_segment"] = m.query_segment;
        cj["database_image"] = m.database_image;
        cj["database_segment"] = m.database_segment;
        cj["map_segment"] = m.map_segment;
        cj["overlap"] = m.overlap;
        cj["residual"] = m.residual;
      }
      corrs.push_back(cj);
    }
    e["lines"] = corrs;
    e["stats"] = stats_to_json(qm.matches.stats);
    queries.push_back(e);
  }
  j["queries"] = queries;
  write_file(path, j.dump(2) + "\n");
}

std::vector<QueryMatches> load_matches(const std::string& path) {
  const json j = parse_file(path);
  try {
    std::vector<QueryMatches> out;
    for (const json& e : j.at("queries")) {
      QueryMatches qm;
      qm.camera_id = e.at("camera_id").get<int>();
      for (const json& cj : e.at("lines")) {
        LineCorrespondenced c;
        c.seg2d = segment2_from_json(cj.at("seg2d"));
        c.seg3d = segment3_from_json(cj.at("seg3d"));
        qm.matches.correspondences.push_back(c);
        CandidateMatch m;
        m.query_segment = cj.value("query_segment", -1);
        m.database_image = cj.value("database_image", -1);
        m.database_segment = cj.value("database_segment", -1);
        m.map_segment = cj.value("map_segment", -1);
        m.overlap = cj.value("overlap", 0.0);
        m.residual = cj.value("residual", 0.0);
        qm.matches.selected.push_back(m);
      }
      if (e.contains("stats")) qm.matches.stats = stats_from_json(e.at("stats"));
      out.push_back(std::move(qm));
    }
    return out;
  } catch (const json::exception& e) {
    throw InvalidInput(std::string("malformed matches file: ") + e.what());
  }
}

// --- report ------------------------------------------------------------------

namespace {

json refinement_to_json(const RefinementResult& r, bool with_cost_trace) {
  json j{{"initial_cost", r.initial_cost},
         {"final_cost", r.final_cost},
         {"iterations", r.iterations},
         {"converged", r.converged},
         {"alpha", r.weights.alpha},
         {"beta", r.weights.beta},
         {"line_distance_cost", r.line_distance_cost},
         {"line_angle_cost", r.line_angle_cost},
         {"point_cost", r.point_cost},
         {"lines_behind_camera", r.lines_behind_camera},
         {"points_behind_camera", r.points_behind_camera}};
  if (with_cost_trace) j["cost_trace"] = r.cost_trace;
  return j;
}

json pose_error_to_json(const PoseError& e) {
  return json{{"translation_m", e.translation_m}, {"rotation_deg", e.rotation_deg}};
}

}  // namespace

std::string report_to_string(const PipelineResult& result, bool with_cost_traces) {
  json j;
  j["format"] = "plloc-report-v1";
  j["pose_convention"] = kPoseConvention;
  j["scores"] = {{"initial", score_to_json(result.initial_score)},
                 {"line_only", score_to_json(result.line_only_score)},
                 {"joint", score_to_json(result.joint_score)}};

  json build = json::object();
  build["total_segments"] = static_cast<int>(result.map_build.map.segments.size());
  json records = json::array();
  for (const ImageBuildRecord& r : result.map_build.records) {
    records.push_back(json{{"image_id", r.image_id},
                           {"segments_in", r.segments_in},
                           {"lifted", r.lifted},
                           {"kept", r.kept},
                           {"skipped", r.skipped},
                           {"skip_reason", r.skip_reason},
                           {"ransac_translation_dev", r.ransac_pose_translation_dev},
                           {"ransac_rotation_dev", r.ransac_pose_rotation_dev}});
  }
  build["images"] = records;
  j["map_build"] = build;
  j["match_stats"] = stats_to_json(result.match_stats);

  json queries = json::array();
  for (const QueryRecord& q : result.queries) {
    json e;
    e["camera_id"] = q.camera_id;
    e["matched_lines"] = q.matched_lines;
    e["point_count"] = q.point_count;
    e["line_only_fallback"] = q.line_only_fallback;
    e["joint_fallback"] = q.joint_fallback;
    e["initial_pose"] = pose_to_json(q.initial_pose);
    e["line_only_pose"] = pose_to_json(q.line_only_pose);
    e["joint_pose"] = pose_to_json(q.joint_pose);
    e["initial_error"] = pose_error_to_json(q.initial_error);
    e["line_only_error"] = pose_error_to_json(q.line_only_error);
    e["joint_error"] = pose_error_to_json(q.joint_error);
    e["line_only"] = refinement_to_json(q.line_only, with_cost_traces);
    e["joint"] = refinement_to_json(q.joint, with_cost_traces);
    queries.push_back(e);
  }
  j["queries"] = queries;
  return j.dump(2) + "\n";
}

void save_report(const PipelineResult& result, const std::string& path, bool with_cost_traces) {
  write_file(path, report_to_string(result, with_cost_traces));
}

ReportPoses load_report_poses(const std::string& path) {
  const json j = parse_file(path);
  try {
    ReportPoses poses;
    for (const json& q : j.at("queries")) {
      poses.camera_ids.push_back(q.at("camera_id").get<int>());
      poses.initial.push_back(pose_from_json(q.at("initial_pose")));
      poses.line_only.push_back(pose_from_json(q.at("line_only_pose")));
      poses.joint.push_back(pose_from_json(q.at("joint_pose")));
    }
    return poses;
  } catch (const json::exception& e) {
    throw InvalidInput(std::string("malformed report file: ") + e.what());
  }
}

// --- segment lists -----------------------------------------------------------

void save_segments(const std::vector<Segment2d>& segments, const std::string& path) {
  json j;
  j["format"] = "plloc-segments-v1";
  json list = json::array();
  for (const Segment2d& s : segments) list.push_back(segment2_to_json(s));
  j["segments"] = list;
  write_file(path, j.dump(2) + "\n");
}

std::vector<Segment2d> load_segments(const std::string& path) {
  const json j = parse_file(path);
  try {
    std::vector<Segment2d> out;
    for (const json& s : j.at("segments")) out.push_back(segment2_from_json(s));
    return out;
  } catch (const json::exception& e) {
    throw InvalidInput(std::string("malformed segments file: ") + e.what());
  }
}

}  // namespace plloc
