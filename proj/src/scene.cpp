#include "plloc/scene.hpp"

#include <algorithm>
#include <cmath>

#include "plloc/error.hpp"
#include "plloc/rng.hpp"

namespace plloc {

const SceneCamera& Scene::camera(int id) const {
  for (const SceneCamera& cam : cameras)
    if (cam.id == id) return cam;
  throw InvalidInput("unknown camera id");
}

std::vector<int> Scene::database_ids() const {
  std::vector<int> ids;
  for (const SceneCamera& cam : cameras)
    if (cam.database) ids.push_back(cam.id);
  return ids;
}

std::vector<Segment2d> Scene::segments_of(int camera_id) const {
  std::vector<Segment2d> out;
  const auto it = observations.find(camera_id);
  if (it == observations.end()) return out;
  out.reserve(it->second.size());
  for (const ObservedSegment& obs : it->second) out.push_back(obs.seg);
  return out;
}

std::vector<MappingImage> Scene::mapping_images() const {
  std::vector<MappingImage> out;
  for (int id : database_ids()) {
    MappingImage image;
    image.id = id;
    image.segments = segments_of(id);
    image.xyz = xyz_maps.at(id);
    image.pose = camera(id).pose;
    image.intrinsics = intrinsics;
    out.push_back(std::move(image));
  }
  return out;
}

std::vector<DatabaseImage> Scene::database_images() const {
  std::vector<DatabaseImage> out;
  for (int id : database_ids()) {
    DatabaseImage image;
    image.id = id;
    image.segments = segments_of(id);
    image.pose = camera(id).pose;
    image.intrinsics = intrinsics;
    out.push_back(std::move(image));
  }
  return out;
}

void Scene::validate() const {
  if (intrinsics.fx <= 0.0 || intrinsics.fy <= 0.0) throw InvalidInput("invalid intrinsics");
  if (image_width <= 0 || image_height <= 0) throw InvalidInput("invalid image size");
  std::vector<int> ids;
  for (const SceneCamera& cam : cameras) {
    ids.push_back(cam.id);
    if (!cam.pose.is_valid()) throw InvalidInput("camera pose is not a rigid transform");
  }
  std::sort(ids.begin(), ids.end());
  if (std::adjacent_find(ids.begin(), ids.end()) != ids.end())
    throw InvalidInput("duplicate camera ids");
  for (const QueryView& q : queries) {
    camera(q.camera_id);
    if (!q.initial_pose.is_valid()) throw InvalidInput("query initial pose is invalid");
  }
}

void SceneGenConfig::validate() const {
  if (n_cameras < 1 || n_queries < 0 || n_lines < 1 || n_points < 0)
    throw InvalidInput("scene counts must be positive");
  if (room_extent <= 0.0) throw InvalidInput("room extent must be positive");
  if (pixel_noise_sigma < 0.0 || init_perturb_translation < 0.0 ||
      init_perturb_rotation_deg < 0.0)
    throw InvalidInput("noise and perturbation bounds must be non-negative");
  if (depth_outlier_fraction < 0.0 || depth_outlier_fraction > 1.0 ||
      point_outlier_fraction < 0.0 || point_outlier_fraction > 1.0)
    throw InvalidInput("outlier fractions must be in [0, 1]");
  if (image_width <= 0 || image_height <= 0 || focal <= 0.0)
    throw InvalidInput("image geometry must be positive");
  if (max_placement_attempts < 1) throw InvalidInput("placement attempts must be >= 1");
}

namespace {

/// Axis-aligned wall of the box room, parameterized by two in-plane axes.
struct Wall {
  Eigen::Vector3d origin;
  Eigen::Vector3d u_axis;
  Eigen::Vector3d v_axis;
  double u_extent;
  double v_extent;

  Eigen::Vector3d at(double u, double v) const { return origin + u * u_axis + v * v_axis; }
};

std::vector<Wall> room_walls(double e) {
  const Eigen::Vector3d x(1, 0, 0), y(0, 1, 0), z(0, 0, 1);
  return {
      {{0, 0, 0}, x, y, e, e},                          // floor
      {{0, 0, e}, x, y, e, e},                          // ceiling
      {{0, 0, 0}, y, z, e, e},                          // wall x = 0
      {{e, 0, 0}, y, z, e, e},                          // wall x = e
      {{0, 0, 0}, x, z, e, e},                          // wall y = 0
      {{0, e, 0}, x, z, e, e},                          // wall y = e
  };
}

std::vector<Segment3d> room_edges(double e, double inset) {
  const double a = inset, b = e - inset;
  std::vector<Segment3d> edges;
  const auto add = [&](double x0, double y0, double z0, double x1, double y1, double z1) {
    Segment3d s;
    s.p_left = Eigen::Vector3d(x0, y0, z0);
    s.p_right = Eigen::Vector3d(x1, y1, z1);
    edges.push_back(s);
  };
  // Floor and ceiling perimeters, then the vertical corner edges.
  for (double zz : {0.0, e}) {
    add(a, 0, zz, b, 0, zz);
    add(a, e, zz, b, e, zz);
    add(0, a, zz, 0, b, zz);
    add(e, a, zz, e, b, zz);
  }
  add(0, 0, a, 0, 0, b);
  add(e, 0, a, e, 0, b);
  add(0, e, a, 0, e, b);
  add(e, e, a, e, e, b);
  return edges;
}

/// World ray of an image pixel and its exit point through the room box.
Eigen::Vector3d box_exit(const Eigen::Vector3d& center, const Eigen::Vector3d& dir, double e) {
  double t_exit = std::numeric_limits<double>::infinity();
  for (int axis = 0; axis < 3; ++axis) {
    if (std::abs(dir(axis)) < 1e-15) continue;
    const double boundary = dir(axis) > 0.0 ? e : 0.0;
    const double t = (boundary - center(axis)) / dir(axis);
    if (t > 0.0 && t < t_exit) t_exit = t;
  }
  return center + t_exit * dir;
}

PoseSE3d look_at(const Eigen::Vector3d& position, const Eigen::Vector3d& target) {
  const Eigen::Vector3d forward = (target - position).normalized();
  // Camera x axis horizontal; degenerate when the view is vertical.
  Eigen::Vector3d right = forward.cross(Eigen::Vector3d(0, 0, -1));
  right.normalize();
  const Eigen::Vector3d down = forward.cross(right);
  PoseSE3d pose;
  pose.rotation.row(0) = right.transpose();
  pose.rotation.row(1) = down.transpose();
  pose.rotation.row(2) = forward.transpose();
  pose.translation = -pose.rotation * position;
  return pose;
}

struct Visibility {
  const SceneGenConfig* cfg;
  const CameraIntrinsicsd* intr;
  double margin;
  double min_depth = 0.2;
  double min_proj_length = 8.0;

  bool point(const PoseSE3d& pose, const Eigen::Vector3d& p, Eigen::Vector2d* pix = nullptr) const {
    const Eigen::Vector3d pc = pose.apply(p);
    if (pc.z() <= min_depth) return false;
    const Eigen::Vector2d q(intr->fx * pc.x() / pc.z() + intr->cx,
                            intr->fy * pc.y() / pc.z() + intr->cy);
    if (q.x() < margin || q.x() > cfg->image_width - 1 - margin || q.y() < margin ||
        q.y() > cfg->image_height - 1 - margin)
      return false;
    if (pix != nullptr) *pix = q;
    return true;
  }

  bool line(const PoseSE3d& pose, const Segment3d& seg, Segment2d* proj = nullptr) const {
    Eigen::Vector2d a, b;
    if (!point(pose, seg.p_left, &a) || !point(pose, seg.p_right, &b)) return false;
    if ((a - b).norm() < min_proj_length) return false;
    if (proj != nullptr) *proj = Segment2d(a, b, 1.0);
    return true;
  }
};

}  // namespace

PoseSE3d perturb_pose(const PoseSE3d& pose, double max_translation_m, double max_rotation_deg,
                      std::uint64_t seed) {
  if (max_translation_m < 0.0 || max_rotation_deg < 0.0)
    throw InvalidInput("perturbation bounds must be non-negative");
  Rng rng(seed);
  const Eigen::Vector3d t_axis = rng.unit_vector();
  const double t_mag = rng.uniform01() * max_translation_m;
  const Eigen::Vector3d r_axis = rng.unit_vector();
  const double r_mag = rng.uniform01() * max_rotation_deg * M_PI / 180.0;

  const Eigen::Vector3d center = pose.center() + t_mag * t_axis;
  PoseSE3d out;
  out.rotation = pose.rotation * rotation_from_axis_angle<double>(r_axis * r_mag);
  out.translation = -out.rotation * center;
  return out;
}

Scene generate_scene(const SceneGenConfig& cfg) {
  cfg.validate();
  Rng rng(cfg.seed);

  Scene scene;
  scene.image_width = cfg.image_width;
  scene.image_height = cfg.image_height;
  scene.intrinsics = {cfg.focal, cfg.focal, cfg.image_width / 2.0, cfg.image_height / 2.0};

  const double e = cfg.room_extent;
  const std::vector<Wall> walls = room_walls(e);
  const double wall_inset = 0.02 * e;

  // 3D lines: room edges first, then random segments on the walls.
  const std::vector<Segment3d> edges = room_edges(e, wall_inset);
  for (int i = 0; i < cfg.n_lines; ++i) {
    if (i < static_cast<int>(edges.size())) {
      scene.lines3d.push_back(edges[i]);
      continue;
    }
    Segment3d seg;
    while (true) {
      const Wall& wall = walls[rng.uniform_int(static_cast<int>(walls.size()))];
      const double u0 = rng.uniform(wall_inset, wall.u_extent - wall_inset);
      const double v0 = rng.uniform(wall_inset, wall.v_extent - wall_inset);
      const double phi = rng.uniform(0.0, M_PI);
      const double len = rng.uniform(0.4, 1.5);
      const double u1 = u0 + len * std::cos(phi);
      const double v1 = v0 + len * std::sin(phi);
      if (u1 < wall_inset || u1 > wall.u_extent - wall_inset || v1 < wall_inset ||
          v1 > wall.v_extent - wall_inset)
        continue;
      seg.p_left = wall.at(u0, v0);
      seg.p_right = wall.at(u1, v1);
      break;
    }
    scene.lines3d.push_back(seg);
  }

  // 3D points on the walls.
  for (int i = 0; i < cfg.n_points; ++i) {
    const Wall& wall = walls[rng.uniform_int(static_cast<int>(walls.size()))];
    scene.points3d.push_back(wall.at(rng.uniform(wall_inset, wall.u_extent - wall_inset),
                                     rng.uniform(wall_inset, wall.v_extent - wall_inset)));
  }

  const double margin = std::max(2.0, 3.0 * cfg.pixel_noise_sigma);
  const Visibility vis{&cfg, &scene.intrinsics, margin};

  const auto count_visible = [&](const PoseSE3d& pose, const std::vector<char>* line_mask) {
    int lines = 0, points = 0;
    for (std::size_t i = 0; i < scene.lines3d.size(); ++i) {
      if (line_mask != nullptr && !(*line_mask)[i]) continue;
      lines += vis.line(pose, scene.lines3d[i]);
    }
    for (const Eigen::Vector3d& p : scene.points3d) points += vis.point(pose, p);
    return std::make_pair(lines, points);
  };

  const auto place_camera = [&](const std::vector<char>* line_mask) {
    for (int attempt = 0; attempt < cfg.max_placement_attempts; ++attempt) {
      const Eigen::Vector3d position(rng.uniform(0.15 * e, 0.85 * e),
                                     rng.uniform(0.15 * e, 0.85 * e),
                                     rng.uniform(0.25 * e, 0.75 * e));
      const Wall& wall = walls[rng.uniform_int(static_cast<int>(walls.size()))];
      const Eigen::Vector3d target = wall.at(rng.uniform(0.2 * e, 0.8 * e),
                                             rng.uniform(0.2 * e, 0.8 * e));
      if ((target - position).norm() < 0.3 * e) continue;
      const Eigen::Vector3d forward = (target - position).normalized();
      if (std::abs(forward.z()) > 0.9) continue;
      const PoseSE3d pose = look_at(position, target);
      const auto [lines, points] = count_visible(pose, line_mask);
      if (lines >= cfg.min_visible_lines && points >= cfg.min_visible_points) return pose;
    }
    throw InfeasibleConfig("could not place a camera meeting the visibility minimums");
  };

  // Database cameras.
  for (int i = 0; i < cfg.n_cameras; ++i)
    scene.cameras.push_back({i, place_camera(nullptr), true});

  // Lines that at least one database camera observes; queries must co-see
  // these, otherwise matching has nothing to work with.
  std::vector<char> db_visible(scene.lines3d.size(), 0);
  for (int i = 0; i < cfg.n_cameras; ++i)
    for (std::size_t l = 0; l < scene.lines3d.size(); ++l)
      if (!db_visible[l] && vis.line(scene.cameras[i].pose, scene.lines3d[l])) db_visible[l] = 1;

  for (int i = 0; i < cfg.n_queries; ++i)
    scene.cameras.push_back({cfg.n_cameras + i, place_camera(&db_visible), false});

  // 2D observations for every camera, in camera and line id order.
  for (const SceneCamera& cam : scene.cameras) {
    std::vector<ObservedSegment> obs;
    for (std::size_t l = 0; l < scene.lines3d.size(); ++l) {
      Segment2d proj;
      if (!vis.line(cam.pose, scene.lines3d[l], &proj)) continue;
      Eigen::Vector2d a = proj.p_left, b = proj.p_right;
      if (cfg.pixel_noise_sigma > 0.0) {
        a.x() += rng.normal(0.0, cfg.pixel_noise_sigma);
        a.y() += rng.normal(0.0, cfg.pixel_noise_sigma);
        b.x() += rng.normal(0.0, cfg.pixel_noise_sigma);
        b.y() += rng.normal(0.0, cfg.pixel_noise_sigma);
        const auto clamp = [&](Eigen::Vector2d& p) {
          p.x() = std::clamp(p.x(), 0.0, cfg.image_width - 1.0);
          p.y() = std::clamp(p.y(), 0.0, cfg.image_height - 1.0);
        };
        clamp(a);
        clamp(b);
      }
      const Segment2d noisy(a, b, 1.0);
      if (noisy.length() < kMinSegmentLength) continue;
      obs.push_back({noisy, static_cast<int>(l), false});
    }
    scene.observations[cam.id] = std::move(obs);
  }

  // Analytic XYZ maps for database cameras; pixel (x, y) holds the room hit
  // of the ray through exactly (x, y).
  const Eigen::Matrix3d k_inv = scene.intrinsics.inverse_matrix();
  for (const SceneCamera& cam : scene.cameras) {
    if (!cam.database) continue;
    XyzMap map(cfg.image_width, cfg.image_height);
    const Eigen::Vector3d center = cam.pose.center();
    const Eigen::Matrix3d r_t = cam.pose.rotation.transpose();
    for (int y = 0; y < cfg.image_height; ++y) {
      for (int x = 0; x < cfg.image_width; ++x) {
        const Eigen::Vector3d dir = r_t * (k_inv * Eigen::Vector3d(x, y, 1.0));
        map.at(x, y) = box_exit(center, dir, e).cast<float>();
      }
    }

    // Depth corruption: rigidly displace the XYZ samples along the chosen
    // observations' lift paths. Pixels sampled by more than one observation
    // are left intact so corruption stays per-line, and the displacement is
    // kept away from the viewing direction (a displacement along the rays
    // would be invisible to any reprojection test).
    auto& obs = scene.observations[cam.id];
    const auto path_pixels = [&](const Segment2d& seg) {
      std::vector<std::pair<int, int>> pixels;
      const int steps = static_cast<int>(std::ceil(seg.length()));
      for (int k = 0; k <= steps; ++k) {
        const double t = steps > 0 ? static_cast<double>(k) / steps : 0.0;
        const Eigen::Vector2d p = seg.p_left + t * (seg.p_right - seg.p_left);
        pixels.emplace_back(static_cast<int>(std::lround(p.x())),
                            static_cast<int>(std::lround(p.y())));
      }
      std::sort(pixels.begin(), pixels.end());
      pixels.erase(std::unique(pixels.begin(), pixels.end()), pixels.end());
      return pixels;
    };
    std::vector<std::uint8_t> owners(map.data.size(), 0);
    for (const ObservedSegment& o : obs)
      for (const auto& [px, py] : path_pixels(o.seg))
        if (map.in_bounds(px, py)) {
          auto& count = owners[static_cast<std::size_t>(py) * map.width + px];
          if (count < 2) ++count;
        }
    for (ObservedSegment& o : obs) {
      if (rng.uniform01() >= cfg.depth_outlier_fraction) continue;
      o.depth_corrupted = true;
      const Eigen::Vector3d view_dir =
          (scene.lines3d[o.line_id].midpoint() - center).normalized();
      Eigen::Vector3d direction;
      do {
        direction = rng.unit_vector();
      } while (std::abs(direction.dot(view_dir)) > 0.8);
      const Eigen::Vector3f offset = (direction * rng.uniform(0.5, 1.0)).cast<float>();
      for (const auto& [px, py] : path_pixels(o.seg)) {
        if (!map.in_bounds(px, py)) continue;
        if (owners[static_cast<std::size_t>(py) * map.width + px] == 1) map.at(px, py) += offset;
      }
    }
    scene.xyz_maps.emplace(cam.id, std::move(map));
  }

  // Queries: perturbed initial poses and point correspondence inliers.
  for (int i = 0; i < cfg.n_queries; ++i) {
    const SceneCamera& cam = scene.cameras[cfg.n_cameras + i];
    QueryView query;
    query.camera_id = cam.id;
    query.initial_pose =
        perturb_pose(cam.pose, cfg.init_perturb_translation, cfg.init_perturb_rotation_deg,
                     Rng::mix(cfg.seed, 0x71000 + static_cast<std::uint64_t>(cam.id)));
    for (const Eigen::Vector3d& p : scene.points3d) {
      Eigen::Vector2d pix;
      if (!vis.point(cam.pose, p, &pix)) continue;
      PointCorrespondenced corr;
      corr.p3d = p;
      if (rng.uniform01() < cfg.point_outlier_fraction) {
        corr.p2d = Eigen::Vector2d(rng.uniform(0.0, cfg.image_width - 1.0),
                                   rng.uniform(0.0, cfg.image_height - 1.0));
      } else {
        corr.p2d = pix + Eigen::Vector2d(rng.normal(0.0, cfg.pixel_noise_sigma),
                                         rng.normal(0.0, cfg.pixel_noise_sigma));
      }
      query.points.push_back(corr);
    }
    scene.queries.push_back(std::move(query));
  }

  return scene;
}

LocalizationScore evaluate_localization(const std::vector<PoseSE3d>& estimates,
                                        const std::vector<PoseSE3d>& ground_truth) {
  if (estimates.size() != ground_truth.size() || estimates.empty())
    throw LengthMismatch("estimate and ground-truth pose lists must have equal, non-zero length");
  int c025 = 0, c05 = 0, c1 = 0;
  for (std::size_t i = 0; i < estimates.size(); ++i) {
    const PoseError err = pose_error(estimates[i], ground_truth[i]);
    if (err.rotation_deg <= 10.0) {
      c025 += err.translation_m <= 0.25;
      c05 += err.translation_m <= 0.5;
      c1 += err.translation_m <= 1.0;
    }
  }
  const double n = static_cast<double>(estimates.size());
  return {100.0 * c025 / n, 100.0 * c05 / n, 100.0 * c1 / n};
}

}  // namespace plloc
