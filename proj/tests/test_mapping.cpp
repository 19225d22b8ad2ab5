#include <doctest.h>

#include <algorithm>

#include "plloc/line_mapping.hpp"
#include "plloc/rng.hpp"
#include "plloc/scene.hpp"
#include "test_utils.hpp"

using namespace plloc;
using testutil::random_pose;
using testutil::simple_intrinsics;

namespace {

// Per-pixel world coordinates of the fronto-parallel plane z = depth seen
// through K at the identity pose: the analytic back-projection oracle.
XyzMap plane_xyz_map(const CameraIntrinsicsd& k, int size, double depth) {
  XyzMap map(size, size);
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x)
      map.at(x, y) = Eigen::Vector3f(static_cast<float>(depth * (x - k.cx) / k.fx),
                                     static_cast<float>(depth * (y - k.cy) / k.fy),
                                     static_cast<float>(depth));
  return map;
}

Eigen::Vector3d plane_point(const CameraIntrinsicsd& k, double u, double v, double depth) {
  return {depth * (u - k.cx) / k.fx, depth * (v - k.cy) / k.fy, depth};
}

double point_line_distance(const Eigen::Vector3d& p, const Eigen::Vector3d& a,
                           const Eigen::Vector3d& b) {
  const Eigen::Vector3d dir = (b - a).normalized();
  const Eigen::Vector3d d = p - a;
  return (d - dir.dot(d) * dir).norm();
}

}  // namespace

TEST_CASE("lift_segment_to_3d back-projects a plane exactly") {
  const CameraIntrinsicsd k = simple_intrinsics();
  const XyzMap map = plane_xyz_map(k, 128, 2.0);
  const Segment3d seg = lift_segment_to_3d(Segment2d({64, 64}, {114, 64}), map);
  CHECK((seg.p_left - Eigen::Vector3d(0, 0, 2)).norm() < 1e-6);
  CHECK((seg.p_right - Eigen::Vector3d(1, 0, 2)).norm() < 1e-6);
}

TEST_CASE("lift requires valid depth samples") {
  XyzMap empty(64, 64);  // all NaN
  CHECK_THROWS_AS(lift_segment_to_3d(Segment2d({5, 5}, {40, 5}), empty), InsufficientDepth);

  // Invalidating just over half of the samples also fails the ratio test.
  const CameraIntrinsicsd k = simple_intrinsics();
  XyzMap half = plane_xyz_map(k, 128, 2.0);
  for (int x = 64; x <= 114; x += 2)
    half.at(x, 64) = Eigen::Vector3f::Constant(std::numeric_limits<float>::quiet_NaN());
  CHECK_THROWS_AS(lift_segment_to_3d(Segment2d({64, 64}, {114, 64}), half), InsufficientDepth);
}

TEST_CASE("lift is robust to 30 percent invalid samples") {
  const CameraIntrinsicsd k = simple_intrinsics();
  Rng rng(77);
  for (int trial = 0; trial < 20; ++trial) {
    XyzMap map = plane_xyz_map(k, 128, 2.0);
    // Knock out a random 30% of the integer sample pixels along the path.
    std::vector<int> xs;
    for (int x = 64; x <= 114; ++x) xs.push_back(x);
    int first = 128, last = -1;
    std::vector<bool> valid(xs.size(), true);
    for (std::size_t i = 0; i < xs.size(); ++i)
      if (rng.uniform01() < 0.3) {
        valid[i] = false;
        map.at(xs[i], 64) = Eigen::Vector3f::Constant(std::numeric_limits<float>::quiet_NaN());
      }
    for (std::size_t i = 0; i < xs.size(); ++i)
      if (valid[i]) {
        first = std::min(first, xs[i]);
        last = std::max(last, xs[i]);
      }
    if (last < 0 || (last - first) < 2) continue;

    const Segment3d seg = lift_segment_to_3d(Segment2d({64, 64}, {114, 64}), map);
    // Endpoints are the projections of the first and last valid samples.
    CHECK((seg.p_left - plane_point(k, first, 64, 2.0)).norm() < 1e-6);
    CHECK((seg.p_right - plane_point(k, last, 64, 2.0)).norm() < 1e-6);
    // And they lie on the fitted axis, which here is the true 3D line.
    CHECK(point_line_distance(seg.p_left, {0, 0, 2}, {1, 0, 2}) < 1e-9);
    CHECK(point_line_distance(seg.p_right, {0, 0, 2}, {1, 0, 2}) < 1e-9);
  }
}

namespace {

struct PnpFixture {
  CameraIntrinsicsd k{128.0, 128.0, 128.0, 128.0};
  PoseSE3d pose;
  std::vector<Eigen::Vector2d> points2d;
  std::vector<Eigen::Vector3d> points3d;

  explicit PnpFixture(std::uint64_t seed, int n) {
    Rng rng(seed);
    pose = random_pose(rng, 0.4, 0.5);
    const PoseSE3d inv = pose.inverse();
    while (static_cast<int>(points2d.size()) < n) {
      // Volume of points in front of the camera, expressed in world frame.
      const Eigen::Vector3d cam_point(rng.uniform(-1.5, 1.5), rng.uniform(-1.5, 1.5),
                                      rng.uniform(2.0, 6.0));
      const Eigen::Vector3d world = inv.apply(cam_point);
      const Eigen::Vector2d pix = project_point(k, pose, world);
      if (pix.x() < 0 || pix.x() > 255 || pix.y() < 0 || pix.y() > 255) continue;
      points2d.push_back(pix);
      points3d.push_back(world);
    }
  }
};

}  // namespace

TEST_CASE("pnp_ransac_filter on noiseless correspondences") {
  const PnpFixture fx(911, 40);
  RansacConfig cfg;
  cfg.seed = 17;
  const RansacResult result = pnp_ransac_filter(fx.points2d, fx.points3d, fx.k, cfg);
  CHECK(result.inlier_count == 40);
  for (auto flag : result.inliers) CHECK(flag == 1);
  const PoseError err = pose_error(result.pose, fx.pose);
  CHECK(err.translation_m < 1e-4);
  CHECK(err.rotation_deg < 1e-3);
}

TEST_CASE("pnp_ransac_filter flags exactly the displaced endpoints") {
  PnpFixture fx(912, 40);
  RansacConfig cfg;
  cfg.seed = 18;
  for (int i = 0; i < 5; ++i) fx.points2d[i * 7] += Eigen::Vector2d(50.0, 0.0);
  const RansacResult result = pnp_ransac_filter(fx.points2d, fx.points3d, fx.k, cfg);
  CHECK(result.inlier_count == 35);
  for (int i = 0; i < 40; ++i) {
    const bool displaced = i % 7 == 0 && i / 7 < 5;
    CHECK(result.inliers[i] == (displaced ? 0 : 1));
  }
}

TEST_CASE("pnp_ransac_filter preconditions") {
  const PnpFixture fx(913, 4);
  CHECK_THROWS_AS(pnp_ransac_filter(fx.points2d, fx.points3d, fx.k, RansacConfig{}),
                  TooFewCorrespondences);

  std::vector<Eigen::Vector2d> p2 = fx.points2d;
  p2.pop_back();
  CHECK_THROWS_AS(pnp_ransac_filter(p2, fx.points3d, fx.k, RansacConfig{}), LengthMismatch);

  RansacConfig bad;
  bad.min_sample = 3;
  CHECK_THROWS_AS(pnp_ransac_filter(fx.points2d, fx.points3d, fx.k, bad), InvalidInput);
}

TEST_CASE("pnp_ransac_filter rejects without a consensus") {
  PnpFixture fx(914, 20);
  Rng rng(915);
  // Only 5 of 20 correspondences remain valid: below the 30% floor.
  for (int i = 5; i < 20; ++i)
    fx.points2d[i] = Eigen::Vector2d(rng.uniform(0, 255), rng.uniform(0, 255));
  RansacConfig cfg;
  cfg.seed = 19;
  CHECK_THROWS_AS(pnp_ransac_filter(fx.points2d, fx.points3d, fx.k, cfg), NoConsensus);
}

TEST_CASE("pnp_ransac_filter is deterministic in the seed") {
  const PnpFixture fx(916, 30);
  RansacConfig cfg;
  cfg.seed = 77;
  const RansacResult a = pnp_ransac_filter(fx.points2d, fx.points3d, fx.k, cfg);
  const RansacResult b = pnp_ransac_filter(fx.points2d, fx.points3d, fx.k, cfg);
  CHECK(a.inliers == b.inliers);
  CHECK(a.pose.rotation == b.pose.rotation);
  CHECK(a.pose.translation == b.pose.translation);
}

TEST_CASE("pnp handles coplanar world points") {
  // All points on the z = 3 plane in camera frame; the planar solver path.
  Rng rng(917);
  const CameraIntrinsicsd k{128.0, 128.0, 128.0, 128.0};
  const PoseSE3d pose = random_pose(rng, 0.4, 0.5);
  const PoseSE3d inv = pose.inverse();
  std::vector<Eigen::Vector2d> p2;
  std::vector<Eigen::Vector3d> p3;
  while (p2.size() < 30) {
    const Eigen::Vector3d cam_point(rng.uniform(-2, 2), rng.uniform(-2, 2), 3.0);
    const Eigen::Vector3d world = inv.apply(cam_point);
    const Eigen::Vector2d pix = project_point(k, pose, world);
    if (pix.x() < 0 || pix.x() > 255 || pix.y() < 0 || pix.y() > 255) continue;
    p2.push_back(pix);
    p3.push_back(world);
  }
  RansacConfig cfg;
  cfg.seed = 20;
  const RansacResult result = pnp_ransac_filter(p2, p3, k, cfg);
  CHECK(result.inlier_count == 30);
  const PoseError err = pose_error(result.pose, pose);
  CHECK(err.translation_m < 1e-4);
  CHECK(err.rotation_deg < 1e-3);
}

namespace {

// One camera facing the z = 2 plane with axis-aligned integer-pixel
// segments: every lift sample lands exactly on a pixel, and with dyadic
// intrinsics the XYZ values are exact in float32, so lifted segments match
// the true 3D segments to machine precision.
MappingImage lattice_image(int id) {
  MappingImage image;
  image.id = id;
  image.intrinsics = testutil::dyadic_intrinsics();
  image.pose = PoseSE3d{};
  image.xyz = plane_xyz_map(image.intrinsics, 128, 2.0);
  image.segments.push_back(Segment2d({10, 10}, {60, 10}));
  image.segments.push_back(Segment2d({20, 30}, {20, 90}));
  image.segments.push_back(Segment2d({40, 50}, {100, 50}));
  image.segments.push_back(Segment2d({80, 20}, {80, 100}));
  image.segments.push_back(Segment2d({15, 110}, {95, 110}));
  return image;
}

}  // namespace

TEST_CASE("build_line_map recovers exact 3D lines on a lattice-aligned scene") {
  const MappingImage image = lattice_image(0);
  RansacConfig cfg;
  cfg.seed = 4;
  const BuildResult build = build_line_map({image}, cfg);
  REQUIRE(build.map.segments.size() == image.segments.size());
  for (std::size_t s = 0; s < image.segments.size(); ++s) {
    const int idx = build.map.find_by_source(0, static_cast<int>(s));
    REQUIRE(idx >= 0);
    const Segment3d& lifted = build.map.segments[idx];
    const Eigen::Vector3d gt_left =
        plane_point(image.intrinsics, image.segments[s].p_left.x(),
                    image.segments[s].p_left.y(), 2.0);
    const Eigen::Vector3d gt_right =
        plane_point(image.intrinsics, image.segments[s].p_right.x(),
                    image.segments[s].p_right.y(), 2.0);
    CHECK((lifted.p_left - gt_left).norm() < 1e-6);
    CHECK((lifted.p_right - gt_right).norm() < 1e-6);
    CHECK(lifted.source_image == 0);
    CHECK(lifted.source_segment == static_cast<int>(s));
  }
  CHECK(build.records.size() == 1);
  CHECK(build.records[0].kept == 5);
}

TEST_CASE("an image with no valid depth contributes nothing") {
  const MappingImage good = lattice_image(0);
  MappingImage bad = lattice_image(1);
  bad.xyz = XyzMap(128, 128);  // all invalid
  RansacConfig cfg;
  cfg.seed = 4;
  const BuildResult both = build_line_map({good, bad}, cfg);
  const BuildResult alone = build_line_map({good}, cfg);
  CHECK(both.map.segments.size() == alone.map.segments.size());
  REQUIRE(both.records.size() == 2);
  CHECK(both.records[1].skipped);
  CHECK(both.records[1].lifted == 0);
}

TEST_CASE("build_line_map on a generated scene") {
  SceneGenConfig gen;
  gen.seed = 6;
  gen.n_cameras = 6;
  gen.n_queries = 2;
  gen.n_lines = 80;
  gen.n_points = 120;
  const Scene scene = generate_scene(gen);
  RansacConfig cfg;
  cfg.seed = 1;
  const BuildResult build = build_line_map(scene.mapping_images(), cfg);

  int total_obs = 0;
  for (int id : scene.database_ids()) total_obs += scene.observations.at(id).size();
  CHECK(build.map.segments.size() >= 0.98 * total_obs);

  // Retained segments reproject into their source image within the inlier
  // threshold under the ground-truth pose, and stay near the true 3D line.
  // The endpoint pairing is orientation-free: near-vertical projections can
  // flip canonical order relative to the observation.
  for (const Segment3d& seg : build.map.segments) {
    const SceneCamera& cam = scene.camera(seg.source_image);
    const ObservedSegment& obs = scene.observations.at(seg.source_image)[seg.source_segment];
    const Segment2d proj = project_segment(scene.intrinsics, cam.pose, seg);
    const double straight = std::max((proj.p_left - obs.seg.p_left).norm(),
                                     (proj.p_right - obs.seg.p_right).norm());
    const double crossed = std::max((proj.p_left - obs.seg.p_right).norm(),
                                    (proj.p_right - obs.seg.p_left).norm());
    CHECK(std::min(straight, crossed) < cfg.inlier_threshold);
    const Segment3d& gt = scene.lines3d[obs.line_id];
    CHECK(point_line_distance(seg.p_left, gt.p_left, gt.p_right) < 0.05);
    CHECK(point_line_distance(seg.p_right, gt.p_left, gt.p_right) < 0.05);
  }

  // Deterministic and independent of the image order.
  const BuildResult again = build_line_map(scene.mapping_images(), cfg);
  REQUIRE(again.map.segments.size() == build.map.segments.size());
  for (std::size_t i = 0; i < build.map.segments.size(); ++i) {
    CHECK(build.map.segments[i].p_left == again.map.segments[i].p_left);
    CHECK(build.map.segments[i].p_right == again.map.segments[i].p_right);
  }
  std::vector<MappingImage> reversed = scene.mapping_images();
  std::reverse(reversed.begin(), reversed.end());
  const BuildResult permuted = build_line_map(reversed, cfg);
  REQUIRE(permuted.map.segments.size() == build.map.segments.size());
  for (std::size_t i = 0; i < build.map.segments.size(); ++i) {
    CHECK(build.map.segments[i].p_left == permuted.map.segments[i].p_left);
    CHECK(build.map.segments[i].source_image == permuted.map.segments[i].source_image);
    CHECK(build.map.segments[i].source_segment == permuted.map.segments[i].source_segment);
  }
}

TEST_CASE("depth-corrupted lines are filtered, clean lines survive") {
  SceneGenConfig gen;
  gen.seed = 8;
  gen.n_cameras = 8;
  gen.n_queries = 1;
  gen.n_lines = 100;
  gen.n_points = 120;
  gen.depth_outlier_fraction = 0.10;
  const Scene scene = generate_scene(gen);
  const BuildResult build = build_line_map(scene.mapping_images(), RansacConfig{});

  int corrupted = 0, corrupted_rejected = 0, clean = 0, clean_kept = 0;
  for (int id : scene.database_ids()) {
    const auto& obs = scene.observations.at(id);
    for (int i = 0; i < static_cast<int>(obs.size()); ++i) {
      const bool in_map = build.map.find_by_source(id, i) >= 0;
      if (obs[i].depth_corrupted) {
        ++corrupted;
        corrupted_rejected += !in_map;
      } else {
        ++clean;
        clean_kept += in_map;
      }
    }
  }
  REQUIRE(corrupted > 0);
  CHECK(corrupted_rejected >= 0.95 * corrupted);
  CHECK(clean_kept >= 0.95 * clean);
}
