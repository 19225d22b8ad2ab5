#include "plloc/line_mapping.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Dense>

#include "plloc/error.hpp"
#include "plloc/rng.hpp"

namespace plloc {

void RansacConfig::validate() const {
  if (iterations < 1) throw InvalidInput("RANSAC iterations must be >= 1");
  if (inlier_threshold <= 0.0) throw InvalidInput("RANSAC inlier threshold must be positive");
  if (min_sample < 6) throw InvalidInput("RANSAC minimal sample must be >= 6 for DLT");
  if (min_inlier_ratio <= 0.0 || min_inlier_ratio > 1.0)
    throw InvalidInput("RANSAC minimum inlier ratio must be in (0, 1]");
}

Segment3d lift_segment_to_3d(const Segment2d& seg, const XyzMap& xyz) {
  const int steps = static_cast<int>(std::ceil(seg.length()));
  const int n_samples = steps + 1;

  std::vector<Eigen::Vector3d> samples;
  samples.reserve(n_samples);
  int first_valid = -1, last_valid = -1;
  for (int k = 0; k < n_samples; ++k) {
    const double t = steps > 0 ? static_cast<double>(k) / steps : 0.0;
    const Eigen::Vector2d p = seg.p_left + t * (seg.p_right - seg.p_left);
    const int px = static_cast<int>(std::lround(p.x()));
    const int py = static_cast<int>(std::lround(p.y()));
    if (!xyz.valid(px, py)) continue;
    if (first_valid < 0) first_valid = static_cast<int>(samples.size());
    last_valid = static_cast<int>(samples.size());
    samples.push_back(xyz.at(px, py).cast<double>());
  }

  if (samples.size() < 2 || 2 * samples.size() < static_cast<std::size_t>(n_samples))
    throw InsufficientDepth("too few valid depth samples along the segment");

  Eigen::Vector3d centroid = Eigen::Vector3d::Zero();
  for (const auto& s : samples) centroid += s;
  centroid /= static_cast<double>(samples.size());

  Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
  for (const auto& s : samples) {
    const Eigen::Vector3d d = s - centroid;
    cov += d * d.transpose();
  }
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> eig(cov);
  const Eigen::Vector3d axis = eig.eigenvectors().col(2);  // largest eigenvalue

  const auto project_on_axis = [&](const Eigen::Vector3d& p) {
    return centroid + axis.dot(p - centroid) * axis;
  };

  Segment3d out;
  out.p_left = project_on_axis(samples[first_valid]);
  out.p_right = project_on_axis(samples[last_valid]);
  if (!(out.length() > 0.0)) throw InsufficientDepth("lifted segment has zero extent");
  return out;
}

namespace {

/// DLT pose from >= 6 normalized 2D-3D pairs. Rotation is recovered by
/// orthonormalizing the 3x3 factor of the projection matrix.
bool solve_dlt_pose(const std::vector<Eigen::Vector3d>& rays,
                    const std::vector<Eigen::Vector3d>& world, const Eigen::Vector3d& centroid,
                    double scale, PoseSE3d& pose) {
  const auto n = static_cast<Eigen::Index>(rays.size());
  const double inv_scale = 1.0 / scale;

  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(2 * n, 12);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Eigen::Vector3d w = (world[i] - centroid) * inv_scale;
    const Eigen::Vector4d wh(w.x(), w.y(), w.z(), 1.0);
    const double u = rays[i].x() / rays[i].z();
    const double v = rays[i].y() / rays[i].z();
    a.block<1, 4>(2 * i, 0) = -wh.transpose();
    a.block<1, 4>(2 * i, 8) = u * wh.transpose();
    a.block<1, 4>(2 * i + 1, 4) = -wh.transpose();
    a.block<1, 4>(2 * i + 1, 8) = v * wh.transpose();
  }

  Eigen::JacobiSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeThinV);
  const Eigen::VectorXd p = svd.matrixV().col(11);
  Eigen::Matrix<double, 3, 4> proj;
  proj.row(0) = p.segment<4>(0).transpose();
  proj.row(1) = p.segment<4>(4).transpose();
  proj.row(2) = p.segment<4>(8).transpose();

  Eigen::Matrix3d m = proj.leftCols<3>();
  Eigen::Vector3d t = proj.col(3);
  if (m.determinant() < 0.0) {
    m = -m;
    t = -t;
  }

  Eigen::JacobiSVD<Eigen::Matrix3d> msvd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const double sigma = msvd.singularValues().mean();
  if (!(sigma > 1e-12)) return false;
  Eigen::Matrix3d r = msvd.matrixU() * msvd.matrixV().transpose();
  if (r.determinant() < 0.0) r = -r;  // cannot happen once det(m) > 0, kept as a guard

  pose.rotation = r;
  // Undo the world conditioning X' = (X - c)/s: M ~ sR and m ~ Rc + t up to
  // a common factor, so t = (m / sigma) * s - R c.
  pose.translation = t / sigma * scale - r * centroid;
  return pose.translation.allFinite() && pose.rotation.allFinite();
}

/// Pose from coplanar world points via a plane-to-image homography DLT. The
/// full 3x4 DLT is rank deficient in this configuration. Returns the two
/// sign candidates of the decomposition.
void solve_planar_pose(const std::vector<Eigen::Vector3d>& rays,
                       const std::vector<Eigen::Vector3d>& world,
                       const Eigen::Vector3d& centroid, const Eigen::Matrix3d& axes,
                       std::vector<PoseSE3d>& out) {
  const auto n = static_cast<Eigen::Index>(rays.size());
  const Eigen::Vector3d b1 = axes.col(2);  // in-plane, largest spread
  const Eigen::Vector3d b2 = axes.col(1);

  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(2 * n, 9);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Eigen::Vector3d d = world[i] - centroid;
    const Eigen::Vector3d s(b1.dot(d), b2.dot(d), 1.0);
    const double u = rays[i].x() / rays[i].z();
    const double v = rays[i].y() / rays[i].z();
    a.block<1, 3>(2 * i, 0) = -s.transpose();
    a.block<1, 3>(2 * i, 6) = u * s.transpose();
    a.block<1, 3>(2 * i + 1, 3) = -s.transpose();
    a.block<1, 3>(2 * i + 1, 6) = v * s.transpose();
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeThinV);
  const Eigen::VectorXd p = svd.matrixV().col(8);
  Eigen::Matrix3d h;
  h.row(0) = p.segment<3>(0).transpose();
  h.row(1) = p.segment<3>(3).transpose();
  h.row(2) = p.segment<3>(6).transpose();

  // X_cam = s1 (R b1) + s2 (R b2) + (R c + t), so H ~ [R b1 | R b2 | R c + t].
  const double lambda = (h.col(0).norm() + h.col(1).norm()) / 2.0;
  if (!(lambda > 1e-12)) return;
  for (double sign : {1.0, -1.0}) {
    const Eigen::Matrix3d hs = h * (sign / lambda);
    Eigen::Matrix<double, 3, 2> q;
    q.col(0) = hs.col(0);
    q.col(1) = hs.col(1);
    Eigen::JacobiSVD<Eigen::Matrix<double, 3, 2>> qsvd(q,
                                                       Eigen::ComputeFullU | Eigen::ComputeFullV);
    const Eigen::Matrix<double, 3, 2> r12 =
        qsvd.matrixU().leftCols<2>() * qsvd.matrixV().transpose();
    const Eigen::Vector3d r1 = r12.col(0), r2 = r12.col(1);
    // R maps (b1, b2, b1 x b2) onto (r1, r2, r1 x r2).
    Eigen::Matrix3d rotated;
    rotated << r1, r2, r1.cross(r2);
    Eigen::Matrix3d basis;
    basis << b1, b2, b1.cross(b2);
    PoseSE3d pose;
    pose.rotation = rotated * basis.transpose();
    pose.translation = hs.col(2) - pose.rotation * centroid;
    if (pose.rotation.allFinite() && pose.translation.allFinite()) out.push_back(pose);
  }
}

int count_inliers(const std::vector<Eigen::Vector2d>& points2d,
                  const std::vector<Eigen::Vector3d>& points3d, const CameraIntrinsicsd& intr,
                  const PoseSE3d& pose, double threshold, std::vector<std::uint8_t>* flags) {
  int count = 0;
  for (std::size_t i = 0; i < points2d.size(); ++i) {
    bool inlier = false;
    const Eigen::Vector3d pc = pose.apply(points3d[i]);
    if (pc.z() > kDepthEpsilon) {
      const Eigen::Vector2d proj(intr.fx * pc.x() / pc.z() + intr.cx,
                                 intr.fy * pc.y() / pc.z() + intr.cy);
      inlier = (proj - points2d[i]).norm() < threshold;
    }
    if (flags != nullptr) (*flags)[i] = inlier ? 1 : 0;
    count += inlier;
  }
  return count;
}

}  // namespace

RansacResult pnp_ransac_filter(const std::vector<Eigen::Vector2d>& points2d,
                               const std::vector<Eigen::Vector3d>& points3d,
                               const CameraIntrinsicsd& intr, const RansacConfig& cfg) {
  cfg.validate();
  if (points2d.size() != points3d.size())
    throw LengthMismatch("2D and 3D correspondence lists differ in length");
  const int n = static_cast<int>(points2d.size());
  if (n < cfg.min_sample)
    throw TooFewCorrespondences("fewer correspondences than the RANSAC minimal sample");

  std::vector<Eigen::Vector3d> rays(points2d.size());
  const Eigen::Matrix3d k_inv = intr.inverse_matrix();
  for (int i = 0; i < n; ++i)
    rays[i] = k_inv * Eigen::Vector3d(points2d[i].x(), points2d[i].y(), 1.0);

  Rng rng(cfg.seed);
  std::vector<int> indices(n);
  for (int i = 0; i < n; ++i) indices[i] = i;

  int best_count = -1;
  PoseSE3d best_pose;
  std::vector<Eigen::Vector3d> sample_rays(cfg.min_sample), sample_world(cfg.min_sample);
  std::vector<PoseSE3d> candidates;

  for (int it = 0; it < cfg.iterations; ++it) {
    // Partial Fisher-Yates draw of min_sample distinct indices.
    for (int k = 0; k < cfg.min_sample; ++k) {
      const int j = k + rng.uniform_int(n - k);
      std::swap(indices[k], indices[j]);
      sample_rays[k] = rays[indices[k]];
      sample_world[k] = points3d[indices[k]];
    }

    // Spread of the sampled world points decides between the general DLT
    // and the planar solver (the 3x4 DLT is rank deficient on coplanar
    // points).
    Eigen::Vector3d centroid = Eigen::Vector3d::Zero();
    for (const auto& w : sample_world) centroid += w;
    centroid /= static_cast<double>(cfg.min_sample);
    Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
    double scale = 0.0;
    for (const auto& w : sample_world) {
      const Eigen::Vector3d d = w - centroid;
      cov += d * d.transpose();
      scale += d.norm();
    }
    scale /= static_cast<double>(cfg.min_sample);
    if (scale < 1e-9) continue;
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> eig(cov);

    candidates.clear();
    if (eig.eigenvalues()(0) < 1e-6 * eig.eigenvalues()(2)) {
      solve_planar_pose(sample_rays, sample_world, centroid, eig.eigenvectors(), candidates);
    } else {
      PoseSE3d candidate;
      if (solve_dlt_pose(sample_rays, sample_world, centroid, scale, candidate))
        candidates.push_back(candidate);
    }
    for (const PoseSE3d& candidate : candidates) {
      const int count =
          count_inliers(points2d, points3d, intr, candidate, cfg.inlier_threshold, nullptr);
      if (count > best_count) {
        best_count = count;
        best_pose = candidate;
      }
    }
  }

  if (best_count < static_cast<int>(std::ceil(cfg.min_inlier_ratio * n)) || best_count < 3)
    throw NoConsensus("best RANSAC consensus below the minimum inlier ratio");

  RansacResult result;
  result.inliers.assign(points2d.size(), 0);
  result.consensus_pose = best_pose;
  result.inlier_count =
      count_inliers(points2d, points3d, intr, best_pose, cfg.inlier_threshold, &result.inliers);

  std::vector<PointCorrespondenced> inlier_corr;
  inlier_corr.reserve(result.inlier_count);
  for (int i = 0; i < n; ++i)
    if (result.inliers[i]) inlier_corr.push_back({points2d[i], points3d[i]});

  OptimizerConfig opt;
  result.pose = refine_pose_joint(best_pose, {}, inlier_corr, intr, opt).pose;
  return result;
}

int LineMap3D::find_by_source(int image_id, int segment_id) const {
  const auto it = std::lower_bound(
      segments.begin(), segments.end(), std::make_pair(image_id, segment_id),
      [](const Segment3d& s, const std::pair<int, int>& key) {
        return std::make_pair(s.source_image, s.source_segment) < key;
      });
  if (it == segments.end() || it->source_image != image_id || it->source_segment != segment_id)
    return -1;
  return static_cast<int>(it - segments.begin());
}

BuildResult build_line_map(const std::vector<MappingImage>& images, const RansacConfig& cfg) {
  cfg.validate();
  BuildResult result;

  for (const MappingImage& image : images) {
    ImageBuildRecord record;
    record.image_id = image.id;
    record.segments_in = static_cast<int>(image.segments.size());

    std::vector<int> lifted_ids;
    std::vector<Segment3d> lifted;
    std::vector<Eigen::Vector2d> endpoints2d;
    std::vector<Eigen::Vector3d> endpoints3d;
    for (int s = 0; s < static_cast<int>(image.segments.size()); ++s) {
      try {
        Segment3d seg3d = lift_segment_to_3d(image.segments[s], image.xyz);
        seg3d.source_image = image.id;
        seg3d.source_segment = s;
        lifted_ids.push_back(s);
        lifted.push_back(seg3d);
        endpoints2d.push_back(image.segments[s].p_left);
        endpoints2d.push_back(image.segments[s].p_right);
        endpoints3d.push_back(seg3d.p_left);
        endpoints3d.push_back(seg3d.p_right);
      } catch (const InsufficientDepth&) {
        // Segment contributes nothing; counted via lifted < segments_in.
      }
    }
    record.lifted = static_cast<int>(lifted.size());

    if (endpoints2d.size() < static_cast<std::size_t>(cfg.min_sample)) {
      record.skipped = true;
      record.skip_reason = "too few lifted endpoints";
      result.records.push_back(record);
      continue;
    }

    RansacConfig image_cfg = cfg;
    image_cfg.seed = Rng::mix(cfg.seed, static_cast<std::uint64_t>(image.id));
    try {
      const RansacResult ransac =
          pnp_ransac_filter(endpoints2d, endpoints3d, image.intrinsics, image_cfg);
      const PoseError dev = pose_error(ransac.consensus_pose, image.pose);
      record.ransac_pose_translation_dev = dev.translation_m;
      record.ransac_pose_rotation_dev = dev.rotation_deg;
      for (std::size_t i = 0; i < lifted.size(); ++i) {
        if (ransac.inliers[2 * i] && ransac.inliers[2 * i + 1]) {
          result.map.segments.push_back(lifted[i]);
          ++record.kept;
        }
      }
    } catch (const DegenerateError& e) {
      record.skipped = true;
      record.skip_reason = e.what();
    }
    result.records.push_back(record);
  }

  std::sort(result.map.segments.begin(), result.map.segments.end(),
            [](const Segment3d& a, const Segment3d& b) {
              return std::make_pair(a.source_image, a.source_segment) <
                     std::make_pair(b.source_image, b.source_segment);
            });
  std::sort(result.records.begin(), result.records.end(),
            [](const ImageBuildRecord& a, const ImageBuildRecord& b) {
              return a.image_id < b.image_id;
            });
  return result;
}

}  // namespace plloc
