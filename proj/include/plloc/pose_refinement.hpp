#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include <Eigen/Core>

#include "plloc/geometry.hpp"
#include "plloc/line_residual.hpp"

namespace plloc {

struct OptimizerConfig {
  int max_iterations = 100;
  double initial_lambda = 1e-4;
  double lambda_up = 10.0;
  double lambda_down = 10.0;
  double convergence_tol = 1e-10;  // relative robust-cost decrease
  double step_tol = 1e-12;         // local parameter update norm
  double huber_delta = 2.0;        // pixels
  AngleScale angle_scale = {};
  int max_consecutive_rejections = 10;
  bool record_cost_trace = false;

  void validate() const;
};

/// Relative weights of the line and point residual families; alpha weights
/// lines, beta weights points, alpha + beta = 1.
struct JointWeights {
  double alpha = 1.0;
  double beta = 0.0;

  void validate() const;
};

/// Weights inversely proportional to the correspondence counts, so that
/// alpha*N == beta*M and the two families contribute comparably. A family
/// with no correspondences receives weight 0 and the other weight 1.
JointWeights compute_weights(int n_lines, int m_points);

/// Huber loss on a scalar residual: rho(r) = r^2 for |r| <= delta, else
/// 2*delta*|r| - delta^2. whiten(r) squares back to rho(r).
struct HuberLoss {
  double delta = 2.0;

  double cost(double r) const {
    const double a = std::abs(r);
    return a <= delta ? r * r : 2.0 * delta * a - delta * delta;
  }
  double whiten(double r) const {
    const double a = std::abs(r);
    const double w = a <= delta ? a : std::sqrt(2.0 * delta * a - delta * delta);
    return r < 0.0 ? -w : w;
  }
  /// Derivative of whiten; continuous across |r| = delta.
  double dwhiten(double r) const {
    const double a = std::abs(r);
    if (a <= delta) return 1.0;
    return delta / std::sqrt(2.0 * delta * a - delta * delta);
  }
};

struct ResidualEval {
  Eigen::VectorXd residuals;
  std::vector<std::uint8_t> behind_camera;  // per correspondence

  int flagged_count() const {
    int n = 0;
    for (auto f : behind_camera) n += f != 0;
    return n;
  }
};

struct ResidualJacobianEval : ResidualEval {
  Eigen::MatrixXd jacobian;  // rows match residuals, 6 columns
};

/// Huber-whitened line residuals: two entries per correspondence, the
/// midpoint distance and the scaled sine-of-angle term. Correspondences with
/// an endpoint behind the camera contribute zeros and are flagged, so the
/// residual vector keeps a fixed layout across iterations.
ResidualEval line_residuals(const PoseSE3d& pose, const std::vector<LineCorrespondenced>& lcorr,
                            const CameraIntrinsicsd& intr, const OptimizerConfig& cfg);
ResidualJacobianEval line_residuals_with_jacobian(const PoseSE3d& pose,
                                                  const std::vector<LineCorrespondenced>& lcorr,
                                                  const CameraIntrinsicsd& intr,
                                                  const OptimizerConfig& cfg);

/// Huber-whitened pixel reprojection error components, two per point.
ResidualEval point_residuals(const PoseSE3d& pose, const std::vector<PointCorrespondenced>& pcorr,
                             const CameraIntrinsicsd& intr, const OptimizerConfig& cfg);
ResidualJacobianEval point_residuals_with_jacobian(const PoseSE3d& pose,
                                                   const std::vector<PointCorrespondenced>& pcorr,
                                                   const CameraIntrinsicsd& intr,
                                                   const OptimizerConfig& cfg);

/// Left-multiplicative local update: rotation by axis-angle delta[0..2],
/// then translation by delta[3..5].
PoseSE3d apply_local_update(const Eigen::Matrix<double, 6, 1>& delta, const PoseSE3d& pose);

/// Central finite differences of a residual function over the 6 local
/// parameters at the given pose.
Eigen::MatrixXd numeric_jacobian(
    const std::function<Eigen::VectorXd(const PoseSE3d&)>& residual_fn, const PoseSE3d& pose,
    double epsilon = 1e-6);

struct RefinementResult {
  PoseSE3d pose;
  double initial_cost = 0.0;
  double final_cost = 0.0;
  int iterations = 0;
  bool converged = false;
  JointWeights weights{1.0, 0.0};
  // Robust per-family costs at the final pose, before weighting.
  double line_distance_cost = 0.0;
  double line_angle_cost = 0.0;
  double point_cost = 0.0;
  int lines_behind_camera = 0;
  int points_behind_camera = 0;
  std::vector<double> cost_trace;  // filled when cfg.record_cost_trace
};

/// Levenberg-Marquardt minimization of the robust line cost over the query
/// pose. Requires at least 3 line correspondences.
RefinementResult refine_pose_line_only(const PoseSE3d& init,
                                       const std::vector<LineCorrespondenced>& lcorr,
                                       const CameraIntrinsicsd& intr, const OptimizerConfig& cfg);

/// Joint point-line refinement: line residuals scaled by sqrt(alpha), point
/// residuals by sqrt(beta). Weights default to compute_weights(N, M).
/// Requires N + M >= 3.
RefinementResult refine_pose_joint(const PoseSE3d& init,
                                   const std::vector<LineCorrespondenced>& lcorr,
                                   const std::vector<PointCorrespondenced>& pcorr,
                                   const CameraIntrinsicsd& intr, const OptimizerConfig& cfg,
                                   std::optional<JointWeights> weights = std::nullopt);

}  // namespace plloc
