#include "plloc/pose_refinement.hpp"

#include <cfloat>
#include <cmath>

#include <Eigen/Cholesky>

#include "plloc/error.hpp"

namespace plloc {

void OptimizerConfig::validate() const {
  if (max_iterations <= 0 || initial_lambda <= 0.0 || lambda_up <= 0.0 || lambda_down <= 0.0 ||
      convergence_tol <= 0.0 || step_tol <= 0.0 || huber_delta <= 0.0 ||
      max_consecutive_rejections <= 0)
    throw InvalidInput("optimizer configuration values must be positive");
}

void JointWeights::validate() const {
  if (alpha < 0.0 || beta < 0.0 || std::abs(alpha + beta - 1.0) > 1e-12)
    throw InvalidInput("joint weights must be non-negative and sum to 1");
}

JointWeights compute_weights(int n_lines, int m_points) {
  if (n_lines < 0 || m_points < 0) throw InvalidInput("correspondence counts must be non-negative");
  if (n_lines + m_points == 0) throw NoCorrespondences("no correspondences to weight");
  if (m_points == 0) return JointWeights{1.0, 0.0};
  if (n_lines == 0) return JointWeights{0.0, 1.0};
  const double total = n_lines + m_points;
  return JointWeights{m_points / total, n_lines / total};
}

PoseSE3d apply_local_update(const Eigen::Matrix<double, 6, 1>& delta, const PoseSE3d& pose) {
  const Eigen::Matrix3d r = rotation_from_axis_angle<double>(delta.head<3>());
  PoseSE3d out;
  out.rotation = r * pose.rotation;
  out.translation = r * pose.translation + delta.tail<3>();
  return out;
}

namespace {

// 2x3 Jacobian of the pinhole projection with respect to the camera-frame
// point, evaluated at pc (pc.z() > 0).
Eigen::Matrix<double, 2, 3> projection_jacobian(const CameraIntrinsicsd& intr,
                                                const Eigen::Vector3d& pc) {
  const double iz = 1.0 / pc.z();
  Eigen::Matrix<double, 2, 3> j;
  j << intr.fx * iz, 0.0, -intr.fx * pc.x() * iz * iz,  //
      0.0, intr.fy * iz, -intr.fy * pc.y() * iz * iz;
  return j;
}

// 2x6 Jacobian of the projected pixel with respect to the local pose update,
// using the left-multiplicative convention: d(pc)/d(omega, v) = [-[pc]x, I].
Eigen::Matrix<double, 2, 6> pixel_jacobian(const CameraIntrinsicsd& intr,
                                           const Eigen::Vector3d& pc) {
  const Eigen::Matrix<double, 2, 3> jp = projection_jacobian(intr, pc);
  Eigen::Matrix<double, 2, 6> j;
  j.leftCols<3>() = -jp * skew(pc);
  j.rightCols<3>() = jp;
  return j;
}

Eigen::Vector2d project_camera_point(const CameraIntrinsicsd& intr, const Eigen::Vector3d& pc) {
  return {intr.fx * pc.x() / pc.z() + intr.cx, intr.fy * pc.y() / pc.z() + intr.cy};
}

struct LineEval {
  bool with_jacobian = false;
  const OptimizerConfig* cfg = nullptr;
  const CameraIntrinsicsd* intr = nullptr;

  void run(const PoseSE3d& pose, const std::vector<LineCorrespondenced>& lcorr,
           ResidualJacobianEval& out) const {
    const HuberLoss huber{cfg->huber_delta};
    const auto n = static_cast<Eigen::Index>(lcorr.size());
    out.residuals = Eigen::VectorXd::Zero(2 * n);
    out.behind_camera.assign(lcorr.size(), 0);
    if (with_jacobian) out.jacobian = Eigen::MatrixXd::Zero(2 * n, 6);

    for (Eigen::Index i = 0; i < n; ++i) {
      const LineCorrespondenced& corr = lcorr[i];
      const Eigen::Vector3d xl = pose.apply(corr.seg3d.p_left);
      const Eigen::Vector3d xr = pose.apply(corr.seg3d.p_right);
      if (xl.z() <= kDepthEpsilon || xr.z() <= kDepthEpsilon) {
        out.behind_camera[static_cast<std::size_t>(i)] = 1;
        continue;
      }
      const Eigen::Vector2d ql = project_camera_point(*intr, xl);
      const Eigen::Vector2d qr = project_camera_point(*intr, xr);

      // Midpoint distance term.
      const Eigen::Vector2d delta_mid = corr.seg2d.midpoint() - (ql + qr) / 2.0;
      const double d = delta_mid.norm();

      // Angle term. The observed carrier line has a unit normal, and the
      // projected line's unnormalized coefficients are the cross product of
      // the homogeneous endpoints: (a', b') = (ql.y - qr.y, qr.x - ql.x),
      // whose norm is the projected segment length.
      const HomogeneousLine2d l_obs = line_of_segment(corr.seg2d);
      const double ap = ql.y() - qr.y();
      const double bp = qr.x() - ql.x();
      const double np = std::hypot(ap, bp);
      const double g = l_obs.a * bp - l_obs.b * ap;
      const double sine = np > 0.0 ? std::abs(g) / np : 0.0;
      const double theta_term = cfg->angle_scale.value(np) * sine;

      out.residuals(2 * i) = huber.whiten(d);
      out.residuals(2 * i + 1) = huber.whiten(theta_term);

      if (!with_jacobian) continue;
      const Eigen::Matrix<double, 2, 6> jl = pixel_jacobian(*intr, xl);
      const Eigen::Matrix<double, 2, 6> jr = pixel_jacobian(*intr, xr);

      if (d > 1e-12) {
        const Eigen::Matrix<double, 1, 6> jd =
            -(delta_mid.transpose() / d) * ((jl + jr) / 2.0);
        out.jacobian.row(2 * i) = huber.dwhiten(d) * jd;
      }

      if (np > 0.0 && g != 0.0) {
        const Eigen::Matrix<double, 1, 6> dap = jl.row(1) - jr.row(1);
        const Eigen::Matrix<double, 1, 6> dbp = jr.row(0) - jl.row(0);
        const Eigen::Matrix<double, 1, 6> dg = l_obs.a * dbp - l_obs.b * dap;
        const double sg = g > 0.0 ? 1.0 : -1.0;
        Eigen::Matrix<double, 1, 6> jtheta;
        if (cfg->angle_scale.mode == AngleScale::Mode::kReprojectedLength) {
          // theta_term = |g|: the length scale cancels the normalization.
          jtheta = sg * dg;
        } else {
          const Eigen::Matrix<double, 1, 6> dnp = (ap * dap + bp * dbp) / np;
          jtheta = cfg->angle_scale.constant * (sg * dg * np - std::abs(g) * dnp) / (np * np);
        }
        out.jacobian.row(2 * i + 1) = huber.dwhiten(theta_term) * jtheta;
      }
    }
  }
};

void eval_points(const PoseSE3d& pose, const std::vector<PointCorrespondenced>& pcorr,
                 const CameraIntrinsicsd& intr, const OptimizerConfig& cfg, bool with_jacobian,
                 ResidualJacobianEval& out) {
  const HuberLoss huber{cfg.huber_delta};
  const auto m = static_cast<Eigen::Index>(pcorr.size());
  out.residuals = Eigen::VectorXd::Zero(2 * m);
  out.behind_camera.assign(pcorr.size(), 0);
  if (with_jacobian) out.jacobian = Eigen::MatrixXd::Zero(2 * m, 6);

  for (Eigen::Index j = 0; j < m; ++j) {
    const Eigen::Vector3d pc = pose.apply(pcorr[j].p3d);
    if (pc.z() <= kDepthEpsilon) {
      out.behind_camera[static_cast<std::size_t>(j)] = 1;
      continue;
    }
    const Eigen::Vector2d e = pcorr[j].p2d - project_camera_point(intr, pc);
    out.residuals(2 * j) = huber.whiten(e.x());
    out.residuals(2 * j + 1) = huber.whiten(e.y());
    if (with_jacobian) {
      const Eigen::Matrix<double, 2, 6> je = -pixel_jacobian(intr, pc);
      out.jacobian.row(2 * j) = huber.dwhiten(e.x()) * je.row(0);
      out.jacobian.row(2 * j + 1) = huber.dwhiten(e.y()) * je.row(1);
    }
  }
}

}  // namespace

ResidualEval line_residuals(const PoseSE3d& pose, const std::vector<LineCorrespondenced>& lcorr,
                            const CameraIntrinsicsd& intr, const OptimizerConfig& cfg) {
  ResidualJacobianEval out;
  LineEval{false, &cfg, &intr}.run(pose, lcorr, out);
  return std::move(static_cast<ResidualEval&>(out));
}

ResidualJacobianEval line_residuals_with_jacobian(const PoseSE3d& pose,
                                                  const std::vector<LineCorrespondenced>& lcorr,
                                                  const CameraIntrinsicsd& intr,
                                                  const OptimizerConfig& cfg) {
  ResidualJacobianEval out;
  LineEval{true, &cfg, &intr}.run(pose, lcorr, out);
  return out;
}

ResidualEval point_residuals(const PoseSE3d& pose, const std::vector<PointCorrespondenced>& pcorr,
                             const CameraIntrinsicsd& intr, const OptimizerConfig& cfg) {
  ResidualJacobianEval out;
  eval_points(pose, pcorr, intr, cfg, false, out);
  return std::move(static_cast<ResidualEval&>(out));
}

ResidualJacobianEval point_residuals_with_jacobian(const PoseSE3d& pose,
                                                   const std::vector<PointCorrespondenced>& pcorr,
                                                   const CameraIntrinsicsd& intr,
                                                   const OptimizerConfig& cfg) {
  ResidualJacobianEval out;
  eval_points(pose, pcorr, intr, cfg, true, out);
  return out;
}

Eigen::MatrixXd numeric_jacobian(
    const std::function<Eigen::VectorXd(const PoseSE3d&)>& residual_fn, const PoseSE3d& pose,
    double epsilon) {
  Eigen::MatrixXd j;
  for (int k = 0; k < 6; ++k) {
    Eigen::Matrix<double, 6, 1> delta = Eigen::Matrix<double, 6, 1>::Zero();
    delta(k) = epsilon;
    const Eigen::VectorXd plus = residual_fn(apply_local_update(delta, pose));
    delta(k) = -epsilon;
    const Eigen::VectorXd minus = residual_fn(apply_local_update(delta, pose));
    if (j.size() == 0) j.resize(plus.size(), 6);
    j.col(k) = (plus - minus) / (2.0 * epsilon);
  }
  return j;
}

namespace {

struct JointProblem {
  const std::vector<LineCorrespondenced>* lines;
  const std::vector<PointCorrespondenced>* points;
  const CameraIntrinsicsd* intr;
  const OptimizerConfig* cfg;
  double sqrt_alpha = 1.0;
  double sqrt_beta = 0.0;

  Eigen::Index size() const {
    return 2 * static_cast<Eigen::Index>(lines->size() + points->size());
  }

  void evaluate(const PoseSE3d& pose, bool with_jacobian, Eigen::VectorXd& r,
                Eigen::MatrixXd* jac, int* lines_behind = nullptr,
                int* points_behind = nullptr) const {
    ResidualJacobianEval le;
    LineEval{with_jacobian, cfg, intr}.run(pose, *lines, le);
    ResidualJacobianEval pe;
    eval_points(pose, *points, *intr, *cfg, with_jacobian, pe);

    r.resize(size());
    r.head(le.residuals.size()) = sqrt_alpha * le.residuals;
    r.tail(pe.residuals.size()) = sqrt_beta * pe.residuals;
    if (with_jacobian && jac != nullptr) {
      jac->resize(size(), 6);
      jac->topRows(le.jacobian.rows()) = sqrt_alpha * le.jacobian;
      jac->bottomRows(pe.jacobian.rows()) = sqrt_beta * pe.jacobian;
    }
    if (lines_behind != nullptr) *lines_behind = le.flagged_count();
    if (points_behind != nullptr) *points_behind = pe.flagged_count();
  }
};

RefinementResult refine_impl(const PoseSE3d& init, const std::vector<LineCorrespondenced>& lcorr,
                             const std::vector<PointCorrespondenced>& pcorr,
                             const CameraIntrinsicsd& intr, const OptimizerConfig& cfg,
                             const JointWeights& weights) {
  cfg.validate();
  weights.validate();

  JointProblem problem{&lcorr, &pcorr, &intr, &cfg, std::sqrt(weights.alpha),
                       std::sqrt(weights.beta)};

  RefinementResult result;
  result.weights = weights;
  result.pose = init;

  Eigen::VectorXd r;
  Eigen::MatrixXd jac;
  problem.evaluate(init, true, r, &jac);
  double cost = r.squaredNorm();
  result.initial_cost = cost;
  if (cfg.record_cost_trace) result.cost_trace.push_back(cost);

  PoseSE3d pose = init;
  double lambda = cfg.initial_lambda;
  // Divergence detection: consecutive damping escalations whose proposal
  // costs increase monotonically.
  int rising_rejections = 0;
  double last_rejected_cost = 0.0;
  bool have_rejected = false;
  bool jac_fresh = true;

  for (int iter = 1; iter <= cfg.max_iterations; ++iter) {
    result.iterations = iter;
    if (!jac_fresh) {
      problem.evaluate(pose, true, r, &jac);
      jac_fresh = true;
    }
    const Eigen::Matrix<double, 6, 6> h = jac.transpose() * jac;
    const Eigen::Matrix<double, 6, 1> g = jac.transpose() * r;

    const Eigen::Matrix<double, 6, 6> damped =
        h + lambda * Eigen::Matrix<double, 6, 6>::Identity();
    const Eigen::Matrix<double, 6, 1> delta = damped.ldlt().solve(-g);

    if (!delta.allFinite()) {
      lambda *= cfg.lambda_up;
      if (++rising_rejections >= cfg.max_consecutive_rejections)
        throw Diverged("step solve failed repeatedly");
      continue;
    }
    if (delta.norm() <= cfg.step_tol) {
      result.converged = true;
      break;
    }

    const PoseSE3d candidate = apply_local_update(delta, pose);
    Eigen::VectorXd r_new;
    problem.evaluate(candidate, false, r_new, nullptr);
    const double cost_new = r_new.squaredNorm();

    if (cost_new < cost) {
      pose = candidate;
      const double decrease = (cost - cost_new) / std::max(cost, DBL_MIN);
      cost = cost_new;
      lambda = std::max(lambda / cfg.lambda_down, 1e-15);
      rising_rejections = 0;
      have_rejected = false;
      jac_fresh = false;
      if (cfg.record_cost_trace) result.cost_trace.push_back(cost);
      if (decrease <= cfg.convergence_tol) {
        result.converged = true;
        break;
      }
    } else if (cost_new <= cost * (1.0 + cfg.convergence_tol)) {
      // Plateau: the proposal changes the cost by less than the convergence
      // tolerance and damping can only shrink future steps further.
      result.converged = true;
      break;
    } else {
      lambda *= cfg.lambda_up;
      rising_rejections = (have_rejected && cost_new > last_rejected_cost)
                              ? rising_rejections + 1
                              : 1;
      last_rejected_cost = cost_new;
      have_rejected = true;
      if (rising_rejections >= cfg.max_consecutive_rejections)
        throw Diverged("proposal cost rose monotonically over repeated damping escalations");
    }
  }

  result.pose = pose;
  result.final_cost = cost;

  // Per-family breakdown at the final pose, before weighting.
  ResidualJacobianEval le;
  LineEval{false, &cfg, &intr}.run(pose, lcorr, le);
  for (Eigen::Index i = 0; i < static_cast<Eigen::Index>(lcorr.size()); ++i) {
    result.line_distance_cost += le.residuals(2 * i) * le.residuals(2 * i);
    result.line_angle_cost += le.residuals(2 * i + 1) * le.residuals(2 * i + 1);
  }
  result.lines_behind_camera = le.flagged_count();
  ResidualJacobianEval pe;
  eval_points(pose, pcorr, intr, cfg, false, pe);
  result.point_cost = pe.residuals.squaredNorm();
  result.points_behind_camera = pe.flagged_count();
  return result;
}

}  // namespace

RefinementResult refine_pose_line_only(const PoseSE3d& init,
                                       const std::vector<LineCorrespondenced>& lcorr,
                                       const CameraIntrinsicsd& intr, const OptimizerConfig& cfg) {
  if (lcorr.size() < 3)
    throw TooFewCorrespondences("line-only refinement needs at least 3 line correspondences");
  return refine_impl(init, lcorr, {}, intr, cfg, JointWeights{1.0, 0.0});
}

RefinementResult refine_pose_joint(const PoseSE3d& init,
                                   const std::vector<LineCorrespondenced>& lcorr,
                                   const std::vector<PointCorrespondenced>& pcorr,
                                   const CameraIntrinsicsd& intr, const OptimizerConfig& cfg,
                                   std::optional<JointWeights> weights) {
  if (lcorr.size() + pcorr.size() < 3)
    throw TooFewCorrespondences("joint refinement needs at least 3 correspondences");
  const JointWeights w = weights.has_value()
                             ? *weights
                             : compute_weights(static_cast<int>(lcorr.size()),
                                               static_cast<int>(pcorr.size()));
  return refine_impl(init, lcorr, pcorr, intr, cfg, w);
}

}  // namespace plloc
