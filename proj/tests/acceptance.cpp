// Acceptance suite: runs every acceptance criterion at its pinned tolerance
// and prints one PASS/FAIL line per criterion. The first argument is the
// path to the command-line binary (used by the determinism criterion).

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <sys/wait.h>
#include <vector>

#include "plloc/io.hpp"
#include "plloc/line_matching.hpp"
#include "plloc/line_rep.hpp"
#include "plloc/pipeline.hpp"
#include "plloc/pose_refinement.hpp"
#include "plloc/rng.hpp"
#include "plloc/sap.hpp"
#include "test_utils.hpp"

using namespace plloc;

namespace {

struct Check {
  bool ok = true;
  std::string detail;

  void require(bool condition, const std::string& what) {
    if (!condition && ok) {
      ok = false;
      detail = what;
    }
  }
};

std::string g_cli_path;

// --- 1. representation round trips ------------------------------------------

Check criterion_round_trips() {
  Check check;
  Rng rng(201);
  for (int i = 0; i < 1000; ++i) {
    const Segment2d seg = testutil::random_segment(rng);
    const Segment2d back = midrep_to_endpoints(endpoints_to_midrep(seg));
    check.require((back.p_left - seg.p_left).lpNorm<Eigen::Infinity>() <= 1e-12 &&
                      (back.p_right - seg.p_right).lpNorm<Eigen::Infinity>() <= 1e-12,
                  "endpoint round trip above 1e-12");

    PolarRepd polar;
    polar.p_mid = Eigen::Vector2d(rng.uniform(0, 128), rng.uniform(0, 128));
    polar.length = rng.uniform(4.0, 80.0);
    polar.theta = rng.uniform(-M_PI / 2 + 1e-9, M_PI / 2);
    const PolarRepd polar_back = midrep_to_polar(polar_to_midrep(polar));
    check.require(std::abs(polar_back.length - polar.length) <= 1e-12 * polar.length &&
                      std::abs(polar_back.theta - polar.theta) <= 1e-12,
                  "polar round trip above 1e-12");

    const MidpointRepd mid = polar_to_midrep(polar);
    const MidpointRepd mid_back = polar_to_midrep(midrep_to_polar(mid));
    check.require((mid_back.v_r - mid.v_r).lpNorm<Eigen::Infinity>() <= 1e-12,
                  "midpoint round trip above 1e-12");
  }
  return check;
}

// --- 2. epipolar correctness -------------------------------------------------

Check criterion_epipolar() {
  Check check;
  Rng rng(202);
  const CameraIntrinsicsd k{128.0, 128.0, 128.0, 128.0};
  int verified_pairs = 0, degenerate_pairs = 0;

  for (int scene = 0; scene < 100; ++scene) {
    const Eigen::Vector3d target(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(4, 6));
    const Eigen::Vector3d c_q(rng.uniform(-1.2, 1.2), rng.uniform(-1.2, 1.2),
                              rng.uniform(-1, 0));
    Eigen::Vector3d c_d;
    do {
      c_d = Eigen::Vector3d(rng.uniform(-1.2, 1.2), rng.uniform(-1.2, 1.2), rng.uniform(-1, 0));
    } while ((c_q - c_d).norm() < 0.2);
    const PoseSE3d pose_q = testutil::look_at_pose(c_q, target);
    const PoseSE3d pose_d = testutil::look_at_pose(c_d, target);
    const Eigen::Matrix3d f = fundamental_matrix(k, pose_q, k, pose_d);

    std::vector<Segment3d> lines3d;
    std::vector<Segment2d> query_lines, db_lines;
    while (lines3d.size() < 8) {
      Segment3d seg;
      seg.p_left = target + Eigen::Vector3d(rng.uniform(-1.2, 1.2), rng.uniform(-1.2, 1.2),
                                            rng.uniform(-1, 1));
      seg.p_right = seg.p_left + rng.unit_vector() * rng.uniform(0.4, 1.5);
      try {
        const Segment2d q = project_segment(k, pose_q, seg);
        const Segment2d d = project_segment(k, pose_d, seg);
        if (q.length() < 8.0 || d.length() < 8.0) continue;
        lines3d.push_back(seg);
        query_lines.push_back(q);
        db_lines.push_back(d);
      } catch (const BehindCamera&) {
      }
    }

    // Bilinear epipolar residual: project each 3D endpoint into both views.
    for (std::size_t i = 0; i < lines3d.size(); ++i) {
      for (const Eigen::Vector3d* world : {&lines3d[i].p_left, &lines3d[i].p_right}) {
        const Eigen::Vector2d pq = project_point(k, pose_q, *world);
        const Eigen::Vector2d pd = project_point(k, pose_d, *world);
        const Eigen::Vector3d hq = Eigen::Vector3d(pq.x(), pq.y(), 1.0).normalized();
        const Eigen::Vector3d hd = Eigen::Vector3d(pd.x(), pd.y(), 1.0).normalized();
        const Eigen::Vector3d line = f * hq;
        const double residual = std::abs(hd.dot(line)) / line.norm();
        check.require(residual < 1e-9, "epipolar residual at or above 1e-9");
      }
    }

    // Candidate generation must retain every non-degenerate true pair with
    // near-perfect overlap.
    MatchConfig cfg;
    cfg.max_candidates_per_query_line = 16;
    const std::vector<EpipolarCandidate> candidates =
        epipolar_candidates(query_lines, db_lines, f, cfg);
    for (std::size_t i = 0; i < lines3d.size(); ++i) {
      // Replicate the degenerate-transfer guard for the true pair.
      bool degenerate = false;
      try {
        const HomogeneousLine2d ld = line_of_segment(db_lines[i]);
        const HomogeneousLine2d el = HomogeneousLine2d::from_coeffs(
            f * Eigen::Vector3d(query_lines[i].p_left.x(), query_lines[i].p_left.y(), 1.0));
        const HomogeneousLine2d er = HomogeneousLine2d::from_coeffs(
            f * Eigen::Vector3d(query_lines[i].p_right.x(), query_lines[i].p_right.y(), 1.0));
        intersect_lines(ld, el);
        intersect_lines(ld, er);
      } catch (const DegenerateError&) {
        degenerate = true;
      }
      if (degenerate) {
        ++degenerate_pairs;
        continue;
      }
      bool found = false;
      double overlap = 0.0;
      for (const EpipolarCandidate& c : candidates) {
        if (c.query_id == static_cast<int>(i) && c.db_id == static_cast<int>(i)) {
          found = true;
          overlap = c.overlap;
        }
      }
      check.require(found, "true pair missing from the candidates");
      if (found) check.require(overlap >= 0.99, "true pair overlap below 0.99");
      ++verified_pairs;
    }
  }
  check.require(verified_pairs >= 700, "too few verified pairs");
  std::ostringstream os;
  os << verified_pairs << " pairs verified, " << degenerate_pairs << " degenerate skips";
  if (check.ok) check.detail = os.str();
  return check;
}

// --- 3. Jacobian checks -------------------------------------------------------

Check criterion_jacobians() {
  Check check;
  Rng rng(203);
  const CameraIntrinsicsd k{128.0, 128.0, 128.0, 128.0};
  const OptimizerConfig cfg;
  for (int trial = 0; trial < 100; ++trial) {
    const PoseSE3d pose = testutil::random_pose(rng, 0.4, 0.5);
    const PoseSE3d obs_pose = testutil::random_pose(rng, 0.4, 0.5);
    const PoseSE3d inv = pose.inverse();
    std::vector<LineCorrespondenced> lcorr;
    std::vector<PointCorrespondenced> pcorr;
    for (int i = 0; i < 4; ++i) {
      const Eigen::Vector3d a =
          inv.apply({rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(2.5, 5)});
      const Eigen::Vector3d b =
          inv.apply({rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(2.5, 5)});
      Segment3d seg;
      seg.p_left = a;
      seg.p_right = b;
      lcorr.push_back({project_segment(k, obs_pose, seg), seg});
      pcorr.push_back({project_point(k, obs_pose, a), a});
    }

    const ResidualJacobianEval lj = line_residuals_with_jacobian(pose, lcorr, k, cfg);
    const Eigen::MatrixXd ln = numeric_jacobian(
        [&](const PoseSE3d& p) { return line_residuals(p, lcorr, k, cfg).residuals; }, pose);
    const double lrel = (lj.jacobian - ln).lpNorm<Eigen::Infinity>() /
                        std::max(1.0, ln.lpNorm<Eigen::Infinity>());
    check.require(lrel <= 1e-4, "line Jacobian relative error above 1e-4");

    const ResidualJacobianEval pj = point_residuals_with_jacobian(pose, pcorr, k, cfg);
    const Eigen::MatrixXd pn = numeric_jacobian(
        [&](const PoseSE3d& p) { return point_residuals(p, pcorr, k, cfg).residuals; }, pose);
    const double prel = (pj.jacobian - pn).lpNorm<Eigen::Infinity>() /
                        std::max(1.0, pn.lpNorm<Eigen::Infinity>());
    check.require(prel <= 1e-4, "point Jacobian relative error above 1e-4");
  }
  return check;
}

// --- helpers for scene-based criteria ----------------------------------------

struct QueryTruth {
  PoseSE3d gt_pose;
  PoseSE3d init_pose;
  std::vector<LineCorrespondenced> lines;
  std::vector<PointCorrespondenced> points;
};

QueryTruth query_truth(const Scene& scene, int index) {
  const QueryView& query = scene.queries.at(index);
  QueryTruth data;
  data.gt_pose = scene.camera(query.camera_id).pose;
  data.init_pose = query.initial_pose;
  for (const ObservedSegment& obs : scene.observations.at(query.camera_id))
    data.lines.push_back({obs.seg, scene.lines3d[obs.line_id]});
  data.points = query.points;
  return data;
}

// --- 4. zero-residual fixed point --------------------------------------------

Check criterion_fixed_point() {
  Check check;
  SceneGenConfig gen;
  gen.seed = 204;
  gen.n_cameras = 6;
  gen.n_queries = 2;
  gen.n_lines = 60;
  gen.n_points = 80;
  const Scene scene = generate_scene(gen);
  for (int qi = 0; qi < 2; ++qi) {
    const QueryTruth q = query_truth(scene, qi);
    const RefinementResult line_only =
        refine_pose_line_only(q.gt_pose, q.lines, scene.intrinsics, OptimizerConfig{});
    const RefinementResult joint =
        refine_pose_joint(q.gt_pose, q.lines, q.points, scene.intrinsics, OptimizerConfig{});
    check.require(line_only.initial_cost < 1e-18, "line-only cost at GT not < 1e-18");
    check.require(joint.initial_cost < 1e-18, "joint cost at GT not < 1e-18");
    const PoseError le = pose_error(line_only.pose, q.gt_pose);
    const PoseError je = pose_error(joint.pose, q.gt_pose);
    check.require(le.translation_m < 1e-9 && le.rotation_deg < 1e-9,
                  "line-only pose moved at the fixed point");
    check.require(je.translation_m < 1e-9 && je.rotation_deg < 1e-9,
                  "joint pose moved at the fixed point");
  }
  return check;
}

// --- 5. convergence oracle ----------------------------------------------------

Check criterion_convergence() {
  Check check;
  SceneGenConfig gen;  // reference scene: 20 cameras, 200 lines, 500 points
  gen.seed = 205;
  gen.init_perturb_translation = 0.5;
  gen.init_perturb_rotation_deg = 5.0;
  const Scene scene = generate_scene(gen);
  for (std::size_t qi = 0; qi < scene.queries.size(); ++qi) {
    const QueryTruth q = query_truth(scene, static_cast<int>(qi));
    const RefinementResult result =
        refine_pose_joint(q.init_pose, q.lines, q.points, scene.intrinsics, OptimizerConfig{});
    const PoseError err = pose_error(result.pose, q.gt_pose);
    check.require(err.translation_m < 1e-3, "joint translation error at or above 1e-3 m");
    check.require(err.rotation_deg < 0.01, "joint rotation error at or above 0.01 deg");
  }
  return check;
}

// --- 6. noise robustness ------------------------------------------------------

Check criterion_noise_robustness() {
  Check check;
  std::vector<double> initial_errors, joint_errors;
  for (int seed = 1; seed <= 20; ++seed) {
    SceneGenConfig gen;
    gen.seed = 300 + seed;
    gen.pixel_noise_sigma = 1.0;
    gen.init_perturb_translation = 0.5;
    gen.init_perturb_rotation_deg = 5.0;
    const Scene scene = generate_scene(gen);
    const PipelineResult result = run_pipeline(scene, PipelineConfig{});
    for (const QueryRecord& record : result.queries) {
      initial_errors.push_back(record.initial_error.translation_m);
      joint_errors.push_back(record.joint_error.translation_m);
    }
    check.require(result.joint_score.within_1m_10deg >= result.line_only_score.within_1m_10deg,
                  "joint score below line-only score at (1 m, 10 deg)");
    check.require(result.line_only_score.within_1m_10deg >= result.initial_score.within_1m_10deg,
                  "line-only score below initial score at (1 m, 10 deg)");
  }
  const auto median = [](std::vector<double> values) {
    std::sort(values.begin(), values.end());
    return values[values.size() / 2];
  };
  const double med_initial = median(initial_errors);
  const double med_joint = median(joint_errors);
  check.require(med_joint <= 0.5 * med_initial, "median joint error above half the initial");
  std::ostringstream os;
  os << "median translation error " << med_initial << " m -> " << med_joint << " m over "
     << joint_errors.size() << " queries";
  if (check.ok) check.detail = os.str();
  return check;
}

// --- 7. mapping filter ---------------------------------------------------------

Check criterion_mapping_filter() {
  Check check;
  SceneGenConfig gen;
  gen.seed = 207;
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
  check.require(corrupted >= 20, "too few corrupted observations to judge");
  check.require(corrupted_rejected >= 0.95 * corrupted, "under 95% of corrupted lines rejected");
  check.require(clean_kept >= 0.95 * clean, "under 95% of clean lines kept");
  std::ostringstream os;
  os << corrupted_rejected << "/" << corrupted << " corrupted rejected, " << clean_kept << "/"
     << clean << " clean kept";
  if (check.ok) check.detail = os.str();
  return check;
}

// --- 8. sAP evaluator oracle ----------------------------------------------------

double oracle_sap(std::vector<Segment2d> pred, const std::vector<Segment2d>& gt,
                  double threshold) {
  std::stable_sort(pred.begin(), pred.end(), [](const Segment2d& a, const Segment2d& b) {
    return a.confidence > b.confidence;
  });
  std::vector<bool> used(gt.size(), false);
  std::vector<double> precision, recall;
  int tp = 0;
  for (std::size_t k = 0; k < pred.size(); ++k) {
    double best = std::numeric_limits<double>::infinity();
    std::size_t best_g = gt.size();
    for (std::size_t g = 0; g < gt.size(); ++g) {
      if (used[g]) continue;
      const double straight = (pred[k].p_left - gt[g].p_left).squaredNorm() +
                              (pred[k].p_right - gt[g].p_right).squaredNorm();
      const double crossed = (pred[k].p_left - gt[g].p_right).squaredNorm() +
                             (pred[k].p_right - gt[g].p_left).squaredNorm();
      const double d = std::min(straight, crossed);
      if (d < best) {
        best = d;
        best_g = g;
      }
    }
    if (best_g < gt.size() && best < threshold) {
      used[best_g] = true;
      ++tp;
    }
    precision.push_back(static_cast<double>(tp) / static_cast<double>(k + 1));
    recall.push_back(static_cast<double>(tp) / static_cast<double>(gt.size()));
  }
  double ap = 0.0;
  for (std::size_t j = 1; j <= gt.size(); ++j) {
    const double r = static_cast<double>(j) / static_cast<double>(gt.size());
    double p_env = 0.0;
    for (std::size_t i = 0; i < precision.size(); ++i)
      if (recall[i] >= r) p_env = std::max(p_env, precision[i]);
    ap += p_env / static_cast<double>(gt.size());
  }
  return 100.0 * ap;
}

Check criterion_sap_oracle() {
  Check check;
  using Set = std::vector<Segment2d>;
  std::vector<std::pair<Set, Set>> cases;

  // Exact match behind a higher-confidence far miss.
  cases.push_back({Set{Segment2d({10, 10}, {40, 10}, 0.90), Segment2d({80, 100}, {120, 100}, 0.95)},
                   Set{Segment2d({10, 10}, {40, 10}), Segment2d({10, 60}, {40, 60})}});
  // Perfect one-element set.
  cases.push_back({Set{Segment2d({10, 10}, {40, 10}, 1.0)}, Set{Segment2d({10, 10}, {40, 10})}});
  // Duplicates competing for one ground truth.
  cases.push_back({Set{Segment2d({10, 10}, {40, 10}, 0.9), Segment2d({10, 11}, {40, 11}, 0.8),
                       Segment2d({10, 12}, {40, 12}, 0.7)},
                   Set{Segment2d({10, 10}, {40, 10})}});
  // Confidence tie with mixed quality.
  cases.push_back({Set{Segment2d({10, 13}, {40, 13}, 0.5), Segment2d({10, 10}, {40, 10}, 0.5)},
                   Set{Segment2d({10, 10}, {40, 10}), Segment2d({60, 60}, {90, 60})}});
  // Five lines, two matched, swapped endpoint order in the prediction.
  cases.push_back(
      {Set{Segment2d({40, 10}, {10, 10}, 0.9), Segment2d({60, 60}, {90, 62}, 0.8),
           Segment2d({5, 100}, {30, 100}, 0.7)},
       Set{Segment2d({10, 10}, {40, 10}), Segment2d({60, 60}, {90, 60}),
           Segment2d({5, 90}, {30, 90}), Segment2d({100, 10}, {120, 10}),
           Segment2d({100, 30}, {120, 30})}});
  // No predictions at all.
  cases.push_back({Set{}, Set{Segment2d({10, 10}, {40, 10})}});

  for (const auto& [pred, gt] : cases) {
    const auto scores = sap_score(pred, gt, 128, 128);
    for (const auto& [threshold, ap] : scores) {
      const double expect = oracle_sap(pred, gt, threshold);
      check.require(std::abs(ap - expect) < 1e-12, "sAP deviates from the brute-force curve");
    }
  }

  // The documented two-element case: precisions 0 and 1/2, capped recall.
  const auto first = sap_score(cases[0].first, cases[0].second, 128, 128);
  for (const auto& [threshold, ap] : first)
    check.require(std::abs(ap - 25.0) < 1e-12, "two-element case is not 25.0");
  return check;
}

// --- 9. collinear guard ---------------------------------------------------------

Check criterion_collinear_guard() {
  Check check;
  const CameraIntrinsicsd k{100.0, 100.0, 64.0, 64.0};
  const PoseSE3d identity;
  const Segment2d observed({0, 0}, {10, 0});
  Segment3d shifted;
  shifted.p_left = Eigen::Vector3d(2.0 * (10 - k.cx) / k.fx, 2.0 * (0 - k.cy) / k.fy, 2.0);
  shifted.p_right = Eigen::Vector3d(2.0 * (20 - k.cx) / k.fx, 2.0 * (0 - k.cy) / k.fy, 2.0);

  const Segment2d proj = project_segment(k, identity, shifted);
  const HomogeneousLine2d carrier = line_of_segment(observed);
  check.require(std::abs(carrier.signed_distance(proj.p_left)) < 1e-9 &&
                    std::abs(carrier.signed_distance(proj.p_right)) < 1e-9,
                "construction is not collinear");
  const double gap = std::max(proj.p_left.x(), observed.p_left.x()) -
                     std::min(proj.p_right.x(), observed.p_right.x());
  check.require(gap >= 0.0, "construction overlaps");

  const LineReprojResidual res = line_reproj_residual(observed, shifted, k, identity);
  check.require(res.total > 0.0, "collinear non-overlapping summand is not positive");
  check.require(std::abs(res.midpoint_distance - 10.0) < 1e-9, "midpoint term is not 10 px");
  return check;
}

// --- 10. pipeline determinism ----------------------------------------------------

Check criterion_determinism() {
  Check check;
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "plloc_acceptance_determinism";
  fs::remove_all(dir);
  fs::create_directories(dir);

  const std::string args =
      " pipeline --seed 7 --cameras 8 --queries 3 --lines 100 --points 150 --noise 0.5"
      " --perturb-translation 0.4 --perturb-rotation 4 --report ";
  const std::string r1 = (dir / "report1.json").string();
  const std::string r2 = (dir / "report2.json").string();

  const auto run = [&](const std::string& report) {
    const std::string cmd = g_cli_path + args + report + " > /dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  };
  check.require(run(r1) == 0, "first pipeline run failed");
  check.require(run(r2) == 0, "second pipeline run failed");
  if (!check.ok) return check;

  const auto slurp = [](const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    std::ostringstream os;
    os << is.rdbuf();
    return os.str();
  };
  const std::string a = slurp(r1);
  const std::string b = slurp(r2);
  check.require(!a.empty(), "empty report");
  check.require(a == b, "reports differ between runs");
  return check;
}

}  // namespace

int main(int argc, char** argv) {
  if (argc > 1) {
    g_cli_path = argv[1];
  } else {
    g_cli_path =
        (std::filesystem::path(argv[0]).parent_path().parent_path() / "tools" / "plloc").string();
  }

  struct Criterion {
    const char* name;
    std::function<Check()> run;
  };
  const std::vector<Criterion> criteria = {
      {"1. representation round trips exact to 1e-12", criterion_round_trips},
      {"2. epipolar residual < 1e-9 and true pairs retained", criterion_epipolar},
      {"3. analytic Jacobians within 1e-4 of central differences", criterion_jacobians},
      {"4. zero-residual fixed point at the ground truth", criterion_fixed_point},
      {"5. joint refinement recovers perturbed poses to (1e-3 m, 0.01 deg)",
       criterion_convergence},
      {"6. noise robustness: joint halves the median error, scores ordered",
       criterion_noise_robustness},
      {"7. PnP-RANSAC filter: 95% corrupted rejected, 95% clean kept",
       criterion_mapping_filter},
      {"8. sAP matches the brute-force precision-recall computation", criterion_sap_oracle},
      {"9. collinear non-overlapping summand is strictly positive", criterion_collinear_guard},
      {"10. pipeline reports are byte-identical across runs", criterion_determinism},
  };

  int failures = 0;
  for (const Criterion& criterion : criteria) {
    const auto start = std::chrono::steady_clock::now();
    Check check;
    try {
      check = criterion.run();
    } catch (const std::exception& e) {
      check.ok = false;
      check.detail = std::string("exception: ") + e.what();
    }
    const double seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::printf("[%s] %s (%.2f s)%s%s\n", check.ok ? "PASS" : "FAIL", criterion.name, seconds,
                check.detail.empty() ? "" : " -- ", check.detail.c_str());
    failures += !check.ok;
  }
  if (failures > 0) std::printf("%d criterion(s) failed\n", failures);
  return failures == 0 ? 0 : 1;
}
