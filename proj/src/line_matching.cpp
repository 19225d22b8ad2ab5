#include "plloc/line_matching.hpp"

#include <algorithm>
#include <limits>
#include <map>
#include <set>

#include <Eigen/Dense>

#include "plloc/error.hpp"

namespace plloc {

void MatchConfig::validate() const {
  if (overlap_threshold <= 0.0 || overlap_threshold > 1.0)
    throw InvalidInput("overlap threshold must be in (0, 1]");
  if (max_candidates_per_query_line <= 0)
    throw InvalidInput("candidate cap must be positive");
  if (residual_threshold < 0.0) throw InvalidInput("residual threshold must be non-negative");
  if (min_segment_length <= 0.0) throw InvalidInput("minimum segment length must be positive");
}

void MatchStats::merge(const MatchStats& other) {
  pairs_considered += other.pairs_considered;
  degenerate_skips += other.degenerate_skips;
  short_segments_skipped += other.short_segments_skipped;
  below_overlap += other.below_overlap;
  candidates_kept += other.candidates_kept;
  behind_camera_skips += other.behind_camera_skips;
  unmapped_db_segments += other.unmapped_db_segments;
  for (std::size_t i = 0; i < residual_histogram.size(); ++i)
    residual_histogram[i] += other.residual_histogram[i];
}

namespace {

void validate_fundamental(const Eigen::Matrix3d& f) {
  if (std::abs(f.norm() - 1.0) > 1e-6)
    throw InvalidInput("fundamental matrix must have unit Frobenius norm");
  const Eigen::JacobiSVD<Eigen::Matrix3d> svd(f, Eigen::ComputeFullU | Eigen::ComputeFullV);
  if (svd.singularValues()(2) > 1e-6 * svd.singularValues()(0))
    throw InvalidInput("fundamental matrix must have rank 2");
}

// Arclength parameter of a homogeneous point along a line's direction;
// returns false for points at infinity.
bool line_parameter(const HomogeneousLine2d& line, const Eigen::Vector3d& p, double& t) {
  if (std::abs(p.z()) <= kParallelTolerance * p.head<2>().norm()) return false;
  const Eigen::Vector2d q = p.head<2>() / p.z();
  t = line.direction().dot(q);
  return std::isfinite(t);
}

}  // namespace

std::vector<EpipolarCandidate> epipolar_candidates(const std::vector<Segment2d>& query_lines,
                                                   const std::vector<Segment2d>& db_lines,
                                                   const Eigen::Matrix3d& f,
                                                   const MatchConfig& cfg, MatchStats* stats) {
  cfg.validate();
  validate_fundamental(f);
  MatchStats local;

  // Carrier lines and arclength intervals of the database segments.
  struct DbLine {
    bool usable = false;
    HomogeneousLine2d line;
    Interval1D interval;
  };
  std::vector<DbLine> db(db_lines.size());
  for (std::size_t j = 0; j < db_lines.size(); ++j) {
    if (db_lines[j].length() < cfg.min_segment_length) {
      ++local.short_segments_skipped;
      continue;
    }
    db[j].line = line_of_segment(db_lines[j]);
    const Eigen::Vector2d dir = db[j].line.direction();
    db[j].interval =
        Interval1D::from_unordered(dir.dot(db_lines[j].p_left), dir.dot(db_lines[j].p_right));
    db[j].usable = db[j].interval.length() > 0.0;
  }

  std::vector<EpipolarCandidate> out;
  for (std::size_t qi = 0; qi < query_lines.size(); ++qi) {
    const Segment2d& q = query_lines[qi];
    if (q.length() < cfg.min_segment_length) {
      ++local.short_segments_skipped;
      continue;
    }
    // Epipolar lines of the two query endpoints; degenerate only when an
    // endpoint coincides with the epipole.
    HomogeneousLine2d el, er;
    try {
      el = HomogeneousLine2d::from_coeffs(f * Eigen::Vector3d(q.p_left.x(), q.p_left.y(), 1.0));
      er = HomogeneousLine2d::from_coeffs(f * Eigen::Vector3d(q.p_right.x(), q.p_right.y(), 1.0));
    } catch (const DegenerateLine&) {
      for (const DbLine& d : db) local.degenerate_skips += d.usable;
      continue;
    }

    std::vector<EpipolarCandidate> kept;
    for (std::size_t dj = 0; dj < db_lines.size(); ++dj) {
      if (!db[dj].usable) continue;
      ++local.pairs_considered;
      try {
        const Eigen::Vector3d pl = intersect_lines(db[dj].line, el);
        const Eigen::Vector3d pr = intersect_lines(db[dj].line, er);
        double tl = 0.0, tr = 0.0;
        if (!line_parameter(db[dj].line, pl, tl) || !line_parameter(db[dj].line, pr, tr))
          throw ParallelLines("transferred endpoint at infinity");
        const Interval1D transferred = Interval1D::from_unordered(tl, tr);
        if (transferred.length() <= 0.0)
          throw DegenerateSegment("transferred interval has zero length");
        const double overlap = overlap_ratio(transferred, db[dj].interval);
        if (overlap >= cfg.overlap_threshold) {
          kept.push_back({static_cast<int>(qi), static_cast<int>(dj), overlap});
        } else {
          ++local.below_overlap;
        }
      } catch (const DegenerateError&) {
        ++local.degenerate_skips;
      }
    }

    std::stable_sort(kept.begin(), kept.end(),
                     [](const EpipolarCandidate& a, const EpipolarCandidate& b) {
                       return a.overlap > b.overlap;
                     });
    if (static_cast<int>(kept.size()) > cfg.max_candidates_per_query_line)
      kept.resize(cfg.max_candidates_per_query_line);
    local.candidates_kept += static_cast<std::int64_t>(kept.size());
    out.insert(out.end(), kept.begin(), kept.end());
  }

  if (stats != nullptr) stats->merge(local);
  return out;
}

MatchResult match_query_to_map(const std::vector<Segment2d>& query_lines,
                               const std::vector<int>& retrieval_pairs,
                               const std::vector<DatabaseImage>& db_images,
                               const LineMap3D& line_map, const PoseSE3d& init_pose,
                               const CameraIntrinsicsd& query_intrinsics, const MatchConfig& cfg) {
  cfg.validate();
  if (retrieval_pairs.empty()) throw EmptyRetrieval("no retrieved database images");

  std::map<int, const DatabaseImage*> db_by_id;
  for (const DatabaseImage& image : db_images) db_by_id[image.id] = &image;

  MatchResult result;

  // Candidate (query line, map segment) pairs with residuals under the
  // initial pose, deduplicated to the best overlap per pair.
  struct Candidate {
    double residual;
    int map_segment;
    int database_image;
    int database_segment;
    double overlap;
  };
  std::map<std::pair<int, int>, Candidate> pair_best;  // (query, map segment) -> candidate

  for (int db_id : retrieval_pairs) {
    const auto it = db_by_id.find(db_id);
    if (it == db_by_id.end()) throw InvalidInput("retrieved database image id is unknown");
    const DatabaseImage& db = *it->second;

    Eigen::Matrix3d f;
    try {
      f = fundamental_matrix(query_intrinsics, init_pose, db.intrinsics, db.pose);
    } catch (const DegenerateBaseline&) {
      ++result.stats.degenerate_skips;
      continue;
    }

    const std::vector<EpipolarCandidate> cands =
        epipolar_candidates(query_lines, db.segments, f, cfg, &result.stats);
    for (const EpipolarCandidate& c : cands) {
      const int map_idx = line_map.find_by_source(db.id, c.db_id);
      if (map_idx < 0) {
        ++result.stats.unmapped_db_segments;
        continue;
      }
      try {
        const LineReprojResidual res =
            line_reproj_residual(query_lines[c.query_id], line_map.segments[map_idx],
                                 query_intrinsics, init_pose, cfg.angle_scale);
        const auto key = std::make_pair(c.query_id, map_idx);
        const auto found = pair_best.find(key);
        if (found == pair_best.end() || c.overlap > found->second.overlap) {
          pair_best[key] = {res.total, map_idx, db.id, c.db_id, c.overlap};
        }
      } catch (const BehindCamera&) {
        ++result.stats.behind_camera_skips;
      }
    }
  }

  // Per query line: candidates sorted by ascending residual.
  std::map<int, std::vector<Candidate>> per_query;
  for (const auto& [key, cand] : pair_best) {
    if (cand.residual < cfg.residual_threshold) per_query[key.first].push_back(cand);
  }
  for (auto& [qid, cands] : per_query) {
    std::sort(cands.begin(), cands.end(), [](const Candidate& a, const Candidate& b) {
      return std::make_pair(a.residual, a.map_segment) <
             std::make_pair(b.residual, b.map_segment);
    });
  }

  // First pass: every query line proposes its best candidate; conflicts on a
  // map segment are won by the lowest residual (ties by query id).
  std::map<int, int> winner;  // map segment -> query id
  std::map<int, Candidate> proposal;
  for (const auto& [qid, cands] : per_query) {
    const Candidate& c = cands.front();
    proposal.emplace(qid, c);
    const auto w = winner.find(c.map_segment);
    if (w == winner.end() || per_query[w->second].front().residual > c.residual) {
      winner[c.map_segment] = qid;
    }
  }

  std::set<int> taken;
  std::map<int, Candidate> assigned;
  std::vector<int> losers;
  for (const auto& [qid, cand] : proposal) {
    if (winner[cand.map_segment] == qid) {
      assigned.emplace(qid, cand);
      taken.insert(cand.map_segment);
    } else {
      losers.push_back(qid);
    }
  }

  // One reassignment pass: losers take their next-best free candidate in
  // query order.
  for (int qid : losers) {
    for (const Candidate& c : per_query[qid]) {
      if (taken.count(c.map_segment) == 0) {
        assigned.emplace(qid, c);
        taken.insert(c.map_segment);
        break;
      }
    }
  }

  for (const auto& [qid, cand] : assigned) {
    LineCorrespondenced corr;
    corr.seg2d = query_lines[qid];
    corr.seg3d = line_map.segments[cand.map_segment];
    result.correspondences.push_back(corr);
    CandidateMatch match;
    match.query_segment = qid;
    match.database_image = cand.database_image;
    match.database_segment = cand.database_segment;
    match.map_segment = cand.map_segment;
    match.overlap = cand.overlap;
    match.residual = cand.residual;
    result.selected.push_back(match);
    const int bin = std::min(10, static_cast<int>(cand.residual));
    ++result.stats.residual_histogram[static_cast<std::size_t>(bin)];
  }
  return result;
}

}  // namespace plloc
