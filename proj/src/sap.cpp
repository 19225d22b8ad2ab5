#include "plloc/sap.hpp"

#include <algorithm>
#include <limits>
#include <numeric>

#include "plloc/error.hpp"

namespace plloc {

void SapConfig::validate() const {
  if (thresholds.empty()) throw InvalidInput("sAP thresholds must not be empty");
  double prev = 0.0;
  for (double t : thresholds) {
    if (t <= prev) throw InvalidInput("sAP thresholds must be positive and ascending");
    prev = t;
  }
  if (eval_width <= 0 || eval_height <= 0) throw InvalidInput("eval resolution must be positive");
}

double structural_distance_sq(const Segment2d& a, const Segment2d& b) {
  const double straight =
      (a.p_left - b.p_left).squaredNorm() + (a.p_right - b.p_right).squaredNorm();
  const double crossed =
      (a.p_left - b.p_right).squaredNorm() + (a.p_right - b.p_left).squaredNorm();
  return std::min(straight, crossed);
}

namespace {

Segment2d rescale(const Segment2d& s, double sx, double sy) {
  const Eigen::Vector2d scale(sx, sy);
  return Segment2d(s.p_left.cwiseProduct(scale), s.p_right.cwiseProduct(scale), s.confidence);
}

/// Area under the precision-recall curve, all-points interpolation.
double average_precision(const std::vector<int>& tp_flags, std::size_t n_gt) {
  std::vector<double> recall{0.0};
  std::vector<double> precision{0.0};
  int tp = 0;
  for (std::size_t k = 0; k < tp_flags.size(); ++k) {
    tp += tp_flags[k];
    recall.push_back(static_cast<double>(tp) / static_cast<double>(n_gt));
    precision.push_back(static_cast<double>(tp) / static_cast<double>(k + 1));
  }
  recall.push_back(1.0);
  precision.push_back(0.0);
  for (std::size_t i = precision.size() - 1; i > 0; --i)
    precision[i - 1] = std::max(precision[i - 1], precision[i]);
  double ap = 0.0;
  for (std::size_t i = 0; i + 1 < recall.size(); ++i)
    ap += (recall[i + 1] - recall[i]) * precision[i + 1];
  return ap;
}

}  // namespace

std::map<double, double> sap_score(const std::vector<Segment2d>& predicted,
                                   const std::vector<Segment2d>& ground_truth, int image_width,
                                   int image_height, const SapConfig& cfg) {
  cfg.validate();
  if (image_width <= 0 || image_height <= 0) throw InvalidInput("image size must be positive");
  if (ground_truth.empty()) throw EmptyGroundTruth("sAP is undefined without ground truth");

  const double sx = static_cast<double>(cfg.eval_width) / image_width;
  const double sy = static_cast<double>(cfg.eval_height) / image_height;

  std::vector<Segment2d> gt;
  gt.reserve(ground_truth.size());
  for (const Segment2d& g : ground_truth) gt.push_back(rescale(g, sx, sy));

  // Rank by confidence descending; ties keep list order.
  std::vector<std::size_t> order(predicted.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) {
    return predicted[i].confidence > predicted[j].confidence;
  });
  std::vector<Segment2d> ranked;
  ranked.reserve(predicted.size());
  for (std::size_t i : order) ranked.push_back(rescale(predicted[i], sx, sy));

  std::map<double, double> scores;
  for (double threshold : cfg.thresholds) {
    std::vector<char> matched(gt.size(), 0);
    std::vector<int> tp_flags(ranked.size(), 0);
    for (std::size_t k = 0; k < ranked.size(); ++k) {
      double best = std::numeric_limits<double>::infinity();
      std::size_t best_g = gt.size();
      for (std::size_t g = 0; g < gt.size(); ++g) {
        if (matched[g]) continue;
        const double d = structural_distance_sq(ranked[k], gt[g]);
        if (d < best) {
          best = d;
          best_g = g;
        }
      }
      if (best_g < gt.size() && best < threshold) {
        matched[best_g] = 1;
        tp_flags[k] = 1;
      }
    }
    scores[threshold] = 100.0 * average_precision(tp_flags, gt.size());
  }
  return scores;
}

}  // namespace plloc
