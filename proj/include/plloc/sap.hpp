#pragma once

#include <map>
#include <vector>

#include "plloc/geometry.hpp"

namespace plloc {

/// Structural average precision configuration. Thresholds are on the squared
/// endpoint distance after rescaling both segment sets to eval resolution.
struct SapConfig {
  std::vector<double> thresholds = {5.0, 10.0, 15.0};
  int eval_width = 128;
  int eval_height = 128;

  void validate() const;
};

/// Squared structural distance between two segments: the smaller, over the
/// two endpoint pairings, of the summed squared endpoint distances.
double structural_distance_sq(const Segment2d& a, const Segment2d& b);

/// Structural AP per threshold, in [0, 100]. Predictions are ranked by
/// confidence (descending, ties by list order); each prediction greedily
/// matches the nearest still-unmatched ground-truth segment if their
/// structural distance is below the threshold. AP is the area under the
/// precision-recall curve with the standard all-points interpolation.
/// Both lists must be expressed at (image_width, image_height); they are
/// rescaled internally to the evaluation resolution.
std::map<double, double> sap_score(const std::vector<Segment2d>& predicted,
                                   const std::vector<Segment2d>& ground_truth, int image_width,
                                   int image_height, const SapConfig& cfg = {});

}  // namespace plloc
