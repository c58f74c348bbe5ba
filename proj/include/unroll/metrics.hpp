#ifndef UNROLL_METRICS_HPP
#define UNROLL_METRICS_HPP

#include <cstddef>
#include <vector>

#include "unroll/image.hpp"

namespace unroll {

struct Point {
  int row = 0;
  int col = 0;
  double intensity = 0.0;
};

using PointSet = std::vector<Point>;

struct MatchedPair {
  std::size_t gt = 0;
  std::size_t recon = 0;
  double distance = 0.0;
};

struct MatchResult {
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;
  std::vector<MatchedPair> pairs;
};

// Pixels with intensity strictly above the threshold, in row-major order.
PointSet extract_points(const Image& img, double threshold = 0.0);

// One-to-one matching within Euclidean radius: candidate pairs are taken in
// ascending distance (ties by gt index, then recon index) and accepted when
// both ends are still free.
MatchResult match_points(const PointSet& recon, const PointSet& gt, double radius);

// TP / (TP + FN + FP); 1 when both sets are empty.
double jaccard(const MatchResult& match);

// 10 log10(peak^2 / MSE); +infinity when the images agree.
double psnr(const Image& u, const Image& g, double peak = 255.0);

Image average_stack(const std::vector<Image>& frames);

}  // namespace unroll

#endif  // UNROLL_METRICS_HPP
