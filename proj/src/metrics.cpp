#include "unroll/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <tuple>

namespace unroll {

PointSet extract_points(const Image& img, double threshold) {
  if (threshold < 0.0) throw std::invalid_argument("extract_points: negative threshold");
  PointSet pts;
  for (std::size_t r = 0; r < img.rows(); ++r) {
    for (std::size_t c = 0; c < img.cols(); ++c) {
      if (img(r, c) > threshold) {
        pts.push_back({static_cast<int>(r), static_cast<int>(c), img(r, c)});
      }
    }
  }
  return pts;
}

MatchResult match_points(const PointSet& recon, const PointSet& gt, double radius) {
  if (radius < 0.0) throw std::invalid_argument("match_points: negative radius");
  std::vector<MatchedPair> candidates;
  const double r2max = radius * radius;
  for (std::size_t i = 0; i < gt.size(); ++i) {
    for (std::size_t j = 0; j < recon.size(); ++j) {
      const double dr = gt[i].row - recon[j].row;
      const double dc = gt[i].col - recon[j].col;
      const double d2 = dr * dr + dc * dc;
      if (d2 <= r2max) candidates.push_back({i, j, std::sqrt(d2)});
    }
  }
  std::sort(candidates.begin(), candidates.end(), [](const MatchedPair& a, const MatchedPair& b) {
    return std::tie(a.distance, a.gt, a.recon) < std::tie(b.distance, b.gt, b.recon);
  });

  std::vector<bool> gt_used(gt.size(), false);
  std::vector<bool> recon_used(recon.size(), false);
  MatchResult out;
  for (const MatchedPair& p : candidates) {
    if (gt_used[p.gt] || recon_used[p.recon]) continue;
    gt_used[p.gt] = true;
    recon_used[p.recon] = true;
    out.pairs.push_back(p);
  }
  out.tp = out.pairs.size();
  out.fn = gt.size() - out.tp;
  out.fp = recon.size() - out.tp;
  return out;
}

double jaccard(const MatchResult& m) {
  const std::size_t denom = m.tp + m.fn + m.fp;
  if (denom == 0) return 1.0;
  return static_cast<double>(m.tp) / static_cast<double>(denom);
}

double psnr(const Image& u, const Image& g, double peak) {
  require_same_shape(u, g, "psnr");
  if (!(peak > 0.0)) throw std::invalid_argument("psnr: peak must be positive");
  double acc = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    const double d = u[i] - g[i];
    acc += d * d;
  }
  const double mse = acc / static_cast<double>(u.size());
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(peak * peak / mse);
}

Image average_stack(const std::vector<Image>& frames) {
  if (frames.empty()) throw std::invalid_argument("average_stack: empty stack");
  Image out(frames.front().rows(), frames.front().cols());
  for (const Image& f : frames) out += f;
  out *= 1.0 / static_cast<double>(frames.size());
  return out;
}

}  // namespace unroll
