#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>

#include "helpers.hpp"
#include "unroll/metrics.hpp"

using namespace unroll;
using testing::random_image;

namespace {

// Largest matching within the radius by trying every assignment.
std::size_t exhaustive_tp(const PointSet& recon, const PointSet& gt, double radius) {
  std::vector<bool> used(recon.size(), false);
  std::function<std::size_t(std::size_t)> best = [&](std::size_t i) -> std::size_t {
    if (i == gt.size()) return 0;
    std::size_t top = best(i + 1);
    for (std::size_t j = 0; j < recon.size(); ++j) {
      if (used[j]) continue;
      if (std::hypot(gt[i].row - recon[j].row, gt[i].col - recon[j].col) > radius) continue;
      used[j] = true;
      top = std::max(top, 1 + best(i + 1));
      used[j] = false;
    }
    return top;
  };
  return best(0);
}

PointSet random_points(Rng& rng, std::size_t count, int side) {
  PointSet pts;
  while (pts.size() < count) {
    const Point p{static_cast<int>(rng.uniform_int(0, side - 1)),
                  static_cast<int>(rng.uniform_int(0, side - 1)), 1.0};
    const bool dup = std::any_of(pts.begin(), pts.end(), [&](const Point& q) {
      return q.row == p.row && q.col == p.col;
    });
    if (!dup) pts.push_back(p);
  }
  return pts;
}

}  // namespace

TEST_CASE("point extraction") {
  CHECK(extract_points(Image(5, 5)).empty());

  Image b(3, 4);
  b(0, 1) = 255.0;
  b(2, 3) = 255.0;
  b(1, 0) = 255.0;
  const PointSet pts = extract_points(b, 0.0);
  REQUIRE(pts.size() == 3);
  CHECK(pts[0].row == 0);
  CHECK(pts[0].col == 1);
  CHECK(pts[1].row == 1);
  CHECK(pts[2].col == 3);
  CHECK(pts[2].intensity == 255.0);

  const Image u = random_image(10, 10, 1, 0.0, 1.0);
  std::size_t prev = u.size() + 1;
  for (double t = 0.0; t < 1.0; t += 0.05) {
    const std::size_t n = extract_points(u, t).size();
    CHECK(n <= prev);
    prev = n;
  }
  CHECK_THROWS(extract_points(u, -1.0));
}

TEST_CASE("matching") {
  SUBCASE("identical sets") {
    const PointSet gt{{1, 1, 1.0}, {4, 7, 1.0}, {9, 2, 1.0}};
    const MatchResult m = match_points(gt, gt, 0.0);
    CHECK(m.tp == 3);
    CHECK(m.fp == 0);
    CHECK(m.fn == 0);
    CHECK(jaccard(m) == 1.0);
  }
  SUBCASE("only the closest reconstruction counts") {
    const PointSet gt{{5, 5, 1.0}};
    const PointSet recon{{5, 7, 1.0}, {5, 6, 1.0}};
    const MatchResult m = match_points(recon, gt, 2.0);
    CHECK(m.tp == 1);
    CHECK(m.fp == 1);
    CHECK(m.fn == 0);
    REQUIRE(m.pairs.size() == 1);
    CHECK(m.pairs[0].recon == 1);
    CHECK(m.pairs[0].distance == 1.0);
  }
  SUBCASE("radius is inclusive") {
    const PointSet gt{{0, 0, 1.0}};
    const PointSet recon{{3, 4, 1.0}};
    CHECK(match_points(recon, gt, 5.0).tp == 1);
    CHECK(match_points(recon, gt, 4.999).tp == 0);
  }
  SUBCASE("ties resolve by lower indices") {
    const PointSet gt{{0, 0, 1.0}, {0, 2, 1.0}};
    const PointSet recon{{0, 1, 1.0}};
    const MatchResult m = match_points(recon, gt, 1.0);
    REQUIRE(m.pairs.size() == 1);
    CHECK(m.pairs[0].gt == 0);
  }
  CHECK_THROWS(match_points({}, {}, -1.0));
}

TEST_CASE("greedy matching against the exhaustive optimum") {
  Rng rng(11);
  int equal = 0;
  const int trials = 300;
  for (int t = 0; t < trials; ++t) {
    const PointSet gt = random_points(rng, static_cast<std::size_t>(rng.uniform_int(0, 7)), 8);
    const PointSet recon = random_points(rng, static_cast<std::size_t>(rng.uniform_int(0, 7)), 8);
    const double radius = static_cast<double>(rng.uniform_int(0, 4));
    const MatchResult m = match_points(recon, gt, radius);
    const std::size_t opt = exhaustive_tp(recon, gt, radius);
    CHECK(m.tp <= opt);
    CHECK(opt - m.tp <= 1);
    CHECK(m.tp + m.fn == gt.size());
    CHECK(m.tp + m.fp == recon.size());
    if (m.tp == opt) ++equal;

    // Swapping the roles exchanges FP and FN.
    const MatchResult s = match_points(gt, recon, radius);
    CHECK(s.tp == m.tp);
    CHECK(s.fp == m.fn);
    CHECK(s.fn == m.fp);
  }
  CHECK(equal >= trials * 9 / 10);
}

TEST_CASE("jaccard is non-decreasing in the radius") {
  Rng rng(12);
  for (int t = 0; t < 50; ++t) {
    const PointSet gt = random_points(rng, 20, 32);
    const PointSet recon = random_points(rng, 25, 32);
    double prev = 0.0;
    for (double r : {0.0, 1.0, 2.0, 3.0, 4.0, 6.0}) {
      const double j = jaccard(match_points(recon, gt, r));
      CHECK(j >= prev);
      prev = j;
    }
  }
}

TEST_CASE("jaccard arithmetic") {
  CHECK(jaccard(MatchResult{3, 2, 1, {}}) == 0.5);
  CHECK(jaccard(MatchResult{4, 0, 0, {}}) == 1.0);
  CHECK(jaccard(MatchResult{0, 0, 5, {}}) == 0.0);
  CHECK(jaccard(MatchResult{}) == 1.0);
  CHECK(jaccard(match_points({}, {{1, 1, 1.0}}, 2.0)) == 0.0);
}

TEST_CASE("psnr") {
  const Image g = random_image(8, 8, 2, 0.0, 255.0);
  CHECK(psnr(g, g) == std::numeric_limits<double>::infinity());

  Image u = g;
  for (double& v : u.values()) v += 10.0;
  CHECK(psnr(u, g, 10.0) == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(psnr(u, g, 255.0) == doctest::Approx(20.0 * std::log10(25.5)).epsilon(1e-12));

  Image half = g;
  for (double& v : half.values()) v += 10.0 / std::sqrt(2.0);
  CHECK(psnr(half, g) - psnr(u, g) == doctest::Approx(10.0 * std::log10(2.0)).epsilon(1e-10));
  CHECK_THROWS(psnr(u, g, 0.0));
  CHECK_THROWS(psnr(Image(2, 2), Image(3, 3)));
}

TEST_CASE("stack averaging") {
  const Image x = random_image(6, 5, 3);
  CHECK(average_stack({x}) == x);
  CHECK(max_abs(average_stack({x, x}) - x) < 1e-15);

  std::vector<Image> frames;
  for (std::uint64_t s = 0; s < 7; ++s) frames.push_back(random_image(6, 5, 10 + s));
  const Image m = average_stack(frames);
  for (std::size_t i = 0; i < m.size(); ++i) {
    double acc = 0.0;
    for (const Image& f : frames) acc += f[i];
    CHECK(std::abs(m[i] - acc / 7.0) < 1e-12);
  }
  CHECK_THROWS(average_stack({}));
  CHECK_THROWS(average_stack({Image(2, 2), Image(3, 3)}));
}
