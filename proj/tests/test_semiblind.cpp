#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "helpers.hpp"
#include "unroll/semiblind.hpp"

using namespace unroll;
using testing::random_image;
using testing::rel_diff;

namespace {

FluctEnergySpec spec16() {
  FluctEnergySpec s;
  s.width = 1.5;
  s.sigma2 = 0.4;
  s.rho = 0.2;
  s.support = 9;
  return s;
}

std::vector<Sample> fluct_pairs(std::size_t count, std::uint64_t seed) {
  FluctuationConfig cfg;
  cfg.size = 16;
  cfg.frames = 300;
  cfg.width = 1.5;
  cfg.support = 9;
  cfg.sigma = 1.0;
  cfg.filaments_lo = 1;
  cfg.filaments_hi = 2;
  std::vector<Sample> out;
  for (std::size_t s = 0; s < count; ++s) {
    Rng rng = Rng::stream(seed, s);
    const Image pattern = gen_filament_pattern(cfg, rng);
    FluctuationPair p = gen_fluctuation_pair(pattern, cfg, rng);
    out.push_back({std::move(p.vf), std::move(p.vg)});
  }
  return out;
}

}  // namespace

TEST_CASE("fluctuation energy gradient") {
  const FluctEnergySpec s = spec16();
  const Image g0 = fluct_gradient(s, Image(16, 16), Image(16, 16, s.sigma2));
  for (double v : g0.values()) CHECK(v == doctest::Approx(s.rho).epsilon(1e-12));

  const Image vu = random_image(16, 16, 1, 0.5, 3.0);
  const Image vf = random_image(16, 16, 2, 0.0, 4.0);
  const Image an = fluct_gradient(s, vu, vf);
  Image fd(16, 16);
  for (std::size_t i = 0; i < vu.size(); ++i) {
    Image up = vu, dn = vu;
    const double h = 1e-5;
    up[i] += h;
    dn[i] -= h;
    fd[i] = (fluct_energy_value(s, up, vf) - fluct_energy_value(s, dn, vf)) / (2.0 * h);
  }
  CHECK(rel_diff(an, fd) < 1e-6);

  // Half-squared data term: E(0) = 1/2 ||sigma^2 - V_F||^2.
  FluctEnergySpec plain = s;
  double ref = 0.0;
  for (double v : vf.values()) ref += 0.5 * (s.sigma2 - v) * (s.sigma2 - v);
  CHECK(fluct_energy_value(plain, Image(16, 16), vf) == doctest::Approx(ref).epsilon(1e-12));

  FluctEnergySpec bad = s;
  bad.sigma2 = -1.0;
  CHECK_THROWS(fluct_gradient(bad, vu, vf));
}

TEST_CASE("width derivative of the fluctuation gradient") {
  const FluctEnergySpec s = spec16();
  const Image vu = random_image(16, 16, 3, 0.5, 3.0);
  const Image vf = random_image(16, 16, 4, 0.0, 4.0);
  const double h = 1e-5;
  FluctEnergySpec up = s, dn = s;
  up.width += h;
  dn.width -= h;
  const Image fd = (1.0 / (2.0 * h)) * (fluct_gradient(up, vu, vf) - fluct_gradient(dn, vu, vf));
  CHECK(rel_diff(dgrad_dsigma_width(s, vu, vf), fd) < 1e-4);

  // Zero residual and zero V_u.
  CHECK(max_abs(dgrad_dsigma_width(s, Image(16, 16), Image(16, 16, s.sigma2))) == 0.0);

  // With the residual held at zero only the second term remains, linear in V_u.
  const ForwardModel sq(s.width, 1, KernelMode::Squared, 16, 16, s.support);
  auto exact = [&](const Image& v) {
    Image f = sq.apply(v);
    for (double& x : f.values()) x += s.sigma2;
    return f;
  };
  const Image d1 = dgrad_dsigma_width(s, vu, exact(vu));
  const Image d2 = dgrad_dsigma_width(s, 2.0 * vu, exact(2.0 * vu));
  CHECK(rel_diff(d2, 2.0 * d1) < 1e-12);
}

TEST_CASE("data term sanity") {
  FluctEnergySpec s = spec16();
  s.rho = 0.0;
  const Image vg = random_image(16, 16, 5, 0.0, 5.0);
  const ForwardModel sq(s.width, 1, KernelMode::Squared, 16, 16, s.support);
  Image vf = sq.apply(vg);
  for (double& x : vf.values()) x += s.sigma2;
  CHECK(fluct_energy_value(s, vg, vf) < fluct_energy_value(s, Image(16, 16), vf));
  CHECK(fluct_energy_value(s, vg, vf) < 1e-20);
}

TEST_CASE("width gradient through the unrolled pipeline") {
  const std::vector<Sample> pairs = fluct_pairs(3, 21);
  LossConfig loss{LossKind::L1, {}, {}, {}};
  loss.bin.c0 = 20.0;
  int checked = 0;
  for (const Sample& pair : pairs) {
    const Problem p = semiblind_problem(spec16(), 16, 16, loss);
    HyperParams theta;
    theta.width = 1.7;
    theta.rho = 0.01 * rho_max({pair}, p.model, p.fidelity.bg);
    theta.alpha.assign(5, 0.5 / operator_norm_sq(p.model.with_width(theta.width)));
    const Image target = binarize_ground_truth(pair.g, 255.0);

    // Threshold inside the bulk of the reconstructed values.
    theta.delta = 0.0;
    const Image u = solve_unrolled(p.energy(theta), pair.f, theta.alpha, false).u;
    std::vector<double> vals;
    for (double v : u.values()) {
      if (v > 2.0 * loss.bin.c0) vals.push_back(v);
    }
    if (vals.empty()) continue;
    std::nth_element(vals.begin(), vals.begin() + vals.size() / 2, vals.end());
    theta.delta = vals[vals.size() / 2] - loss.bin.c0;

    GradCheckOptions opt;
    opt.params = {"width"};
    opt.tolerance = 1e-3;
    const GradCheckReport r = finite_difference_check(p, theta, pair.f, target, opt);
    if (!r.smooth) continue;
    CAPTURE(r.table());
    CHECK(r.passed());
    ++checked;
  }
  CHECK(checked >= 1);
}

TEST_CASE("joint learning") {
  const std::vector<Sample> pairs = fluct_pairs(2, 31);
  SemiblindConfig cfg;
  cfg.energy = spec16();
  cfg.energy.width = 2.0;
  cfg.energy.sigma2 = 1.0;
  cfg.theta0.rho = 1e-5;
  cfg.theta0.alpha.assign(10, 1.0);
  cfg.theta0.delta = 25.0;
  cfg.loss.bin.c0 = 20.0;
  cfg.train.outer_iters = 4;
  cfg.train.scaling = Scaling::Secant;
  cfg.train.learn.delta = true;
  const SemiblindResult r = solve_and_learn_semiblind(pairs, cfg);
  CHECK(r.bounds.width.hi == 10.0);
  REQUIRE(r.training.history.size() >= 2);
  CHECK(r.training.history.front().theta.width == 2.0);
  for (std::size_t i = 1; i < r.training.history.size(); ++i) {
    CHECK(r.training.history[i].loss <= r.training.history[i - 1].loss);
  }
  for (const HistoryRow& row : r.training.history) CHECK(inside_box(row.theta, r.bounds));

  // Starting values used by the fluctuation experiment sit inside the box.
  HyperParams start{1e-5, std::vector<double>(10, 1000.0), 25.0, 5.0};
  CHECK(inside_box(start, r.bounds));
  CHECK_THROWS(solve_and_learn_semiblind({}, cfg));
}
