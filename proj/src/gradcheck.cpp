#include "unroll/gradcheck.hpp"

#include <algorithm>

#include "unroll/outer_trainer.hpp"
#include "unroll/simulate.hpp"

namespace unroll {

CheckInstance make_check_instance(const CheckSetup& setup, std::uint64_t seed) {
  Rng rng = Rng::stream(seed, 0);
  const std::size_t n = setup.fine;
  const ForwardModel model(setup.width, setup.factor, KernelMode::Standard, n, n, setup.support);

  FrameGenConfig gen;
  gen.coarse = n / setup.factor;
  gen.factor = setup.factor;
  gen.emitters_lo = gen.emitters_hi = setup.emitters;
  gen.intensity_lo = 5.0;
  gen.intensity_hi = 20.0;
  gen.width = setup.width;
  gen.support = setup.support;
  const Image g = gen_sparse_frame(gen, rng);

  const bool kl = setup.fidelity == FidelityTag::PoissonKL;
  NoiseConfig noise;
  noise.kind = kl ? NoiseKind::Poisson : NoiseKind::Gaussian;
  noise.sigma = 0.1;
  noise.background = setup.background;
  const Image f = corrupt(g, model, noise, rng);

  const Fidelity fidelity{setup.fidelity, kl ? setup.background : 0.0};
  LossConfig loss;
  loss.kind = setup.loss;
  Problem problem{model, fidelity, 1e-4, loss, setup.learn_width};

  HyperParams theta;
  theta.rho = setup.rho_fraction * rho_max({Sample{f, g}}, model, kl ? setup.background : 0.0);
  double step = setup.step_fraction / operator_norm_sq(model);
  if (kl) step *= setup.background * setup.background / std::max(1.0, max_value(f));
  for (std::size_t k = 0; k < setup.K; ++k) {
    theta.alpha.push_back(step * (1.0 + 0.1 * static_cast<double>(k) / setup.K));
  }
  theta.width = setup.width;

  Image target = g;
  if (setup.loss == LossKind::L1) {
    target = binarize_ground_truth(g, 1.0);
    // Put the threshold just below a mid-ranked pixel so that pixel sits on
    // the binarization slope and delta has a nonzero derivative.
    const Image u = solve_unrolled(problem.energy(theta), f, theta.alpha, false).u;
    std::vector<double> vals;
    for (double v : u.values()) {
      if (v > 2.0 * loss.bin.c0) vals.push_back(v);
    }
    std::sort(vals.begin(), vals.end());
    theta.delta = vals.empty() ? 0.0 : vals[vals.size() / 2] - loss.bin.c0;
  }
  return CheckInstance{problem, theta, f, target};
}

CheckOutcome run_gradient_check(const CheckSetup& setup, std::uint64_t seed,
                                const GradCheckOptions& options, int max_redraws) {
  CheckOutcome out;
  for (int attempt = 0; attempt <= max_redraws; ++attempt) {
    const std::uint64_t s = seed + static_cast<std::uint64_t>(attempt);
    const CheckInstance inst = make_check_instance(setup, s);
    out.report = finite_difference_check(inst.problem, inst.theta, inst.f, inst.target, options);
    out.seed = s;
    out.redraws = attempt;
    if (out.report.smooth) break;
  }
  return out;
}

}  // namespace unroll
