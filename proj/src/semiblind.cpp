#include "unroll/semiblind.hpp"

#include <stdexcept>

namespace unroll {

EnergySpec fluct_energy_spec(const FluctEnergySpec& spec, std::size_t rows, std::size_t cols) {
  if (spec.sigma2 < 0.0) throw std::invalid_argument("fluctuation energy: negative sigma^2");
  return EnergySpec{ForwardModel(spec.width, 1, KernelMode::Squared, rows, cols, spec.support),
                    Fidelity{FidelityTag::GaussianL2, spec.sigma2}, spec.rho, spec.eps_proj};
}

double fluct_energy_value(const FluctEnergySpec& spec, const Image& vu, const Image& vf) {
  return energy_value(fluct_energy_spec(spec, vu.rows(), vu.cols()), vu, vf);
}

Image fluct_gradient(const FluctEnergySpec& spec, const Image& vu, const Image& vf) {
  return energy_gradient(fluct_energy_spec(spec, vu.rows(), vu.cols()), vu, vf);
}

Image dgrad_dsigma_width(const FluctEnergySpec& spec, const Image& vu, const Image& vf) {
  return dgrad_dwidth(fluct_energy_spec(spec, vu.rows(), vu.cols()), vu, vf);
}

Problem semiblind_problem(const FluctEnergySpec& spec, std::size_t rows, std::size_t cols,
                          const LossConfig& loss) {
  const EnergySpec e = fluct_energy_spec(spec, rows, cols);
  return Problem{e.model, e.fidelity, spec.eps_proj, loss, true};
}

SemiblindResult solve_and_learn_semiblind(const std::vector<Sample>& pairs,
                                          const SemiblindConfig& config) {
  if (pairs.empty()) throw std::invalid_argument("semiblind: empty dataset");
  const std::size_t rows = pairs.front().f.rows();
  const std::size_t cols = pairs.front().f.cols();
  const Problem problem = semiblind_problem(config.energy, rows, cols, config.loss);

  HyperParams theta = config.theta0;
  theta.width = config.energy.width;
  TrainConfig tc = config.train;
  tc.learn.width = true;

  SemiblindResult out;
  out.bounds = default_bounds(pairs, problem, 10.0, 1e4, config.width_cap);
  out.training = unroll::train(pairs, problem, theta, tc, out.bounds);
  return out;
}

}  // namespace unroll
