#ifndef UNROLL_SEMIBLIND_HPP
#define UNROLL_SEMIBLIND_HPP

#include <cstddef>
#include <vector>

#include "unroll/backprop.hpp"
#include "unroll/energy.hpp"
#include "unroll/outer_trainer.hpp"
#include "unroll/simulate.hpp"

namespace unroll {

// Variance-domain energy 1/2 ||h^2(width) * V + sigma2 - V_F||^2 + rho ||V||_1
// on the non-negative orthant.
struct FluctEnergySpec {
  double width = 3.0;
  double sigma2 = 0.0;
  double rho = 0.0;
  double eps_proj = 1e-4;
  std::size_t support = 0;  // 0 = sized by the current width
};

EnergySpec fluct_energy_spec(const FluctEnergySpec& spec, std::size_t rows, std::size_t cols);

double fluct_energy_value(const FluctEnergySpec& spec, const Image& vu, const Image& vf);
Image fluct_gradient(const FluctEnergySpec& spec, const Image& vu, const Image& vf);
// d/dwidth of fluct_gradient.
Image dgrad_dsigma_width(const FluctEnergySpec& spec, const Image& vu, const Image& vf);

// Training problem on (V_F, V_G) pairs with the width learnable.
Problem semiblind_problem(const FluctEnergySpec& spec, std::size_t rows, std::size_t cols,
                          const LossConfig& loss);

struct SemiblindConfig {
  FluctEnergySpec energy;  // width is the initial guess
  HyperParams theta0;      // alpha sets K; width is taken from energy
  LossConfig loss{LossKind::L1, {}, {}, {}};
  TrainConfig train;
  double width_cap = 10.0;
};

struct SemiblindResult {
  TrainResult training;
  Bounds bounds;
};

// Pairs are stored as Sample{f = V_F, g = V_G}.
SemiblindResult solve_and_learn_semiblind(const std::vector<Sample>& pairs,
                                          const SemiblindConfig& config);

}  // namespace unroll

#endif  // UNROLL_SEMIBLIND_HPP
