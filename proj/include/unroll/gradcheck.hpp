#ifndef UNROLL_GRADCHECK_HPP
#define UNROLL_GRADCHECK_HPP

#include <cstddef>
#include <cstdint>

#include "unroll/backprop.hpp"

namespace unroll {

// Small seeded instance for end-to-end gradient checks.
struct CheckSetup {
  std::size_t fine = 12;
  std::size_t factor = 2;
  std::size_t K = 5;
  double width = 1.2;
  std::size_t support = 7;  // fixed so width probes do not resize the kernel
  std::size_t emitters = 6;
  LossKind loss = LossKind::L2;
  FidelityTag fidelity = FidelityTag::GaussianL2;
  double background = 2.0;  // KL background
  bool learn_width = true;
  double rho_fraction = 0.05;  // rho = rho_fraction * rho_max
  double step_fraction = 0.5;  // alpha_k = step_fraction / ||A||^2 (L2)
};

struct CheckInstance {
  Problem problem;
  HyperParams theta;
  Image f;
  Image target;
};

CheckInstance make_check_instance(const CheckSetup& setup, std::uint64_t seed);

struct CheckOutcome {
  GradCheckReport report;
  std::uint64_t seed = 0;  // seed of the instance that was finally checked
  int redraws = 0;
};

// Draws instances from consecutive seeds until the central differences stay
// on one smooth piece of every Pi / B branch, then reports that instance.
CheckOutcome run_gradient_check(const CheckSetup& setup, std::uint64_t seed,
                                const GradCheckOptions& options, int max_redraws = 20);

}  // namespace unroll

#endif  // UNROLL_GRADCHECK_HPP
