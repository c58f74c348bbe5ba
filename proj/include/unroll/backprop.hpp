#ifndef UNROLL_BACKPROP_HPP
#define UNROLL_BACKPROP_HPP

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "unroll/energy.hpp"
#include "unroll/grid_ops.hpp"
#include "unroll/losses.hpp"
#include "unroll/unrolled_solver.hpp"

namespace unroll {

enum class LossKind { L2, L1 };

// Upper-level loss. For L1 the threshold inside `bin` is overwritten by the
// learned delta. The binarization level is max(u) unless fixed_peak is set.
struct LossConfig {
  LossKind kind = LossKind::L2;
  BinarizationParams bin;
  HuberParams hub;
  std::optional<double> fixed_peak;
};

struct ParamGradient {
  double rho = 0.0;
  std::vector<double> alpha;
  double delta = 0.0;
  double width = 0.0;

  ParamGradient& operator+=(const ParamGradient& other);
};

// Everything that turns hyperparameters into a loss for one (f, target)
// pair. The model is rebuilt at theta.width when learn_width is set.
struct Problem {
  ForwardModel model;
  Fidelity fidelity;
  double eps_proj = 1e-4;
  LossConfig loss;
  bool learn_width = false;

  EnergySpec energy(const HyperParams& theta) const;
  BinarizationParams binarization(const HyperParams& theta) const;
};

// dL/du at u^(K). target is g for L2 and the binarized ground truth for L1.
// `peak` freezes the binarization level (defaults to max(u)).
Image loss_grad_u(const LossConfig& loss, const Image& u, const Image& target,
                  std::optional<double> peak = std::nullopt);

double evaluate_loss(const LossConfig& loss, const Image& u, const Image& target,
                     std::optional<double> peak = std::nullopt);

// Reverse sweep through a captured trajectory. Returns rho, alpha and (if
// with_width) width components; delta is left at zero.
ParamGradient backprop_through_solver(const Trajectory& traj, const EnergySpec& spec,
                                      const Image& f, const std::vector<double>& alpha,
                                      const Image& adjoint, bool with_width);

// dL1/ddelta; delta enters only through the binarization.
double grad_delta(const Image& u, const Image& gt_bin, const BinarizationParams& bin,
                  const HuberParams& hub, std::optional<double> peak = std::nullopt);

struct SampleEvaluation {
  double loss = 0.0;
  Image u;
  std::optional<ParamGradient> gradient;
};

// Solve, score and (optionally) backpropagate one sample.
SampleEvaluation evaluate_sample(const Problem& problem, const HyperParams& theta,
                                 const Image& f, const Image& target, bool with_gradient,
                                 std::optional<double> peak = std::nullopt);

struct GradCheckRow {
  std::string param;
  double analytic = 0.0;
  double numeric = 0.0;
  double rel_error = 0.0;
  bool pass = false;
};

struct GradCheckReport {
  std::vector<GradCheckRow> rows;
  // False when the numeric reference cannot be trusted: a probe crossed a
  // projection or binarization breakpoint, or halving the step moved the
  // central difference by more than a quarter of the tolerance.
  bool smooth = true;

  bool passed() const;
  std::string table() const;
};

struct GradCheckOptions {
  // h_j = step_scale * (1 + |theta_j|)
  double step_scale = 1e-6;
  double tolerance = 1e-4;
  // Empty selects every learnable component. Names: rho, alpha, alpha[k],
  // delta, width.
  std::vector<std::string> params;
};

// Compares reverse-mode gradients with central differences of the
// end-to-end loss (binarization peak frozen at its value at theta).
GradCheckReport finite_difference_check(const Problem& problem, const HyperParams& theta,
                                        const Image& f, const Image& target,
                                        const GradCheckOptions& options);

}  // namespace unroll

#endif  // UNROLL_BACKPROP_HPP
