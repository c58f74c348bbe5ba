#ifndef UNROLL_UNROLLED_SOLVER_HPP
#define UNROLL_UNROLLED_SOLVER_HPP

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "unroll/energy.hpp"
#include "unroll/image.hpp"

namespace unroll {

// Everything the outer problem learns. delta and width are only meaningful
// when the loss / forward model uses them.
struct HyperParams {
  double rho = 0.1;
  std::vector<double> alpha;  // one step size per unrolled iteration
  double delta = 0.0;         // binarization threshold
  double width = 0.0;         // PSF standard deviation

  std::size_t iterations() const { return alpha.size(); }
  bool operator==(const HyperParams&) const = default;
};

// One iteration of the accelerated projected gradient scheme:
//   vbar = u_k + beta_k (u_k - u_{k-1}),  v = Pi(vbar),
//   w = v - alpha_k grad E(v),            u_{k+1} = Pi(w).
struct IterationRecord {
  Image vbar;
  Image v;
  Image grad_v;
  Image w;
  Image u_next;
};

struct Trajectory {
  Image u0;
  std::vector<IterationRecord> steps;

  std::size_t iterations() const { return steps.size(); }
};

struct SolveResult {
  Image u;
  std::optional<Trajectory> trajectory;
};

// 0 for k = 0, (k-1)/(k+2) afterwards.
double beta(std::size_t k);

// Starting point lifted to the fine grid: f itself for factor 1, otherwise
// each coarse value spread evenly over its patch. Clipped at zero.
Image init_point(const Image& f, const ForwardModel& model);

SolveResult solve_unrolled(const EnergySpec& spec, const Image& f,
                           std::span<const double> alpha, bool capture);

}  // namespace unroll

#endif  // UNROLL_UNROLLED_SOLVER_HPP
