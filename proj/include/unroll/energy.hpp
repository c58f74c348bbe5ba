#ifndef UNROLL_ENERGY_HPP
#define UNROLL_ENERGY_HPP

#include <stdexcept>
#include <string>

#include "unroll/grid_ops.hpp"
#include "unroll/image.hpp"

namespace unroll {

// Raised when the Kullback-Leibler fidelity is evaluated outside its domain.
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

enum class FidelityTag { GaussianL2, PoissonKL };

// GaussianL2: 1/2 ||Au + bg - f||^2 (bg is an optional known offset, e.g. a
// noise variance floor). PoissonKL: KL(Au + bg; f).
struct Fidelity {
  FidelityTag tag = FidelityTag::GaussianL2;
  double bg = 0.0;
};

struct EnergySpec {
  ForwardModel model;
  Fidelity fidelity;
  double rho = 0.0;
  double eps_proj = 1e-4;
};

inline constexpr double kKlLogGuard = 1e-12;

double fidelity_value(const EnergySpec& spec, const Image& u, const Image& f);
// fidelity + rho * sum(u); sum(u) equals ||u||_1 on the non-negative orthant.
double energy_value(const EnergySpec& spec, const Image& u, const Image& f);
Image energy_gradient(const EnergySpec& spec, const Image& u, const Image& f);
// Hessian of the energy at u applied to w.
Image hessian_vector(const EnergySpec& spec, const Image& u, const Image& f, const Image& w);
// d(grad_u E)/d rho.
Image dgrad_drho(const EnergySpec& spec, const Image& u);
// d(grad_u E)/d width, through the kernel of the forward model.
Image dgrad_dwidth(const EnergySpec& spec, const Image& u, const Image& f);

double smooth_project(double x, double eps);
double smooth_project_jac(double x, double eps);
Image smooth_project(const Image& u, double eps);
// Diagonal of the Jacobian, stored as an image.
Image smooth_project_jac(const Image& u, double eps);

}  // namespace unroll

#endif  // UNROLL_ENERGY_HPP
