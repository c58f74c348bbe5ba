#include "unroll/energy.hpp"

#include <algorithm>
#include <cmath>

namespace unroll {
namespace {

// z = Au + bg with the KL domain checks; tiny positives are guarded.
Image kl_argument(const EnergySpec& spec, const Image& u, const Image& f) {
  Image z = spec.model.apply(u);
  require_same_shape(z, f, "KL fidelity");
  for (std::size_t i = 0; i < z.size(); ++i) {
    if (f[i] < 0.0) {
      throw DomainError("KL fidelity: negative datum f[" + std::to_string(i) + "]");
    }
    z[i] += spec.fidelity.bg;
    // Roundoff of the FFT convolution can leave -1e-17 where the exact value is 0.
    if (z[i] < -1e-9 || (z[i] <= 0.0 && f[i] > 0.0)) {
      throw DomainError("KL fidelity: (Au)_i + bg = " + std::to_string(z[i]) +
                        " <= 0 at pixel " + std::to_string(i));
    }
    z[i] = std::max(z[i], kKlLogGuard);
  }
  return z;
}

Image l2_residual(const EnergySpec& spec, const Image& u, const Image& f) {
  Image r = spec.model.apply(u);
  require_same_shape(r, f, "L2 fidelity");
  for (std::size_t i = 0; i < r.size(); ++i) r[i] += spec.fidelity.bg - f[i];
  return r;
}

void add_constant(Image& img, double c) {
  for (double& v : img.values()) v += c;
}

}  // namespace

double fidelity_value(const EnergySpec& spec, const Image& u, const Image& f) {
  if (spec.fidelity.tag == FidelityTag::GaussianL2) {
    const Image r = l2_residual(spec, u, f);
    return 0.5 * dot(r, r);
  }
  const Image z = kl_argument(spec, u, f);
  double acc = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    if (f[i] > 0.0) {
      acc += z[i] - f[i] - f[i] * std::log(z[i] / f[i]);
    } else {
      acc += z[i];
    }
  }
  return acc;
}

double energy_value(const EnergySpec& spec, const Image& u, const Image& f) {
  return fidelity_value(spec, u, f) + spec.rho * sum(u);
}

Image energy_gradient(const EnergySpec& spec, const Image& u, const Image& f) {
  Image g;
  if (spec.fidelity.tag == FidelityTag::GaussianL2) {
    g = spec.model.apply_adjoint(l2_residual(spec, u, f));
  } else {
    Image z = kl_argument(spec, u, f);
    for (std::size_t i = 0; i < z.size(); ++i) z[i] = 1.0 - f[i] / z[i];
    g = spec.model.apply_adjoint(z);
  }
  add_constant(g, spec.rho);
  return g;
}

Image hessian_vector(const EnergySpec& spec, const Image& u, const Image& f, const Image& w) {
  require_same_shape(u, w, "hessian_vector");
  Image aw = spec.model.apply(w);
  if (spec.fidelity.tag == FidelityTag::PoissonKL) {
    const Image z = kl_argument(spec, u, f);
    for (std::size_t i = 0; i < aw.size(); ++i) aw[i] *= f[i] / (z[i] * z[i]);
  }
  return spec.model.apply_adjoint(aw);
}

Image dgrad_drho(const EnergySpec& /*spec*/, const Image& u) {
  return Image(u.rows(), u.cols(), 1.0);
}

Image dgrad_dwidth(const EnergySpec& spec, const Image& u, const Image& f) {
  const ForwardModel& m = spec.model;
  Image da_u = m.apply_width_derivative(u);
  if (spec.fidelity.tag == FidelityTag::GaussianL2) {
    // (dA)^T (Au + bg - f) + A^T (dA u)
    Image out = m.apply_width_derivative_adjoint(l2_residual(spec, u, f));
    out += m.apply_adjoint(da_u);
    return out;
  }
  // (dA)^T (1 - f/z) + A^T (f/z^2 . dA u)
  const Image z = kl_argument(spec, u, f);
  Image first(z.rows(), z.cols());
  for (std::size_t i = 0; i < z.size(); ++i) {
    first[i] = 1.0 - f[i] / z[i];
    da_u[i] *= f[i] / (z[i] * z[i]);
  }
  Image out = m.apply_width_derivative_adjoint(first);
  out += m.apply_adjoint(da_u);
  return out;
}

double smooth_project(double x, double eps) {
  if (x > 0.0 && x < eps) return (2.0 - x / eps) * x * x / eps;
  return std::max(x, 0.0);
}

double smooth_project_jac(double x, double eps) {
  if (x <= 0.0) return 0.0;
  if (x < eps) return 4.0 * x / eps - 3.0 * x * x / (eps * eps);
  return 1.0;
}

Image smooth_project(const Image& u, double eps) {
  Image out(u.rows(), u.cols());
  for (std::size_t i = 0; i < u.size(); ++i) out[i] = smooth_project(u[i], eps);
  return out;
}

Image smooth_project_jac(const Image& u, double eps) {
  Image out(u.rows(), u.cols());
  for (std::size_t i = 0; i < u.size(); ++i) out[i] = smooth_project_jac(u[i], eps);
  return out;
}

}  // namespace unroll
