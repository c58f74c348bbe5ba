#include "unroll/unrolled_solver.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace unroll {

double beta(std::size_t k) {
  if (k == 0) return 0.0;
  return static_cast<double>(k - 1) / static_cast<double>(k + 2);
}

Image init_point(const Image& f, const ForwardModel& model) {
  const std::size_t factor = model.factor();
  if (factor == 1) return clip_below(f, 0.0);
  Image u = upsample_adjoint(f, factor);
  u *= 1.0 / static_cast<double>(factor * factor);
  return clip_below(u, 0.0);
}

SolveResult solve_unrolled(const EnergySpec& spec, const Image& f,
                           std::span<const double> alpha, bool capture) {
  if (alpha.empty()) throw std::invalid_argument("solve_unrolled: need at least one iteration");
  for (std::size_t k = 0; k < alpha.size(); ++k) {
    if (!(alpha[k] > 0.0)) {
      throw std::invalid_argument("solve_unrolled: step size alpha[" + std::to_string(k) +
                                  "] must be positive");
    }
  }
  if (f.rows() != spec.model.coarse_rows() || f.cols() != spec.model.coarse_cols()) {
    throw std::invalid_argument("solve_unrolled: data shape does not match forward model");
  }

  SolveResult result;
  Image u = init_point(f, spec.model);
  Image u_prev = u;
  if (capture) {
    result.trajectory.emplace();
    result.trajectory->u0 = u;
    result.trajectory->steps.reserve(alpha.size());
  }

  const double eps = spec.eps_proj;
  for (std::size_t k = 0; k < alpha.size(); ++k) {
    const double b = beta(k);
    Image vbar(u.rows(), u.cols());
    for (std::size_t i = 0; i < u.size(); ++i) vbar[i] = u[i] + b * (u[i] - u_prev[i]);
    Image v = smooth_project(vbar, eps);
    Image grad = energy_gradient(spec, v, f);
    Image w(u.rows(), u.cols());
    for (std::size_t i = 0; i < u.size(); ++i) w[i] = v[i] - alpha[k] * grad[i];
    Image next = smooth_project(w, eps);

    u_prev = std::move(u);
    u = next;
    if (capture) {
      result.trajectory->steps.push_back(IterationRecord{std::move(vbar), std::move(v),
                                                         std::move(grad), std::move(w),
                                                         std::move(next)});
    }
  }
  result.u = std::move(u);
  return result;
}

}  // namespace unroll
