#include "unroll/backprop.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <sstream>
#include <stdexcept>

namespace unroll {

ParamGradient& ParamGradient::operator+=(const ParamGradient& other) {
  if (alpha.size() != other.alpha.size()) {
    throw std::invalid_argument("ParamGradient: step count mismatch");
  }
  rho += other.rho;
  for (std::size_t k = 0; k < alpha.size(); ++k) alpha[k] += other.alpha[k];
  delta += other.delta;
  width += other.width;
  return *this;
}

EnergySpec Problem::energy(const HyperParams& theta) const {
  return EnergySpec{learn_width ? model.with_width(theta.width) : model, fidelity, theta.rho,
                    eps_proj};
}

BinarizationParams Problem::binarization(const HyperParams& theta) const {
  BinarizationParams bin = loss.bin;
  bin.delta = theta.delta;
  return bin;
}

double evaluate_loss(const LossConfig& loss, const Image& u, const Image& target,
                     std::optional<double> peak) {
  if (loss.kind == LossKind::L2) return loss_l2(u, target);
  return loss_l1(u, target, loss.bin, loss.hub, peak ? peak : loss.fixed_peak);
}

Image loss_grad_u(const LossConfig& loss, const Image& u, const Image& target,
                  std::optional<double> peak) {
  require_same_shape(u, target, "loss_grad_u");
  if (loss.kind == LossKind::L2) return u - target;
  const double pk = peak.value_or(loss.fixed_peak.value_or(binarization_peak(u)));
  Image out(u.rows(), u.cols());
  for (std::size_t i = 0; i < u.size(); ++i) {
    const double r = binarize(u[i], loss.bin, pk) - target[i];
    out[i] = 2.0 * r * huber_deriv(r * r, loss.hub.gamma) * binarize_ds(u[i], loss.bin, pk);
  }
  return out;
}

ParamGradient backprop_through_solver(const Trajectory& traj, const EnergySpec& spec,
                                      const Image& f, const std::vector<double>& alpha,
                                      const Image& adjoint, bool with_width) {
  const std::size_t K = traj.iterations();
  if (K == 0 || alpha.size() != K) {
    throw std::invalid_argument("backprop_through_solver: trajectory has " + std::to_string(K) +
                                " steps but schedule has " + std::to_string(alpha.size()));
  }
  require_same_shape(adjoint, traj.u0, "backprop_through_solver");

  ParamGradient grad;
  grad.alpha.assign(K, 0.0);
  const double eps = spec.eps_proj;

  // lam_next: sensitivity to u^(k+1); lam_cur: partial sensitivity to u^(k)
  // collected from the extrapolation of the following step.
  Image lam_next = adjoint;
  Image lam_cur(adjoint.rows(), adjoint.cols());
  for (std::size_t kk = K; kk-- > 0;) {
    const IterationRecord& step = traj.steps[kk];
    const double a = alpha[kk];
    const double b = beta(kk);

    Image lam_w = hadamard(smooth_project_jac(step.w, eps), lam_next);
    grad.alpha[kk] = -dot(step.grad_v, lam_w);
    grad.rho -= a * dot(dgrad_drho(spec, step.v), lam_w);
    if (with_width) grad.width -= a * dot(dgrad_dwidth(spec, step.v, f), lam_w);

    Image lam_v = hessian_vector(spec, step.v, f, lam_w);
    for (std::size_t i = 0; i < lam_v.size(); ++i) lam_v[i] = lam_w[i] - a * lam_v[i];
    const Image jac_vbar = smooth_project_jac(step.vbar, eps);

    Image lam_prev(adjoint.rows(), adjoint.cols());
    for (std::size_t i = 0; i < lam_v.size(); ++i) {
      const double lv = jac_vbar[i] * lam_v[i];
      lam_cur[i] += (1.0 + b) * lv;
      lam_prev[i] = -b * lv;
    }
    // u^(0) = u^(-1) carry no hyperparameter dependence, so the sweep stops here.
    lam_next = std::move(lam_cur);
    lam_cur = std::move(lam_prev);
  }
  return grad;
}

double grad_delta(const Image& u, const Image& gt_bin, const BinarizationParams& bin,
                  const HuberParams& hub, std::optional<double> peak) {
  require_same_shape(u, gt_bin, "grad_delta");
  const double pk = peak.value_or(binarization_peak(u));
  double acc = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    const double r = binarize(u[i], bin, pk) - gt_bin[i];
    acc += 2.0 * r * huber_deriv(r * r, hub.gamma) * binarize_ddelta(u[i], bin, pk);
  }
  return acc;
}

SampleEvaluation evaluate_sample(const Problem& problem, const HyperParams& theta,
                                 const Image& f, const Image& target, bool with_gradient,
                                 std::optional<double> peak) {
  const EnergySpec spec = problem.energy(theta);
  LossConfig loss = problem.loss;
  loss.bin = problem.binarization(theta);

  SolveResult solved = solve_unrolled(spec, f, theta.alpha, with_gradient);
  SampleEvaluation out;
  std::optional<double> pk = peak;
  if (loss.kind == LossKind::L1 && !pk) pk = loss.fixed_peak.value_or(binarization_peak(solved.u));
  out.loss = evaluate_loss(loss, solved.u, target, pk);
  if (with_gradient) {
    const Image adj = loss_grad_u(loss, solved.u, target, pk);
    ParamGradient g = backprop_through_solver(*solved.trajectory, spec, f, theta.alpha, adj,
                                              problem.learn_width);
    if (loss.kind == LossKind::L1) g.delta = grad_delta(solved.u, target, loss.bin, loss.hub, pk);
    out.gradient = std::move(g);
  }
  out.u = std::move(solved.u);
  return out;
}

namespace {

std::uint8_t projection_branch(double x, double eps) {
  if (x <= 0.0) return 0;
  return x < eps ? 1 : 2;
}

std::uint8_t binarization_branch(double s, const BinarizationParams& p) {
  const double t = s - p.delta;
  if (t <= 0.0) return 0;
  if (t < p.eps) return 1;
  if (t <= 2.0 * p.c0 - p.eps) return 2;
  if (t < 2.0 * p.c0) return 3;
  return 4;
}

// Which smooth piece every nonsmooth map was evaluated on.
std::vector<std::uint8_t> branch_signature(const Problem& problem, const HyperParams& theta,
                                           const Image& f) {
  const EnergySpec spec = problem.energy(theta);
  const SolveResult solved = solve_unrolled(spec, f, theta.alpha, true);
  std::vector<std::uint8_t> sig;
  for (const IterationRecord& step : solved.trajectory->steps) {
    for (double x : step.vbar.values()) sig.push_back(projection_branch(x, spec.eps_proj));
    for (double x : step.w.values()) sig.push_back(projection_branch(x, spec.eps_proj));
  }
  if (problem.loss.kind == LossKind::L1) {
    const BinarizationParams bin = problem.binarization(theta);
    for (double x : solved.u.values()) sig.push_back(binarization_branch(x, bin));
  }
  return sig;
}

struct Probe {
  std::string name;
  double* slot;  // into a copy of theta
  double analytic;
};

double relative_error(double a, double n, double floor) {
  return std::abs(a - n) / std::max({std::abs(a), std::abs(n), floor});
}

bool selected(const std::vector<std::string>& params, const std::string& name,
              const std::string& family) {
  if (params.empty()) return true;
  return std::find(params.begin(), params.end(), name) != params.end() ||
         std::find(params.begin(), params.end(), family) != params.end();
}

}  // namespace

bool GradCheckReport::passed() const {
  return smooth && std::all_of(rows.begin(), rows.end(), [](const auto& r) { return r.pass; });
}

std::string GradCheckReport::table() const {
  std::ostringstream os;
  char line[160];
  std::snprintf(line, sizeof line, "%-12s %22s %22s %12s %s\n", "parameter", "analytic", "numeric",
                "rel_error", "status");
  os << line;
  for (const GradCheckRow& r : rows) {
    std::snprintf(line, sizeof line, "%-12s %22.14e %22.14e %12.4e %s\n", r.param.c_str(),
                  r.analytic, r.numeric, r.rel_error, r.pass ? "ok" : "FAIL");
    os << line;
  }
  if (!smooth) os << "note: the finite-difference reference is unreliable on this instance\n";
  return os.str();
}

GradCheckReport finite_difference_check(const Problem& problem, const HyperParams& theta,
                                        const Image& f, const Image& target,
                                        const GradCheckOptions& options) {
  const SampleEvaluation base = evaluate_sample(problem, theta, f, target, true);
  std::optional<double> peak;
  if (problem.loss.kind == LossKind::L1) {
    peak = problem.loss.fixed_peak.value_or(binarization_peak(base.u));
  }
  const ParamGradient& g = *base.gradient;
  const std::vector<std::uint8_t> base_sig = branch_signature(problem, theta, f);

  HyperParams probe_theta = theta;
  std::vector<Probe> probes;
  if (selected(options.params, "rho", "rho")) probes.push_back({"rho", &probe_theta.rho, g.rho});
  for (std::size_t k = 0; k < theta.alpha.size(); ++k) {
    const std::string name = "alpha[" + std::to_string(k) + "]";
    if (selected(options.params, name, "alpha")) {
      probes.push_back({name, &probe_theta.alpha[k], g.alpha[k]});
    }
  }
  if (problem.loss.kind == LossKind::L1 && selected(options.params, "delta", "delta")) {
    probes.push_back({"delta", &probe_theta.delta, g.delta});
  }
  if (problem.learn_width && selected(options.params, "width", "width")) {
    probes.push_back({"width", &probe_theta.width, g.width});
  }

  GradCheckReport report;
  for (const Probe& p : probes) {
    const double x0 = *p.slot;
    auto central = [&](double h) {
      *p.slot = x0 + h;
      const double lp = evaluate_sample(problem, probe_theta, f, target, false, peak).loss;
      if (branch_signature(problem, probe_theta, f) != base_sig) report.smooth = false;
      *p.slot = x0 - h;
      const double lm = evaluate_sample(problem, probe_theta, f, target, false, peak).loss;
      if (branch_signature(problem, probe_theta, f) != base_sig) report.smooth = false;
      *p.slot = x0;
      return (lp - lm) / (2.0 * h);
    };
    const double h = options.step_scale * (1.0 + std::abs(x0));
    const double numeric = central(h);
    const double floor = 1e-8 * (1.0 + std::abs(base.loss)) / (1.0 + std::abs(x0));
    // Halving the step must not move the reference; otherwise the probe sits
    // in a high-curvature region and the difference quotient is not trusted.
    if (relative_error(central(0.5 * h), numeric, floor) > 0.25 * options.tolerance) {
      report.smooth = false;
    }
    const double rel = relative_error(p.analytic, numeric, floor);
    report.rows.push_back({p.name, p.analytic, numeric, rel, rel <= options.tolerance});
  }
  return report;
}

}  // namespace unroll
