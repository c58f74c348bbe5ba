#include "unroll/outer_trainer.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <exception>
#include <fstream>
#include <limits>
#include <sstream>
#include <thread>

namespace unroll {
namespace {

constexpr double kMagnitudeFloor = 1e-8;

std::vector<double> pack(const HyperParams& t) {
  std::vector<double> x;
  x.reserve(t.alpha.size() + 3);
  x.push_back(t.rho);
  x.insert(x.end(), t.alpha.begin(), t.alpha.end());
  x.push_back(t.delta);
  x.push_back(t.width);
  return x;
}

HyperParams unpack(const std::vector<double>& x, std::size_t K) {
  HyperParams t;
  t.rho = x[0];
  t.alpha.assign(x.begin() + 1, x.begin() + 1 + static_cast<std::ptrdiff_t>(K));
  t.delta = x[K + 1];
  t.width = x[K + 2];
  return t;
}

std::vector<double> pack_gradient(const ParamGradient& g, const LearnMask& m) {
  std::vector<double> x;
  x.reserve(g.alpha.size() + 3);
  x.push_back(m.rho ? g.rho : 0.0);
  for (double a : g.alpha) x.push_back(m.alpha ? a : 0.0);
  x.push_back(m.delta ? g.delta : 0.0);
  x.push_back(m.width ? g.width : 0.0);
  return x;
}

double clamp(double x, const Interval& iv) { return std::min(std::max(x, iv.lo), iv.hi); }

bool within(double x, const Interval& iv) { return x >= iv.lo && x <= iv.hi; }

std::string join_alpha(const std::vector<double>& alpha, char sep) {
  std::string out;
  for (std::size_t k = 0; k < alpha.size(); ++k) {
    if (k) out += sep;
    out += format_double(alpha[k]);
  }
  return out;
}

std::vector<double> split_doubles(const std::string& s, char sep) {
  std::vector<double> out;
  std::string item;
  std::istringstream is(s);
  while (std::getline(is, item, sep)) out.push_back(parse_double(item));
  return out;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

// D_j g for the diagonal scaling D_j. Magnitude: D_i = m_i^2 / max_j |m_j g_j|
// with m = max(|x|, floor), so a unit step changes no component by more
// than its own magnitude. BlockMagnitude normalizes rho, alpha, delta and
// width separately.
std::vector<double> scaled_direction(const std::vector<double>& x, const std::vector<double>& g,
                                     std::size_t K, Scaling scaling) {
  if (scaling == Scaling::Identity) return g;
  auto block = [&](std::size_t i) -> std::size_t {
    if (scaling == Scaling::Magnitude) return 0;
    if (i == 0) return 0;
    if (i <= K) return 1;
    return i - K + 1;
  };
  std::vector<double> norm(4, 0.0);
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double m = std::max(std::abs(x[i]), kMagnitudeFloor);
    norm[block(i)] = std::max(norm[block(i)], std::abs(m * g[i]));
  }
  std::vector<double> d(x.size(), 0.0);
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double m = std::max(std::abs(x[i]), kMagnitudeFloor);
    if (norm[block(i)] > 0.0) d[i] = m * m * g[i] / norm[block(i)];
  }
  return d;
}

}  // namespace

void Bounds::validate() const {
  for (const Interval* iv : {&rho, &alpha, &delta, &width}) {
    if (!(iv->lo < iv->hi)) {
      throw std::invalid_argument("Bounds: lower bound " + format_double(iv->lo) +
                                  " not below upper bound " + format_double(iv->hi));
    }
  }
}

double rho_max(const std::vector<Sample>& data, const ForwardModel& model, double offset) {
  if (data.empty()) throw std::invalid_argument("rho_max: empty dataset");
  double best = std::numeric_limits<double>::infinity();
  for (const Sample& s : data) {
    Image r = s.f;
    for (double& v : r.values()) v -= offset;
    best = std::min(best, max_abs(model.apply_adjoint(r)));
  }
  return best;
}

HyperParams project_box(HyperParams theta, const Bounds& b) {
  theta.rho = clamp(theta.rho, b.rho);
  for (double& a : theta.alpha) a = clamp(a, b.alpha);
  theta.delta = clamp(theta.delta, b.delta);
  theta.width = clamp(theta.width, b.width);
  return theta;
}

bool inside_box(const HyperParams& theta, const Bounds& b) {
  return within(theta.rho, b.rho) && within(theta.delta, b.delta) &&
         within(theta.width, b.width) &&
         std::all_of(theta.alpha.begin(), theta.alpha.end(),
                     [&](double a) { return within(a, b.alpha); });
}

Bounds default_bounds(const std::vector<Sample>& data, const Problem& problem,
                      double rho_cap_factor_kl, double alpha_cap, double width_cap) {
  Bounds b;
  if (problem.fidelity.tag == FidelityTag::GaussianL2) {
    b.rho.hi = rho_max(data, problem.model, problem.fidelity.bg);
  } else {
    b.rho.hi = rho_cap_factor_kl * rho_max(data, problem.model);
  }
  b.alpha.hi = alpha_cap;
  double gmax = 0.0;
  for (const Sample& s : data) gmax = std::max(gmax, max_value(s.g));
  b.delta.hi = 0.5 * gmax;
  b.width.hi = width_cap;
  b.validate();
  return b;
}

std::vector<Image> loss_targets(const std::vector<Sample>& data, const Problem& problem,
                                double gt_peak) {
  std::vector<Image> out;
  out.reserve(data.size());
  for (const Sample& s : data) {
    out.push_back(problem.loss.kind == LossKind::L2 ? s.g : binarize_ground_truth(s.g, gt_peak));
  }
  return out;
}

DatasetEvaluation evaluate_dataset(const Problem& problem, const HyperParams& theta,
                                   const std::vector<Sample>& data,
                                   const std::vector<Image>& targets, bool with_gradient,
                                   std::size_t threads) {
  const std::size_t T = data.size();
  std::vector<SampleEvaluation> results(T);
  std::vector<std::exception_ptr> errors(T);
  auto work = [&](std::size_t worker, std::size_t stride) {
    for (std::size_t t = worker; t < T; t += stride) {
      try {
        results[t] = evaluate_sample(problem, theta, data[t].f, targets[t], with_gradient);
      } catch (...) {
        errors[t] = std::current_exception();
      }
    }
  };
  const std::size_t workers = std::max<std::size_t>(1, std::min(threads, T));
  if (workers == 1) {
    work(0, 1);
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work, w, workers);
  }

  for (std::size_t t = 0; t < T; ++t) {
    if (!errors[t]) continue;
    try {
      std::rethrow_exception(errors[t]);
    } catch (const DomainError& e) {
      throw DomainError("sample " + std::to_string(t) + ": " + e.what());
    } catch (const std::exception& e) {
      throw TrainingError("sample " + std::to_string(t) + ": " + e.what());
    }
  }

  DatasetEvaluation out;
  out.per_sample.reserve(T);
  for (std::size_t t = 0; t < T; ++t) {
    out.loss += results[t].loss;
    out.per_sample.push_back(results[t].loss);
    if (with_gradient) {
      if (!out.gradient) {
        out.gradient = *results[t].gradient;
      } else {
        *out.gradient += *results[t].gradient;
      }
    }
  }
  return out;
}

TrainResult train(const std::vector<Sample>& data, const Problem& problem,
                  const HyperParams& theta0, const TrainConfig& config, const Bounds& bounds,
                  const std::vector<HistoryRow>& resume) {
  if (data.empty()) throw std::invalid_argument("train: empty dataset");
  if (theta0.alpha.empty()) throw std::invalid_argument("train: K must be at least 1");
  if (config.outer_iters < 1) throw std::invalid_argument("train: outer_iters must be >= 1");
  bounds.validate();

  const std::vector<Image> targets = loss_targets(data, problem, config.gt_peak);
  const std::size_t K = theta0.alpha.size();
  TrainResult result;
  result.theta = project_box(theta0, bounds);
  result.history = resume;

  DatasetEvaluation current =
      evaluate_dataset(problem, result.theta, data, targets, true, config.threads);
  if (!std::isfinite(current.loss)) {
    throw TrainingError("train: non-finite loss at the initial parameters");
  }
  int iteration = 0;
  if (result.history.empty()) {
    result.history.push_back({0, current.loss, 0.0, result.theta});
  } else {
    iteration = result.history.back().iteration;
  }

  double last_step = config.armijo.initial_step;
  std::vector<double> secant;  // per-coordinate scaling for Scaling::Secant
  result.stop_reason = "max_iterations";
  for (int j = 0; j < config.outer_iters; ++j) {
    const std::vector<double> x = pack(result.theta);
    const std::vector<double> g = pack_gradient(*current.gradient, config.learn);

    std::vector<double> d;
    if (config.scaling == Scaling::Secant) {
      if (secant.empty()) {
        const std::vector<double> base = scaled_direction(x, g, K, Scaling::BlockMagnitude);
        secant.assign(x.size(), 0.0);
        for (std::size_t i = 0; i < x.size(); ++i) {
          secant[i] = g[i] != 0.0 ? base[i] / g[i] : 0.0;
        }
      }
      d.resize(x.size());
      for (std::size_t i = 0; i < x.size(); ++i) {
        // A unit step never changes a component by more than its magnitude.
        const double m = std::max(std::abs(x[i]), kMagnitudeFloor);
        const double cap = g[i] != 0.0 ? m / std::abs(g[i]) : 0.0;
        if (secant[i] == 0.0) secant[i] = cap;
        d[i] = std::min(secant[i], cap) * g[i];
      }
    } else {
      d = scaled_direction(x, g, K, config.scaling);
    }

    double eta = config.armijo.reuse_step ? std::min(config.armijo.initial_step, 2.0 * last_step)
                                          : config.armijo.initial_step;
    bool accepted = false;
    bool stationary = false;
    HyperParams trial;
    double trial_loss = 0.0;
    for (int bt = 0; bt <= config.armijo.max_backtracks; ++bt) {
      std::vector<double> xt(x.size());
      for (std::size_t i = 0; i < x.size(); ++i) xt[i] = x[i] - eta * d[i];
      trial = project_box(unpack(xt, K), bounds);
      const std::vector<double> xp = pack(trial);
      double decrease = 0.0;
      bool moved = false;
      for (std::size_t i = 0; i < x.size(); ++i) {
        decrease += g[i] * (xp[i] - x[i]);
        moved = moved || xp[i] != x[i];
      }
      if (!moved) {
        stationary = true;
        break;
      }
      trial_loss = evaluate_dataset(problem, trial, data, targets, false, config.threads).loss;
      if (std::isfinite(trial_loss) &&
          trial_loss <= current.loss + config.armijo.sufficient_decrease * decrease) {
        accepted = true;
        break;
      }
      eta *= config.armijo.shrink;
    }

    if (!accepted) {
      // Record the unchanged point so the iteration is visible in the history.
      result.history.push_back({++iteration, current.loss, 0.0, result.theta});
      result.stop_reason = stationary ? "stationary" : "line_search_failed";
      break;
    }

    last_step = eta;
    const double previous = current.loss;
    result.theta = trial;
    current = evaluate_dataset(problem, result.theta, data, targets, true, config.threads);
    if (config.scaling == Scaling::Secant) {
      // Diagonal secant update s_i / y_i, limited to a factor 4 change per
      // iteration; coordinates with non-positive curvature keep their value.
      const std::vector<double> xn = pack(result.theta);
      const std::vector<double> gn = pack_gradient(*current.gradient, config.learn);
      for (std::size_t i = 0; i < x.size(); ++i) {
        const double si = xn[i] - x[i];
        const double yi = gn[i] - g[i];
        if (si * yi > 0.0) {
          secant[i] = std::clamp(si / yi, 0.25 * secant[i] * eta, 4.0 * secant[i] * eta);
        }
      }
    }
    result.history.push_back({++iteration, current.loss, eta, result.theta});
    if (std::abs(previous - current.loss) <= config.rel_tolerance * std::abs(previous)) {
      result.stop_reason = "converged";
      break;
    }
  }
  return result;
}

std::string format_double(double x) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, res.ptr);
}

double parse_double(const std::string& s) {
  const std::string t = trim(s);
  double v = 0.0;
  const auto res = std::from_chars(t.data(), t.data() + t.size(), v);
  if (res.ec != std::errc() || res.ptr != t.data() + t.size() || t.empty()) {
    throw std::invalid_argument("not a number: '" + s + "'");
  }
  return v;
}

void checkpoint_save(const HyperParams& theta, const std::vector<HistoryRow>& history,
                     const std::map<std::string, std::string>& config_echo,
                     const std::string& path) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw CheckpointError("checkpoint_save: cannot open " + path);
  os << "# unroll checkpoint\n";
  os << "format = 1\n";
  os << "K = " << theta.alpha.size() << "\n";
  os << "rho = " << format_double(theta.rho) << "\n";
  os << "alpha = " << join_alpha(theta.alpha, ',') << "\n";
  os << "delta = " << format_double(theta.delta) << "\n";
  os << "width = " << format_double(theta.width) << "\n";
  for (const auto& [k, v] : config_echo) os << "config." << k << " = " << v << "\n";
  for (const HistoryRow& r : history) {
    os << "history = " << r.iteration << ',' << format_double(r.loss) << ','
       << format_double(r.step) << ',' << format_double(r.theta.rho) << ','
       << format_double(r.theta.delta) << ',' << format_double(r.theta.width) << ','
       << join_alpha(r.theta.alpha, ';') << "\n";
  }
  os << "end = 1\n";
  if (!os) throw CheckpointError("checkpoint_save: write failed for " + path);
}

Checkpoint checkpoint_load(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw CheckpointError("checkpoint_load: cannot open " + path);
  Checkpoint cp;
  bool ended = false;
  bool have_rho = false, have_alpha = false, have_delta = false, have_width = false;
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto eq = t.find('=');
    auto fail = [&](const std::string& why) {
      throw CheckpointError(path + ":" + std::to_string(lineno) + ": " + why);
    };
    if (eq == std::string::npos) fail("expected 'key = value'");
    if (ended) fail("content after end marker");
    const std::string key = trim(t.substr(0, eq));
    const std::string value = trim(t.substr(eq + 1));
    try {
      if (key == "format" || key == "K") {
        continue;
      } else if (key == "rho") {
        cp.theta.rho = parse_double(value);
        have_rho = true;
      } else if (key == "alpha") {
        cp.theta.alpha = split_doubles(value, ',');
        have_alpha = true;
      } else if (key == "delta") {
        cp.theta.delta = parse_double(value);
        have_delta = true;
      } else if (key == "width") {
        cp.theta.width = parse_double(value);
        have_width = true;
      } else if (key.rfind("config.", 0) == 0) {
        cp.config[key.substr(7)] = value;
      } else if (key == "history") {
        std::vector<std::string> fields;
        std::string item;
        std::istringstream fs(value);
        while (std::getline(fs, item, ',')) fields.push_back(item);
        if (fields.size() != 7) fail("history row needs 7 fields");
        HistoryRow r;
        r.iteration = static_cast<int>(parse_double(fields[0]));
        r.loss = parse_double(fields[1]);
        r.step = parse_double(fields[2]);
        r.theta.rho = parse_double(fields[3]);
        r.theta.delta = parse_double(fields[4]);
        r.theta.width = parse_double(fields[5]);
        r.theta.alpha = split_doubles(fields[6], ';');
        cp.history.push_back(std::move(r));
      } else if (key == "end") {
        ended = true;
      } else {
        fail("unknown key '" + key + "'");
      }
    } catch (const std::invalid_argument& e) {
      fail(e.what());
    }
  }
  if (!ended) throw CheckpointError(path + ": truncated checkpoint (no end marker)");
  if (!(have_rho && have_alpha && have_delta && have_width)) {
    throw CheckpointError(path + ": missing hyperparameter entries");
  }
  return cp;
}

void write_history_csv(const std::vector<HistoryRow>& history, const std::string& path) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw CheckpointError("write_history_csv: cannot open " + path);
  const std::size_t K = history.empty() ? 0 : history.front().theta.alpha.size();
  os << "iteration,loss,step,rho,delta,width";
  for (std::size_t k = 0; k < K; ++k) os << ",alpha_" << k;
  os << "\n";
  for (const HistoryRow& r : history) {
    os << r.iteration << ',' << format_double(r.loss) << ',' << format_double(r.step) << ','
       << format_double(r.theta.rho) << ',' << format_double(r.theta.delta) << ','
       << format_double(r.theta.width);
    for (double a : r.theta.alpha) os << ',' << format_double(a);
    os << "\n";
  }
}

}  // namespace unroll
