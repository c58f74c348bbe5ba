#ifndef UNROLL_OUTER_TRAINER_HPP
#define UNROLL_OUTER_TRAINER_HPP

#include <cstddef>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "unroll/backprop.hpp"
#include "unroll/image.hpp"
#include "unroll/unrolled_solver.hpp"

namespace unroll {

struct Sample {
  Image f;  // corrupted data (coarse grid)
  Image g;  // ground truth (fine grid)
};

struct Interval {
  double lo = 1e-10;
  double hi = 1.0;
};

struct Bounds {
  Interval rho;
  Interval alpha;
  Interval delta;
  Interval width;

  void validate() const;
};

// Identity: projected gradient. Magnitude: steps relative to |theta_j|.
// BlockMagnitude: as Magnitude, normalized per parameter group. Secant:
// per-coordinate secant estimates, started from BlockMagnitude.
enum class Scaling { Identity, Magnitude, BlockMagnitude, Secant };

struct ArmijoParams {
  double initial_step = 1.0;
  double shrink = 0.5;
  double sufficient_decrease = 1e-4;
  int max_backtracks = 30;
  // Start each search at min(initial_step, 2 * last accepted step) instead
  // of initial_step.
  bool reuse_step = false;
};

struct LearnMask {
  bool rho = true;
  bool alpha = true;
  bool delta = false;
  bool width = false;
};

struct TrainConfig {
  int outer_iters = 50;
  LearnMask learn;
  ArmijoParams armijo;
  Scaling scaling = Scaling::Identity;
  double rel_tolerance = 1e-8;
  double gt_peak = 255.0;  // level of the binarized ground truth (L1 loss)
  std::size_t threads = 1;
};

struct HistoryRow {
  int iteration = 0;
  double loss = 0.0;
  double step = 0.0;
  HyperParams theta;
};

struct TrainResult {
  HyperParams theta;
  std::vector<HistoryRow> history;
  std::string stop_reason;
};

class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// min_t ||A^T (f_t - bg)||_inf with the L2 fidelity offset (bg = 0 gives the
// plain formula).
double rho_max(const std::vector<Sample>& data, const ForwardModel& model, double offset = 0.0);

HyperParams project_box(HyperParams theta, const Bounds& bounds);
bool inside_box(const HyperParams& theta, const Bounds& bounds);

// Bounds used by the experiments: rho <= rho_max (times rho_cap_factor for
// KL), alpha <= alpha_cap, delta <= max(g)/2, width <= width_cap.
Bounds default_bounds(const std::vector<Sample>& data, const Problem& problem,
                      double rho_cap_factor_kl = 10.0, double alpha_cap = 1e4,
                      double width_cap = 10.0);

// Targets fed to the loss: g for L2 or the binarized ground truth for L1.
std::vector<Image> loss_targets(const std::vector<Sample>& data, const Problem& problem,
                                double gt_peak);

struct DatasetEvaluation {
  double loss = 0.0;
  std::vector<double> per_sample;
  std::optional<ParamGradient> gradient;
};

// Sum of per-sample losses (and gradients), reduced in sample order. Samples
// are split across `threads` workers.
DatasetEvaluation evaluate_dataset(const Problem& problem, const HyperParams& theta,
                                   const std::vector<Sample>& data,
                                   const std::vector<Image>& targets, bool with_gradient,
                                   std::size_t threads);

// Projected (scaled) gradient descent with monotone Armijo backtracking.
// `resume` continues a previous history (its last row must match theta0).
TrainResult train(const std::vector<Sample>& data, const Problem& problem,
                  const HyperParams& theta0, const TrainConfig& config, const Bounds& bounds,
                  const std::vector<HistoryRow>& resume = {});

std::string format_double(double x);
double parse_double(const std::string& s);

void checkpoint_save(const HyperParams& theta, const std::vector<HistoryRow>& history,
                     const std::map<std::string, std::string>& config_echo,
                     const std::string& path);

struct Checkpoint {
  HyperParams theta;
  std::vector<HistoryRow> history;
  std::map<std::string, std::string> config;
};

Checkpoint checkpoint_load(const std::string& path);

// iteration,loss,step,rho,delta,width,alpha_0..alpha_{K-1}
void write_history_csv(const std::vector<HistoryRow>& history, const std::string& path);

}  // namespace unroll

#endif  // UNROLL_OUTER_TRAINER_HPP
