// Acceptance run: prints one PASS/FAIL line per criterion and exits non-zero
// if any criterion fails. Usage: acceptance [workdir] [criterion numbers...]

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <sys/wait.h>
#include <vector>

#include <Eigen/Dense>

#include "unroll/gradcheck.hpp"
#include "unroll/metrics.hpp"
#include "unroll/outer_trainer.hpp"
#include "unroll/simulate.hpp"

using namespace unroll;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

fs::path g_work;

std::string fmt(double x, int digits = 4) {
  std::ostringstream ss;
  ss.precision(digits);
  ss << x;
  return ss.str();
}

// Runs the CLI with output captured in <work>/logs/<tag>.log.
int cli(const std::string& tag, const std::string& args) {
  fs::create_directories(g_work / "logs");
  const std::string log = (g_work / "logs" / (tag + ".log")).string();
  const std::string cmd = std::string(UNROLL_CLI_PATH) + " " + args + " >" + log + " 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string path(const std::string& rel) { return (g_work / rel).string(); }

std::vector<std::vector<std::string>> read_csv(const fs::path& p) {
  std::ifstream is(p);
  std::vector<std::vector<std::string>> rows;
  std::string line;
  while (std::getline(is, line)) {
    std::vector<std::string> fields;
    std::string item;
    std::istringstream ls(line);
    while (std::getline(ls, item, ',')) fields.push_back(item);
    rows.push_back(std::move(fields));
  }
  return rows;
}

struct Report {
  std::vector<std::array<double, 3>> jaccard;  // J_0, J_2, J_4 per frame
  double avg_j = 0.0;
  double psnr = 0.0;
  bool ok = false;
};

Report read_report(const fs::path& p) {
  Report r;
  const auto rows = read_csv(p);
  if (rows.size() < 3 || rows[0].size() != 6 || rows[0][1] != "J_0" || rows[0][3] != "J_4") return r;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    if (rows[i].size() != 6) return r;
    if (rows[i][0] == "mean") {
      r.avg_j = std::stod(rows[i][4]);
      r.psnr = std::stod(rows[i][5]);
      r.ok = true;
    } else {
      r.jaccard.push_back({std::stod(rows[i][1]), std::stod(rows[i][2]), std::stod(rows[i][3])});
    }
  }
  return r;
}

std::vector<double> history_losses(const fs::path& p) {
  std::vector<double> out;
  const auto rows = read_csv(p);
  for (std::size_t i = 1; i < rows.size(); ++i) {
    if (rows[i].size() > 1) out.push_back(std::stod(rows[i][1]));
  }
  return out;
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

// Every regular file under a, compared byte for byte with its twin under b.
std::optional<std::string> tree_difference(const fs::path& a, const fs::path& b) {
  std::set<std::string> names;
  for (const fs::path& root : {a, b}) {
    if (!fs::exists(root)) return "missing " + root.string();
    for (const auto& e : fs::recursive_directory_iterator(root)) {
      if (e.is_regular_file()) names.insert(fs::relative(e.path(), root).string());
    }
  }
  for (const std::string& n : names) {
    if (!fs::exists(a / n) || !fs::exists(b / n)) return "file set differs at " + n;
    if (slurp(a / n) != slurp(b / n)) return n + " differs";
  }
  if (names.empty()) return "no files in " + a.string();
  return std::nullopt;
}

// ---- 1 ---------------------------------------------------------------------

Outcome gradient_correctness() {
  const auto t0 = std::chrono::steady_clock::now();
  double worst = 0.0;
  int instances = 0, redraws = 0;
  bool ok = true;
  std::string first_failure;
  for (LossKind loss : {LossKind::L2, LossKind::L1}) {
    for (FidelityTag fid : {FidelityTag::GaussianL2, FidelityTag::PoissonKL}) {
      CheckSetup setup;
      setup.loss = loss;
      setup.fidelity = fid;
      for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        const CheckOutcome out = run_gradient_check(setup, seed * 7919, GradCheckOptions{});
        ++instances;
        redraws += out.redraws;
        // rho, alpha_0..4 and width; delta only enters the l1 loss.
        const bool complete = out.report.rows.size() == (loss == LossKind::L1 ? 8u : 7u);
        if (!out.report.smooth || !out.report.passed() || !complete) {
          ok = false;
          if (first_failure.empty()) {
            first_failure = "seed " + std::to_string(out.seed) + "\n" + out.report.table();
          }
        }
        for (const GradCheckRow& r : out.report.rows) worst = std::max(worst, r.rel_error);
      }
    }
  }
  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  ok = ok && secs < 10.0;
  return {ok, std::to_string(instances) + " instances, worst rel. error " + fmt(worst, 3) +
                  ", " + std::to_string(redraws) + " redraws, " + fmt(secs, 3) + " s" +
                  (first_failure.empty() ? "" : "\n" + first_failure)};
}

// ---- 2 ---------------------------------------------------------------------

Outcome rho_nullification() {
  FrameGenConfig cfg;  // 32 coarse, L = 4, width 2.5, sigma 0.15
  const ForwardModel model = cfg.model();
  std::vector<Sample> data;
  for (std::uint64_t t = 0; t < 5; ++t) {
    Rng rng = Rng::stream(2024, t);
    Image g = gen_sparse_frame(cfg, rng);
    Image f = corrupt(g, model, cfg.noise, rng);
    data.push_back({std::move(f), std::move(g)});
  }
  const double rho = 2.0 * rho_max(data, model);
  const EnergySpec spec{model, Fidelity{}, rho, 1e-4};
  const std::vector<double> alpha(1000, 1.0 / operator_norm_sq(model));
  double worst = 0.0;
  for (const Sample& s : data) {
    const Image u = solve_unrolled(spec, s.f, alpha, false).u;
    worst = std::max(worst, max_abs(u) / max_value(s.f));
  }
  return {worst <= 1e-3, "max_t ||u||_inf / max(f_t) = " + fmt(worst, 3) + " over 5 frames"};
}

// ---- 3 ---------------------------------------------------------------------

Image random_image(std::size_t rows, std::size_t cols, std::uint64_t seed) {
  Rng rng(seed);
  Image img(rows, cols);
  for (double& v : img.values()) v = rng.uniform(-1.0, 1.0);
  return img;
}

Image loop_convolve(const Image& x, const Image& k) {
  const long R = static_cast<long>(x.rows()), C = static_cast<long>(x.cols());
  const long kr = static_cast<long>(k.rows()), kc = static_cast<long>(k.cols());
  Image out(x.rows(), x.cols());
  for (long r = 0; r < R; ++r) {
    for (long c = 0; c < C; ++c) {
      double acc = 0.0;
      for (long i = 0; i < kr; ++i) {
        for (long j = 0; j < kc; ++j) {
          const long rr = ((r - (i - (kr - 1) / 2)) % R + R) % R;
          const long cc = ((c - (j - (kc - 1) / 2)) % C + C) % C;
          acc += k(static_cast<std::size_t>(i), static_cast<std::size_t>(j)) *
                 x(static_cast<std::size_t>(rr), static_cast<std::size_t>(cc));
        }
      }
      out(static_cast<std::size_t>(r), static_cast<std::size_t>(c)) = acc;
    }
  }
  return out;
}

Outcome operator_algebra() {
  double adj = 0.0;
  std::uint64_t seed = 1;
  for (std::size_t L : {1u, 2u, 4u}) {
    for (KernelMode mode : {KernelMode::Standard, KernelMode::Squared}) {
      if (mode == KernelMode::Squared && L != 1) continue;
      const ForwardModel m(1.7, L, mode, 24, 32, 0);
      const Image x = random_image(24, 32, seed++);
      const Image y = random_image(24 / L, 32 / L, seed++);
      const double a = dot(m.apply(x), y), b = dot(x, m.apply_adjoint(y));
      adj = std::max(adj, std::abs(a - b) / std::max(1.0, std::abs(a)));
      const double c = dot(m.apply_width_derivative(x), y);
      const double d = dot(x, m.apply_width_derivative_adjoint(y));
      adj = std::max(adj, std::abs(c - d) / std::max(1.0, std::abs(c)));
    }
  }
  const Image k = gaussian_kernel(1.3, 9).weights;
  const Image x = random_image(20, 28, seed++), y = random_image(20, 28, seed++);
  adj = std::max(adj, std::abs(dot(convolve(x, k), y) - dot(x, convolve_adjoint(y, k))));
  const Image xf = random_image(16, 24, seed++), yc = random_image(4, 6, seed++);
  adj = std::max(adj, std::abs(dot(downsample(xf, 4), yc) - dot(xf, upsample_adjoint(yc, 4))));

  // Downsampling against the explicit S_L X S_L^T product.
  auto S = [](std::size_t m, std::size_t L) {
    Eigen::MatrixXd s = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(m),
                                              static_cast<Eigen::Index>(m * L));
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t j = 0; j < L; ++j) {
        s(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i * L + j)) = 1.0;
      }
    }
    return s;
  };
  Eigen::MatrixXd X(16, 24);
  for (Eigen::Index r = 0; r < 16; ++r) {
    for (Eigen::Index c = 0; c < 24; ++c) X(r, c) = xf(static_cast<std::size_t>(r), static_cast<std::size_t>(c));
  }
  const Eigen::MatrixXd D = S(4, 4) * X * S(6, 4).transpose();
  const Image ds = downsample(xf, 4);
  double ds_err = 0.0;
  for (Eigen::Index r = 0; r < 4; ++r) {
    for (Eigen::Index c = 0; c < 6; ++c) {
      ds_err = std::max(ds_err, std::abs(D(r, c) - ds(static_cast<std::size_t>(r), static_cast<std::size_t>(c))));
    }
  }

  double conv_err = 0.0;
  for (std::size_t support : {3u, 7u, 15u}) {
    const Image kk = gaussian_kernel(2.0, support).weights;
    const Image img = random_image(18, 26, seed++);
    conv_err = std::max(conv_err, max_abs(convolve(img, kk) - loop_convolve(img, kk)));
  }
  Image skew = random_image(5, 3, seed++);
  const Image img = random_image(12, 10, seed++);
  conv_err = std::max(conv_err, max_abs(convolve(img, skew) - loop_convolve(img, skew)));

  const bool ok = adj <= 1e-10 && ds_err <= 1e-12 && conv_err <= 1e-12;
  return {ok, "adjoint gap " + fmt(adj, 3) + ", downsample gap " + fmt(ds_err, 3) +
                  ", convolution gap " + fmt(conv_err, 3)};
}

// ---- 4 ---------------------------------------------------------------------

std::size_t optimal_tp(const PointSet& recon, const PointSet& gt, double radius) {
  std::vector<bool> used(recon.size(), false);
  std::function<std::size_t(std::size_t)> best = [&](std::size_t i) -> std::size_t {
    if (i == gt.size()) return 0;
    std::size_t top = best(i + 1);
    for (std::size_t j = 0; j < recon.size(); ++j) {
      if (used[j] || std::hypot(gt[i].row - recon[j].row, gt[i].col - recon[j].col) > radius) {
        continue;
      }
      used[j] = true;
      top = std::max(top, 1 + best(i + 1));
      used[j] = false;
    }
    return top;
  };
  return best(0);
}

Outcome jaccard_oracle() {
  Rng rng(4242);
  auto points = [&](std::size_t n) {
    PointSet pts;
    while (pts.size() < n) {
      const Point p{static_cast<int>(rng.uniform_int(0, 9)), static_cast<int>(rng.uniform_int(0, 9)), 1.0};
      if (std::none_of(pts.begin(), pts.end(),
                       [&](const Point& q) { return q.row == p.row && q.col == p.col; })) {
        pts.push_back(p);
      }
    }
    return pts;
  };
  const int trials = 1000;
  int equal = 0;
  std::size_t worst_gap = 0;
  int wide = 0;
  bool never_larger = true;
  for (int t = 0; t < trials; ++t) {
    const PointSet gt = points(static_cast<std::size_t>(rng.uniform_int(0, 8)));
    const PointSet rc = points(static_cast<std::size_t>(rng.uniform_int(0, 8)));
    const double radius = rng.uniform(0.0, 4.0);
    const std::size_t greedy = match_points(rc, gt, radius).tp;
    const std::size_t opt = optimal_tp(rc, gt, radius);
    never_larger = never_larger && greedy <= opt;
    if (greedy == opt) ++equal;
    worst_gap = std::max(worst_gap, opt - std::min(opt, greedy));
    if (opt > greedy + 1) ++wide;
  }

  bool arithmetic = jaccard(MatchResult{3, 2, 1, {}}) == 0.5 &&
                    jaccard(MatchResult{5, 0, 0, {}}) == 1.0 &&
                    jaccard(MatchResult{0, 0, 4, {}}) == 0.0 && jaccard(MatchResult{}) == 1.0;
  for (std::size_t tp = 0; tp < 6; ++tp) {
    for (std::size_t fp = 0; fp < 6; ++fp) {
      for (std::size_t fn = 0; fn < 6; ++fn) {
        if (tp + fp + fn == 0) continue;
        arithmetic = arithmetic && jaccard(MatchResult{tp, fp, fn, {}}) ==
                                       static_cast<double>(tp) / static_cast<double>(tp + fp + fn);
      }
    }
  }
  const bool ok = equal * 100 >= trials * 95 && worst_gap <= 1 && never_larger && arithmetic;
  return {ok, "greedy = optimal on " + std::to_string(equal) + "/" + std::to_string(trials) +
                  ", worst gap " + std::to_string(worst_gap) + " (" + std::to_string(wide) +
                  " instances above 1)" +
                  (arithmetic ? ", arithmetic exact" : ", arithmetic MISMATCH")};
}

// ---- pipelines shared by 5-8 and 10 ----------------------------------------

struct Exp1Result {
  bool ran = false;
  std::string error;
  Report l1, l2;
  double seconds = 0.0;
};

struct Exp4Result {
  bool ran = false;
  std::string error;
  double width = 0.0;
  Report raw, binarized;
  double seconds = 0.0;
};

Exp1Result& exp1() {
  static Exp1Result r;
  static bool done = false;
  if (done) return r;
  done = true;
  const auto t0 = std::chrono::steady_clock::now();
  auto step = [&](const std::string& tag, const std::string& args) {
    if (!r.error.empty()) return;
    const int code = cli(tag, args);
    if (code != 0) r.error = tag + " exited with " + std::to_string(code);
  };
  step("exp1_simulate", "simulate --preset exp1-desk --seed 1 --out " + path("exp1/data"));
  for (const std::string loss : {"l2", "l1"}) {
    step("exp1_train_" + loss, "train --preset exp1-desk --seed 1 --loss " + loss + " --data " +
                                   path("exp1/data") + " --out " + path("exp1/train_" + loss));
    step("exp1_reconstruct_" + loss,
         "reconstruct " + std::string(loss == "l1" ? "--binarize " : "") + "--checkpoint " +
             path("exp1/train_" + loss + "/checkpoint.txt") + " --data " + path("exp1/data") +
             " --out " + path("exp1/recon_" + loss));
    step("exp1_evaluate_" + loss, "evaluate --recon " + path("exp1/recon_" + loss) + " --data " +
                                      path("exp1/data") + " --out " + path("exp1/eval_" + loss));
  }
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (r.error.empty()) {
    r.l1 = read_report(g_work / "exp1/eval_l1/report.csv");
    r.l2 = read_report(g_work / "exp1/eval_l2/report.csv");
    if (!r.l1.ok || !r.l2.ok) r.error = "malformed report.csv";
  }
  r.ran = r.error.empty();
  return r;
}

Exp4Result& exp4() {
  static Exp4Result r;
  static bool done = false;
  if (done) return r;
  done = true;
  const auto t0 = std::chrono::steady_clock::now();
  auto step = [&](const std::string& tag, const std::string& args) {
    if (!r.error.empty()) return;
    const int code = cli(tag, args);
    if (code != 0) r.error = tag + " exited with " + std::to_string(code);
  };
  step("exp4_simulate", "simulate --preset exp4-desk --seed 1 --out " + path("exp4/data"));
  step("exp4_train", "train --preset exp4-desk --seed 1 --data " + path("exp4/data") + " --out " +
                         path("exp4/train"));
  step("exp4_reconstruct", "reconstruct --binarize --checkpoint " +
                               path("exp4/train/checkpoint.txt") + " --data " +
                               path("exp4/data") + " --out " + path("exp4/recon"));
  for (const std::string src : {"raw", "binarized"}) {
    step("exp4_evaluate_" + src, "evaluate --set eval.jaccard_source=" + src + " --recon " +
                                     path("exp4/recon") + " --data " + path("exp4/data") +
                                     " --out " + path("exp4/eval_" + src));
  }
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (r.error.empty()) {
    try {
      r.width = checkpoint_load(path("exp4/train/checkpoint.txt")).theta.width;
    } catch (const std::exception& e) {
      r.error = e.what();
    }
    r.raw = read_report(g_work / "exp4/eval_raw/report.csv");
    r.binarized = read_report(g_work / "exp4/eval_binarized/report.csv");
    if (!r.raw.ok || !r.binarized.ok) r.error = "malformed report.csv";
  }
  r.ran = r.error.empty();
  return r;
}

// ---- 5 ---------------------------------------------------------------------

Outcome loss_contrast() {
  const Exp1Result& r = exp1();
  if (!r.ran) return {false, r.error};
  const double gap = r.l1.avg_j - r.l2.avg_j;
  const bool ok = gap >= 0.10 && r.l2.psnr >= r.l1.psnr && r.seconds < 15 * 60;
  return {ok, "Avg. J l1 " + fmt(r.l1.avg_j) + " vs l2 " + fmt(r.l2.avg_j) + " (gap " + fmt(gap, 3) +
                  "), PSNR l2 " + fmt(r.l2.psnr) + " vs l1 " + fmt(r.l1.psnr) + ", " +
                  fmt(r.seconds, 4) + " s"};
}

// ---- 6 ---------------------------------------------------------------------

Outcome jaccard_monotone() {
  std::vector<const Report*> reports;
  const Exp1Result& a = exp1();
  const Exp4Result& b = exp4();
  if (a.ran) {
    reports.push_back(&a.l1);
    reports.push_back(&a.l2);
  }
  if (b.ran) {
    reports.push_back(&b.raw);
    reports.push_back(&b.binarized);
  }
  if (reports.empty()) return {false, "no evaluation tables were produced"};
  std::size_t rows = 0, bad = 0;
  for (const Report* r : reports) {
    for (const auto& j : r->jaccard) {
      ++rows;
      if (!(j[0] <= j[1] && j[1] <= j[2])) ++bad;
    }
  }
  const bool all = a.ran && b.ran;
  return {bad == 0 && all, std::to_string(rows) + " rows in " + std::to_string(reports.size()) +
                               " tables, " + std::to_string(bad) + " violations" +
                               (all ? "" : " (some pipelines failed)")};
}

// ---- 7 ---------------------------------------------------------------------

Outcome semiblind_recovery() {
  const Exp4Result& r = exp4();
  if (!r.ran) return {false, r.error};
  const bool ok = r.width >= 2.5 && r.width <= 3.5 && r.binarized.avg_j > r.raw.avg_j &&
                  r.seconds < 20 * 60;
  return {ok, "learned width " + fmt(r.width) + " (true 3), Avg. J binarized " +
                  fmt(r.binarized.avg_j) + " vs raw " + fmt(r.raw.avg_j) + ", " +
                  fmt(r.seconds, 4) + " s"};
}

// ---- 8 ---------------------------------------------------------------------

Outcome outer_descent() {
  exp1();
  exp4();
  std::size_t runs = 0, increases = 0, points = 0;
  for (const char* dir : {"exp1/train_l1", "exp1/train_l2", "exp4/train"}) {
    const fs::path p = g_work / dir / "history.csv";
    if (!fs::exists(p)) continue;
    const std::vector<double> loss = history_losses(p);
    if (loss.size() < 2) continue;
    ++runs;
    points += loss.size();
    for (std::size_t i = 1; i < loss.size(); ++i) {
      if (loss[i] > loss[i - 1]) ++increases;
    }
  }
  return {runs == 3 && increases == 0, std::to_string(runs) + " runs, " + std::to_string(points) +
                                           " history rows, " + std::to_string(increases) +
                                           " increases"};
}

// ---- 9 ---------------------------------------------------------------------

Outcome psf_shrink() {
  FluctuationConfig cfg;  // 64 x 64, width 3, sigma 3
  cfg.frames = 1000;
  cfg.thickness = 2;
  const ForwardModel sq(cfg.width, 1, KernelMode::Squared, cfg.size, cfg.size, cfg.support);
  const double sigma2 = cfg.sigma * cfg.sigma;
  double total = 0.0, worst = 0.0;
  const int pairs = 50;
  for (int s = 0; s < pairs; ++s) {
    Rng rng = Rng::stream(99, static_cast<std::uint64_t>(s));
    const Image pattern = gen_filament_pattern(cfg, rng);
    const FluctuationPair p = gen_fluctuation_pair(pattern, cfg, rng);
    Image model = sq.apply(p.vg);
    for (double& v : model.values()) v += sigma2;
    const double e = norm2(p.vf - model) / norm2(p.vf);
    total += e;
    worst = std::max(worst, e);
  }
  const double mean = total / pairs;
  return {mean <= 0.10, "mean relative gap " + fmt(mean, 3) + " over " + std::to_string(pairs) +
                            " pairs (worst " + fmt(worst, 3) + ")"};
}

// ---- 10 --------------------------------------------------------------------

Outcome determinism() {
  const Exp1Result& a = exp1();
  const Exp4Result& b = exp4();
  if (!a.ran || !b.ran) return {false, "pipelines did not complete"};

  struct Rerun {
    std::string tag, args, original;
  };
  const std::vector<Rerun> reruns = {
      {"simulate", "simulate --config " + path("exp1/data/config.txt") + " --out " + path("rerun/data"),
       "exp1/data"},
      {"train", "train --config " + path("exp1/train_l2/config.txt") + " --data " +
                    path("exp1/data") + " --out " + path("rerun/train_l2"),
       "exp1/train_l2"},
      {"train-semiblind", "train --config " + path("exp4/train/config.txt") + " --data " +
                              path("exp4/data") + " --out " + path("rerun/train_exp4"),
       "exp4/train"},
      {"reconstruct", "reconstruct --binarize --config " + path("exp1/recon_l1/config.txt") +
                          " --checkpoint " + path("exp1/train_l1/checkpoint.txt") + " --data " +
                          path("exp1/data") + " --out " + path("rerun/recon_l1"),
       "exp1/recon_l1"},
      {"evaluate", "evaluate --config " + path("exp1/eval_l1/config.txt") + " --recon " +
                       path("exp1/recon_l1") + " --data " + path("exp1/data") + " --out " +
                       path("rerun/eval_l1"),
       "exp1/eval_l1"},
  };
  std::vector<std::string> problems;
  // checkgrad: run once, then again from its echoed config.
  if (cli("checkgrad_first", "checkgrad --out " + path("checkgrad")) != 0) {
    problems.push_back("checkgrad failed");
  } else if (cli("rerun_checkgrad", "checkgrad --config " + path("checkgrad/config.txt") +
                                        " --out " + path("rerun/checkgrad")) != 0) {
    problems.push_back("checkgrad rerun failed");
  } else if (auto d = tree_difference(g_work / "checkgrad", g_work / "rerun/checkgrad")) {
    problems.push_back("checkgrad: " + *d);
  }
  for (const Rerun& r : reruns) {
    if (cli("rerun_" + r.tag, r.args) != 0) {
      problems.push_back(r.tag + " rerun failed");
      continue;
    }
    const std::string out = r.args.substr(r.args.rfind("--out ") + 6);
    if (auto d = tree_difference(g_work / r.original, out)) problems.push_back(r.tag + ": " + *d);
  }
  std::string detail = std::to_string(reruns.size() + 1) + " commands rerun from echoed configs";
  for (const std::string& p : problems) detail += "; " + p;
  return {problems.empty(), detail};
}

}  // namespace

int main(int argc, char** argv) {
  g_work = argc > 1 ? fs::path(argv[1]) : fs::path(ACCEPTANCE_WORKDIR);
  std::set<int> only;
  for (int i = 2; i < argc; ++i) only.insert(std::atoi(argv[i]));
  fs::remove_all(g_work);
  fs::create_directories(g_work);

  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"gradient correctness", gradient_correctness},
      {"rho_max nullification", rho_nullification},
      {"operator algebra", operator_algebra},
      {"Jaccard oracle", jaccard_oracle},
      {"loss contrast (desk Experiment 1)", loss_contrast},
      {"Jaccard monotonicity", jaccard_monotone},
      {"semi-blind recovery (desk Experiment 4)", semiblind_recovery},
      {"outer descent", outer_descent},
      {"PSF shrink consistency", psf_shrink},
      {"determinism", determinism},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i + 1);
    if (!only.empty() && !only.count(id)) continue;
    Outcome o;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (!o.pass) ++failed;
    std::cout << (o.pass ? "PASS" : "FAIL") << "  criterion " << id << ": " << criteria[i].first
              << " | " << o.detail << " [" << fmt(secs, 3) << " s]" << std::endl;
  }
  std::cout << (failed == 0 ? "all criteria passed" : std::to_string(failed) + " criteria failed")
            << std::endl;
  return failed == 0 ? 0 : 1;
}
