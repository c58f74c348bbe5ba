#include "commands.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "unroll/gradcheck.hpp"
#include "unroll/metrics.hpp"
#include "unroll/outer_trainer.hpp"
#include "unroll/semiblind.hpp"
#include "unroll/simulate.hpp"

namespace cli {

namespace fs = std::filesystem;
using nlohmann::ordered_json;
using unroll::Image;
using unroll::Sample;

namespace {

constexpr std::uint64_t kTestSeedOffset = 1000;

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

void prepare_out(const std::string& dir, bool force) {
  if (dir.empty()) throw UsageError("--out is required");
  if (fs::exists(dir)) {
    if (!fs::is_directory(dir)) throw UsageError(dir + " exists and is not a directory");
    if (!fs::is_empty(dir)) {
      if (!force) throw UsageError("output directory " + dir + " is not empty (use --force)");
      for (const auto& entry : fs::directory_iterator(dir)) fs::remove_all(entry.path());
    }
  }
  fs::create_directories(dir);
}

std::string path_in(const std::string& dir, const std::string& name) {
  return (fs::path(dir) / name).string();
}

bool is_fluctuation(const Config& c) { return c.text("data.kind") == "fluctuation"; }

// ---- data generation -------------------------------------------------------

unroll::FrameGenConfig frame_config(const Config& c) {
  unroll::FrameGenConfig g;
  g.coarse = c.count("data.coarse");
  g.factor = c.count("data.factor");
  g.emitters_lo = c.count("data.emitters_lo");
  g.emitters_hi = c.count("data.emitters_hi");
  g.intensity_lo = c.real("data.intensity_lo");
  g.intensity_hi = c.real("data.intensity_hi");
  g.levels = c.reals("data.levels");
  g.width = c.real("data.psf_width");
  g.support = c.count("data.psf_support");
  g.noise.kind = c.text("data.noise") == "poisson" ? unroll::NoiseKind::Poisson
                                                   : unroll::NoiseKind::Gaussian;
  g.noise.sigma = c.real("data.sigma");
  g.noise.background = c.real("data.background");
  g.validate();
  return g;
}

unroll::EmissionConfig emission_config(const Config& c) {
  unroll::EmissionConfig e;
  e.molecules = c.count("data.molecules");
  e.activations_per_frame = c.real("data.activations");
  e.mean_on_frames = c.real("data.mean_on");
  e.level_probs = c.reals("data.level_probs");
  e.level_scale = c.real("data.level_scale");
  return e;
}

unroll::FluctuationConfig fluctuation_config(const Config& c) {
  if (c.count("data.factor") != 1) throw ConfigError("fluctuation data needs data.factor = 1");
  if (c.text("data.noise") != "gaussian") {
    throw ConfigError("fluctuation data needs data.noise = gaussian");
  }
  unroll::FluctuationConfig f;
  f.size = c.count("data.coarse");
  f.frames = c.count("data.frames");
  f.width = c.real("data.psf_width");
  f.support = c.count("data.psf_support");
  f.sigma = c.real("data.sigma");
  f.on_fraction = c.real("data.on_fraction");
  f.mean_on_frames = c.real("data.mean_on");
  f.filaments_lo = c.count("data.filaments_lo");
  f.filaments_hi = c.count("data.filaments_hi");
  f.intensity = c.real("data.filament_intensity");
  f.thickness = c.count("data.thickness");
  f.validate();
  return f;
}

std::vector<Sample> generate(const Config& c, std::uint64_t seed, std::size_t n) {
  std::vector<Sample> out;
  const std::string& kind = c.text("data.kind");
  if (kind == "fluctuation") {
    const unroll::FluctuationConfig fc = fluctuation_config(c);
    for (std::size_t s = 0; s < n; ++s) {
      unroll::Rng rng = unroll::Rng::stream(seed, s);
      const Image pattern = unroll::gen_filament_pattern(fc, rng);
      unroll::FluctuationPair pair = unroll::gen_fluctuation_pair(pattern, fc, rng);
      out.push_back({std::move(pair.vf), std::move(pair.vg)});
    }
    return out;
  }
  const unroll::FrameGenConfig gen = frame_config(c);
  const unroll::ForwardModel model = gen.model();
  if (kind == "emission") {
    unroll::Rng rng = unroll::Rng::stream(seed, 0);
    for (Image& g : unroll::gen_emission_sequence(gen, emission_config(c), n, rng)) {
      Image f = unroll::corrupt(g, model, gen.noise, rng);
      out.push_back({std::move(f), std::move(g)});
    }
    return out;
  }
  for (std::size_t t = 0; t < n; ++t) {
    unroll::Rng rng = unroll::Rng::stream(seed, t);
    Image g = unroll::gen_sparse_frame(gen, rng);
    Image f = unroll::corrupt(g, model, gen.noise, rng);
    out.push_back({std::move(f), std::move(g)});
  }
  return out;
}

std::string metadata(const Config& c, const std::string& split) {
  ordered_json meta;
  meta["split"] = split;
  meta["config"] = c.values();
  return meta.dump();
}

// A dataset root holds train/ and test/; a bare sample set is accepted too.
unroll::SampleSet load_split(const std::string& dir, const std::string& split) {
  if (dir.empty()) throw UsageError("--data is required");
  const fs::path sub = fs::path(dir) / split;
  if (fs::exists(sub / "manifest.json")) return unroll::load_sample_set(sub.string());
  if (fs::exists(fs::path(dir) / "manifest.json")) return unroll::load_sample_set(dir);
  throw UsageError("no sample set found in " + dir);
}

// Generator keys come from the dataset so the model matches the data.
void adopt_dataset_keys(Config& c, const unroll::SampleSet& set) {
  const ordered_json meta = ordered_json::parse(set.metadata_json);
  if (!meta.contains("config")) return;
  for (const auto& [k, v] : meta["config"].items()) {
    if (k.rfind("data.", 0) == 0) c.set(k, v.get<std::string>());
  }
}

// ---- model assembly --------------------------------------------------------

double model_width(const Config& c) {
  const double w = c.real("model.width0");
  return w > 0.0 ? w : c.real("data.psf_width");
}

unroll::FidelityTag fidelity_tag(const Config& c) {
  return c.text("model.fidelity") == "kl" ? unroll::FidelityTag::PoissonKL
                                          : unroll::FidelityTag::GaussianL2;
}

double fidelity_bg(const Config& c) {
  const double v = c.real("model.fidelity_bg");
  if (v >= 0.0) return v;
  if (is_fluctuation(c)) return c.real("data.sigma") * c.real("data.sigma");
  if (fidelity_tag(c) == unroll::FidelityTag::PoissonKL) {
    const double b = c.real("data.background");
    return b > 0.0 ? b : 1.0;
  }
  return 0.0;
}

unroll::LossConfig loss_config(const Config& c) {
  unroll::LossConfig loss;
  loss.kind = c.text("model.loss") == "l1" ? unroll::LossKind::L1 : unroll::LossKind::L2;
  loss.bin.delta = c.real("model.delta0");
  loss.bin.c0 = c.real("model.c0");
  loss.bin.eps = c.real("model.bin_eps");
  loss.hub.gamma = c.real("model.huber_gamma");
  const double peak = c.real("model.fixed_peak");
  if (peak > 0.0) loss.fixed_peak = peak;
  return loss;
}

unroll::Problem build_problem(const Config& c, std::size_t rows, std::size_t cols) {
  const unroll::LossConfig loss = loss_config(c);
  const bool learn_width = c.flag("train.learn_width");
  if (is_fluctuation(c)) {
    if (fidelity_tag(c) != unroll::FidelityTag::GaussianL2) {
      throw ConfigError("fluctuation data supports only model.fidelity = l2");
    }
    unroll::FluctEnergySpec spec;
    spec.width = model_width(c);
    spec.sigma2 = fidelity_bg(c);
    spec.rho = c.real("model.rho0");
    spec.eps_proj = c.real("model.eps_proj");
    spec.support = c.count("data.psf_support");
    unroll::Problem p = unroll::semiblind_problem(spec, rows, cols, loss);
    p.learn_width = learn_width;
    return p;
  }
  const unroll::ForwardModel model(model_width(c), c.count("data.factor"),
                                   unroll::KernelMode::Standard, rows, cols,
                                   c.count("data.psf_support"));
  return unroll::Problem{model, unroll::Fidelity{fidelity_tag(c), fidelity_bg(c)},
                         c.real("model.eps_proj"), loss, learn_width};
}

unroll::Problem problem_for(const Config& c, const std::vector<Sample>& data) {
  if (data.empty()) throw UsageError("dataset is empty");
  const std::size_t factor = is_fluctuation(c) ? 1 : c.count("data.factor");
  const Image& f = data.front().f;
  return build_problem(c, f.rows() * factor, f.cols() * factor);
}

unroll::HyperParams initial_theta(const Config& c) {
  const std::size_t K = c.count("model.K");
  if (K == 0) throw ConfigError("model.K must be positive");
  return unroll::HyperParams{c.real("model.rho0"), std::vector<double>(K, c.real("model.alpha0")),
                             c.real("model.delta0"), model_width(c)};
}

unroll::Scaling scaling(const Config& c) {
  const std::string& s = c.text("train.scaling");
  if (s == "identity") return unroll::Scaling::Identity;
  if (s == "magnitude") return unroll::Scaling::Magnitude;
  if (s == "block") return unroll::Scaling::BlockMagnitude;
  return unroll::Scaling::Secant;
}

unroll::TrainConfig train_config(const Config& c, const unroll::Problem& problem) {
  unroll::TrainConfig t;
  t.outer_iters = static_cast<int>(c.integer("train.outer_iters"));
  t.learn.rho = c.flag("train.learn_rho");
  t.learn.alpha = c.flag("train.learn_alpha");
  t.learn.delta = c.flag("train.learn_delta") && problem.loss.kind == unroll::LossKind::L1;
  t.learn.width = c.flag("train.learn_width");
  t.armijo.initial_step = c.real("train.step");
  t.armijo.shrink = c.real("train.shrink");
  t.armijo.sufficient_decrease = c.real("train.armijo_c");
  t.armijo.max_backtracks = static_cast<int>(c.integer("train.backtracks"));
  t.armijo.reuse_step = c.flag("train.reuse_step");
  t.scaling = scaling(c);
  t.rel_tolerance = c.real("train.rel_tol");
  t.gt_peak = c.real("train.gt_peak");
  t.threads = std::max<std::size_t>(1, c.count("threads"));
  return t;
}

unroll::Bounds bounds_for(const Config& c, const std::vector<Sample>& data,
                          const unroll::Problem& problem) {
  double cap = c.real("train.alpha_cap");
  const double stable = c.real("train.alpha_cap_stable");
  if (stable > 0.0 && problem.fidelity.tag == unroll::FidelityTag::GaussianL2) {
    cap = std::min(cap, stable / unroll::operator_norm_sq(problem.model));
  }
  return unroll::default_bounds(data, problem, c.real("train.rho_cap_kl"), cap,
                                c.real("train.width_cap"));
}

// ---- output helpers --------------------------------------------------------

void write_pgm(const std::string& path, const Image& img) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  os << "P5\n" << img.cols() << " " << img.rows() << "\n255\n";
  const double top = unroll::max_value(img);
  for (double v : img.values()) {
    const double s = top > 0.0 ? std::clamp(v / top, 0.0, 1.0) : 0.0;
    os.put(static_cast<char>(static_cast<unsigned char>(std::lround(255.0 * s))));
  }
  if (!os) throw std::runtime_error("cannot write " + path);
}

std::string frame_name(const char* stem, std::size_t i, const char* ext) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%s_%05zu.%s", stem, i, ext);
  return buf;
}

template <class F>
void parallel_for(std::size_t n, std::size_t threads, F&& body) {
  threads = std::clamp<std::size_t>(threads, 1, std::max<std::size_t>(1, n));
  if (threads == 1) {
    for (std::size_t i = 0; i < n; ++i) body(i);
    return;
  }
  std::vector<std::exception_ptr> errors(threads);
  {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < threads; ++w) {
      pool.emplace_back([&, w] {
        try {
          for (std::size_t i = w; i < n; i += threads) body(i);
        } catch (...) {
          errors[w] = std::current_exception();
        }
      });
    }
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

std::string fixed(double x, int digits) {
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, x);
  return buf;
}

void report_theta(const unroll::HyperParams& th) {
  const auto [lo, hi] = std::minmax_element(th.alpha.begin(), th.alpha.end());
  std::cout << "rho = " << unroll::format_double(th.rho)
            << "\ndelta = " << unroll::format_double(th.delta)
            << "\nwidth = " << unroll::format_double(th.width) << "\nalpha in ["
            << unroll::format_double(*lo) << ", " << unroll::format_double(*hi) << "]\n";
}

template <class F>
int guarded(F&& body) {
  try {
    return body();
  } catch (const unroll::TrainingError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kDiverged;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  }
}

}  // namespace

int cmd_simulate(const Config& cfg, const Paths& paths) {
  return guarded([&] {
    // Validate before touching the output directory.
    if (is_fluctuation(cfg)) {
      fluctuation_config(cfg);
    } else {
      frame_config(cfg);
    }
    prepare_out(paths.out, paths.force);
    const auto seed = static_cast<std::uint64_t>(cfg.integer("seed"));
    const std::pair<const char*, std::size_t> splits[] = {
        {"train", cfg.count("data.train_count")}, {"test", cfg.count("data.test_count")}};
    for (std::size_t s = 0; s < 2; ++s) {
      unroll::SampleSet set;
      set.samples = generate(cfg, seed + s * kTestSeedOffset, splits[s].second);
      for (std::size_t i = 0; i < set.samples.size(); ++i) set.seeds.push_back(i);
      set.metadata_json = metadata(cfg, splits[s].first);
      unroll::save_sample_set(set, path_in(paths.out, splits[s].first));
      std::cout << splits[s].first << ": " << set.samples.size() << " samples\n";
    }
    cfg.write(path_in(paths.out, "config.txt"));
    return kOk;
  });
}

int cmd_train(Config cfg, const Paths& paths, bool resume) {
  return guarded([&] {
    const unroll::SampleSet set = load_split(paths.data, "train");
    adopt_dataset_keys(cfg, set);
    const unroll::Problem problem = problem_for(cfg, set.samples);
    unroll::HyperParams theta0 = initial_theta(cfg);
    std::vector<unroll::HistoryRow> history;
    if (resume) {
      const unroll::Checkpoint cp = unroll::checkpoint_load(paths.checkpoint);
      if (cp.theta.alpha.size() != theta0.alpha.size()) {
        throw UsageError("checkpoint has K = " + std::to_string(cp.theta.alpha.size()) +
                         " but model.K = " + std::to_string(theta0.alpha.size()));
      }
      theta0 = cp.theta;
      history = cp.history;
    }
    const unroll::TrainConfig tc = train_config(cfg, problem);
    const unroll::Bounds bounds = bounds_for(cfg, set.samples, problem);
    prepare_out(paths.out, paths.force);
    cfg.write(path_in(paths.out, "config.txt"));

    const unroll::TrainResult r = unroll::train(set.samples, problem, theta0, tc, bounds, history);
    unroll::checkpoint_save(r.theta, r.history, cfg.values(), path_in(paths.out, "checkpoint.txt"));
    unroll::write_history_csv(r.history, path_in(paths.out, "history.csv"));
    std::cout << "stop: " << r.stop_reason << "\nloss: "
              << unroll::format_double(r.history.front().loss) << " -> "
              << unroll::format_double(r.history.back().loss) << " over "
              << r.history.size() - 1 << " iterations\n";
    report_theta(r.theta);
    return kOk;
  });
}

int cmd_reconstruct(Config cfg, const Paths& paths, bool binarize, bool pgm) {
  return guarded([&] {
    const unroll::Checkpoint cp = unroll::checkpoint_load(paths.checkpoint);
    const unroll::SampleSet set = load_split(paths.data, "test");
    const unroll::Problem problem = problem_for(cfg, set.samples);
    const unroll::HyperParams& theta = cp.theta;
    const unroll::EnergySpec spec = problem.energy(theta);
    const unroll::BinarizationParams bin = problem.binarization(theta);
    prepare_out(paths.out, paths.force);
    cfg.write(path_in(paths.out, "config.txt"));

    const std::size_t n = set.samples.size();
    std::vector<Image> us(n);
    parallel_for(n, cfg.count("threads"), [&](std::size_t i) {
      us[i] = unroll::solve_unrolled(spec, set.samples[i].f, theta.alpha, false).u;
    });

    ordered_json manifest;
    manifest["format"] = "unroll-recon-1";
    manifest["count"] = n;
    manifest["binarized"] = binarize;
    ordered_json frames = ordered_json::array();
    std::vector<Image> bs;
    for (std::size_t i = 0; i < n; ++i) {
      ordered_json entry;
      entry["u"] = frame_name("u", i, "bin");
      unroll::write_image(path_in(paths.out, entry["u"]), us[i]);
      if (pgm) write_pgm(path_in(paths.out, frame_name("u", i, "pgm")), us[i]);
      if (binarize) {
        bs.push_back(unroll::binarize(us[i], bin, problem.loss.fixed_peak));
        entry["b"] = frame_name("b", i, "bin");
        unroll::write_image(path_in(paths.out, entry["b"]), bs.back());
        if (pgm) write_pgm(path_in(paths.out, frame_name("b", i, "pgm")), bs.back());
      }
      frames.push_back(entry);
    }
    manifest["frames"] = frames;
    const Image u_sr = unroll::average_stack(us);
    unroll::write_image(path_in(paths.out, "u_sr.bin"), u_sr);
    manifest["average"] = "u_sr.bin";
    if (pgm) write_pgm(path_in(paths.out, "u_sr.pgm"), u_sr);
    if (binarize) {
      unroll::write_image(path_in(paths.out, "b_sr.bin"), unroll::average_stack(bs));
      manifest["average_binarized"] = "b_sr.bin";
    }
    std::ofstream(path_in(paths.out, "recon.json")) << manifest.dump(2) << "\n";
    std::cout << n << " reconstructions written to " << paths.out << "\n";
    return kOk;
  });
}

int cmd_evaluate(const Config& cfg, const Paths& paths) {
  return guarded([&] {
    if (paths.recon.empty()) throw UsageError("--recon is required");
    const fs::path mpath = fs::path(paths.recon) / "recon.json";
    if (!fs::exists(mpath)) throw UsageError("no reconstructions found in " + paths.recon);
    ordered_json manifest;
    std::ifstream(mpath) >> manifest;
    const std::size_t n = manifest.value("count", std::size_t{0});
    if (n == 0 || manifest["frames"].size() != n) {
      throw UsageError("no reconstructions found in " + paths.recon);
    }
    const unroll::SampleSet truth = load_split(paths.data, "test");
    if (truth.samples.size() != n) {
      throw UsageError("reconstruction count " + std::to_string(n) +
                       " does not match ground-truth count " +
                       std::to_string(truth.samples.size()));
    }
    std::string source = cfg.text("eval.jaccard_source");
    if (source == "auto") source = manifest.value("binarized", false) ? "binarized" : "raw";
    if (source == "binarized" && !manifest.value("binarized", false)) {
      throw UsageError("binarized Jaccard requested but the reconstructions are not binarized");
    }
    const std::vector<double> tols = cfg.reals("eval.tolerances");
    if (tols.empty()) throw ConfigError("eval.tolerances is empty");
    const double threshold = cfg.real("eval.threshold");
    const double peak = cfg.real("eval.psnr_peak");

    std::ostringstream csv;
    csv << "frame";
    for (double t : tols) csv << ",J_" << unroll::format_double(t);
    csv << ",Avg. J,PSNR\n";
    std::vector<double> mean(tols.size() + 2, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      const auto& entry = manifest["frames"][i];
      const Image u = unroll::read_image(path_in(paths.recon, entry["u"].get<std::string>()));
      const Image& g = truth.samples[i].g;
      const Image scored = source == "binarized"
                               ? unroll::read_image(path_in(paths.recon, entry["b"].get<std::string>()))
                               : u;
      const unroll::PointSet gt = unroll::extract_points(g, 0.0);
      const unroll::PointSet rc = unroll::extract_points(scored, threshold);
      csv << i;
      double avg = 0.0;
      for (std::size_t k = 0; k < tols.size(); ++k) {
        const double j = unroll::jaccard(unroll::match_points(rc, gt, tols[k]));
        avg += j;
        mean[k] += j;
        csv << "," << fixed(j, 6);
      }
      avg /= static_cast<double>(tols.size());
      const double p = unroll::psnr(u, g, peak);
      mean[tols.size()] += avg;
      mean[tols.size() + 1] += p;
      csv << "," << fixed(avg, 6) << "," << fixed(p, 4) << "\n";
    }
    csv << "mean";
    for (std::size_t k = 0; k < mean.size(); ++k) {
      csv << "," << fixed(mean[k] / static_cast<double>(n), k + 1 == mean.size() ? 4 : 6);
    }
    csv << "\n";

    if (!paths.out.empty()) {
      prepare_out(paths.out, paths.force);
      cfg.write(path_in(paths.out, "config.txt"));
      std::ofstream(path_in(paths.out, "report.csv")) << csv.str();
    }
    std::cout << "jaccard source: " << source << "\n" << csv.str();
    return kOk;
  });
}

int cmd_checkgrad(const Config& cfg, const Paths& paths) {
  return guarded([&] {
    unroll::CheckSetup base;
    base.fine = cfg.count("check.fine");
    base.factor = cfg.count("check.factor");
    base.K = cfg.count("check.K");
    base.width = cfg.real("check.width");
    base.emitters = cfg.count("check.emitters");
    unroll::GradCheckOptions options;
    options.step_scale = cfg.real("check.step_scale");
    options.tolerance = cfg.real("check.tolerance");
    {
      std::stringstream ss(cfg.text("check.params"));
      std::string p;
      while (std::getline(ss, p, ',')) {
        if (!p.empty()) options.params.push_back(p);
      }
    }

    std::vector<std::pair<unroll::LossKind, unroll::FidelityTag>> combos;
    if (cfg.flag("check.all")) {
      for (auto l : {unroll::LossKind::L2, unroll::LossKind::L1}) {
        for (auto f : {unroll::FidelityTag::GaussianL2, unroll::FidelityTag::PoissonKL}) {
          combos.emplace_back(l, f);
        }
      }
    } else {
      combos.emplace_back(loss_config(cfg).kind, fidelity_tag(cfg));
    }

    const auto seed = static_cast<std::uint64_t>(cfg.integer("seed"));
    std::ostringstream report;
    bool ok = true;
    for (const auto& [loss, fid] : combos) {
      unroll::CheckSetup setup = base;
      setup.loss = loss;
      setup.fidelity = fid;
      const unroll::CheckOutcome out = unroll::run_gradient_check(setup, seed, options);
      const bool pass = out.report.smooth && !out.report.rows.empty() && out.report.passed();
      ok = ok && pass;
      report << "loss=" << (loss == unroll::LossKind::L1 ? "l1" : "l2")
             << " fidelity=" << (fid == unroll::FidelityTag::PoissonKL ? "kl" : "l2")
             << " seed=" << out.seed << " redraws=" << out.redraws << "\n"
             << out.report.table();
      if (out.report.rows.empty()) report << "no parameter matched the selection\n";
      if (!out.report.smooth) report << "every draw crossed a breakpoint\n";
      report << (pass ? "PASS" : "FAIL") << "\n\n";
    }
    if (!paths.out.empty()) {
      prepare_out(paths.out, paths.force);
      cfg.write(path_in(paths.out, "config.txt"));
      std::ofstream(path_in(paths.out, "report.txt")) << report.str();
    }
    std::cout << report.str();
    return ok ? kOk : kFailed;
  });
}

}  // namespace cli
