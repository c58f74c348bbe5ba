#include "unroll/simulate.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <stdexcept>

#include "json.hpp"

namespace unroll {
namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

constexpr char kMagic[8] = {'U', 'N', 'R', 'L', 'I', 'M', 'G', '1'};

static_assert(std::endian::native == std::endian::little,
              "flat image I/O assumes a little-endian host");

// Distinct indices in [0, n), chosen uniformly (partial Fisher-Yates).
std::vector<std::size_t> choose_distinct(std::size_t n, std::size_t count, Rng& rng) {
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  for (std::size_t i = 0; i < count; ++i) {
    const auto j = static_cast<std::size_t>(
        rng.uniform_int(static_cast<std::int64_t>(i), static_cast<std::int64_t>(n - 1)));
    std::swap(idx[i], idx[j]);
  }
  idx.resize(count);
  return idx;
}

}  // namespace

Rng Rng::stream(std::uint64_t seed, std::uint64_t index) {
  return Rng(splitmix64(splitmix64(seed) ^ splitmix64(index + 0x632be59bd9b4e019ULL)));
}

double Rng::uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

std::int64_t Rng::uniform_int(std::int64_t lo, std::int64_t hi) {
  if (hi < lo) throw std::invalid_argument("uniform_int: empty range");
  const auto span = static_cast<std::uint64_t>(hi - lo) + 1;
  if (span == 0) return static_cast<std::int64_t>(engine_());
  // Rejection keeps the draw exactly uniform.
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                              std::numeric_limits<std::uint64_t>::max() % span;
  std::uint64_t x;
  do {
    x = engine_();
  } while (x >= limit);
  return lo + static_cast<std::int64_t>(x % span);
}

double Rng::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  // Marsaglia polar method
  double u, v, s;
  do {
    u = 2.0 * uniform() - 1.0;
    v = 2.0 * uniform() - 1.0;
    s = u * u + v * v;
  } while (s >= 1.0 || s == 0.0);
  const double m = std::sqrt(-2.0 * std::log(s) / s);
  spare_ = v * m;
  has_spare_ = true;
  return u * m;
}

std::int64_t Rng::poisson(double mean) {
  if (!(mean >= 0.0) || !std::isfinite(mean)) {
    throw std::domain_error("poisson: invalid mean " + std::to_string(mean));
  }
  if (mean == 0.0) return 0;
  if (mean < 30.0) {
    // CDF inversion
    const double u = uniform();
    double p = std::exp(-mean);
    double cdf = p;
    std::int64_t k = 0;
    while (u > cdf && k < 10000) {
      ++k;
      p *= mean / static_cast<double>(k);
      cdf += p;
    }
    return k;
  }
  // Transformed rejection with squeeze (Hormann's PTRS).
  const double slam = std::sqrt(mean);
  const double loglam = std::log(mean);
  const double b = 0.931 + 2.53 * slam;
  const double a = -0.059 + 0.02483 * b;
  const double invalpha = 1.1239 + 1.1328 / (b - 3.4);
  const double vr = 0.9277 - 3.6224 / (b - 2.0);
  while (true) {
    const double U = uniform() - 0.5;
    const double V = uniform();
    const double us = 0.5 - std::abs(U);
    const auto k = static_cast<std::int64_t>(std::floor((2.0 * a / us + b) * U + mean + 0.43));
    if (us >= 0.07 && V <= vr) return k;
    if (k < 0 || (us < 0.013 && V > us)) continue;
    const double kd = static_cast<double>(k);
    if (std::log(V) + std::log(invalpha) - std::log(a / (us * us) + b) <=
        -mean + kd * loglam - std::lgamma(kd + 1.0)) {
      return k;
    }
  }
}

ForwardModel FrameGenConfig::model() const {
  return ForwardModel(width, factor, KernelMode::Standard, fine(), fine(), support);
}

void FrameGenConfig::validate() const {
  if (coarse == 0 || factor == 0) throw std::invalid_argument("FrameGenConfig: empty grid");
  if (emitters_lo > emitters_hi) {
    throw std::invalid_argument("FrameGenConfig: emitters_lo > emitters_hi");
  }
  if (emitters_hi > fine() * fine()) {
    throw std::invalid_argument("FrameGenConfig: more emitters than fine pixels");
  }
  if (intensity_lo > intensity_hi) {
    throw std::invalid_argument("FrameGenConfig: intensity_lo > intensity_hi");
  }
  for (double v : levels) {
    if (!(v >= 0.0)) throw std::invalid_argument("FrameGenConfig: negative intensity level");
  }
}

void FluctuationConfig::validate() const {
  if (frames < 2) throw std::invalid_argument("FluctuationConfig: need at least 2 frames");
  if (on_fraction < 0.0 || on_fraction > 1.0) {
    throw std::invalid_argument("FluctuationConfig: on_fraction outside [0, 1]");
  }
  if (mean_on_frames < 1.0) throw std::invalid_argument("FluctuationConfig: mean_on_frames < 1");
  if (on_fraction > 0.0 && on_fraction < 1.0 &&
      on_fraction / (1.0 - on_fraction) > mean_on_frames) {
    throw std::invalid_argument(
        "FluctuationConfig: on_fraction too high for the ON dwell time (OFF->ON probability > 1)");
  }
  if (filaments_lo > filaments_hi) {
    throw std::invalid_argument("FluctuationConfig: filaments_lo > filaments_hi");
  }
}

Image gen_sparse_frame(const FrameGenConfig& cfg, Rng& rng) {
  cfg.validate();
  const std::size_t n = cfg.fine();
  const auto count = static_cast<std::size_t>(rng.uniform_int(
      static_cast<std::int64_t>(cfg.emitters_lo), static_cast<std::int64_t>(cfg.emitters_hi)));
  Image g(n, n);
  for (std::size_t idx : choose_distinct(n * n, count, rng)) {
    if (cfg.levels.empty()) {
      g[idx] = rng.uniform(cfg.intensity_lo, cfg.intensity_hi);
    } else {
      g[idx] = cfg.levels[static_cast<std::size_t>(
          rng.uniform_int(0, static_cast<std::int64_t>(cfg.levels.size()) - 1))];
    }
  }
  return g;
}

Image corrupt(const Image& g, const ForwardModel& model, const NoiseConfig& noise, Rng& rng) {
  Image f = model.apply(g);
  if (noise.kind == NoiseKind::Gaussian) {
    for (double& v : f.values()) v += noise.sigma * rng.normal();
    return f;
  }
  for (double& v : f.values()) {
    double mean = v + noise.background;
    if (mean < -1e-9) throw std::domain_error("corrupt: negative Poisson mean");
    mean = std::max(mean, 0.0);
    v = static_cast<double>(rng.poisson(mean));
  }
  return f;
}

std::vector<Image> gen_emission_sequence(const FrameGenConfig& cfg, const EmissionConfig& em,
                                         std::size_t frames, Rng& rng) {
  cfg.validate();
  const std::size_t n = cfg.fine();
  if (em.molecules > n * n) throw std::invalid_argument("EmissionConfig: too many molecules");
  if (!(em.mean_on_frames >= 1.0)) {
    throw std::invalid_argument("EmissionConfig: mean_on_frames must be >= 1");
  }
  const std::vector<std::size_t> positions = choose_distinct(n * n, em.molecules, rng);
  std::vector<int> remaining(em.molecules, 0);
  std::vector<double> level(em.molecules, 0.0);
  const double p_stop = 1.0 / em.mean_on_frames;

  std::vector<Image> out;
  out.reserve(frames);
  for (std::size_t t = 0; t < frames; ++t) {
    const std::int64_t births = rng.poisson(em.activations_per_frame);
    for (std::int64_t b = 0; b < births; ++b) {
      const auto m = static_cast<std::size_t>(
          rng.uniform_int(0, static_cast<std::int64_t>(em.molecules) - 1));
      if (remaining[m] > 0) continue;
      int duration = 1;
      if (p_stop < 1.0) {
        duration += static_cast<int>(std::floor(std::log(1.0 - rng.uniform()) /
                                                std::log(1.0 - p_stop)));
      }
      remaining[m] = duration;
      double u = rng.uniform();
      std::size_t lvl = 0;
      while (lvl + 1 < em.level_probs.size() && u >= em.level_probs[lvl]) {
        u -= em.level_probs[lvl];
        ++lvl;
      }
      level[m] = static_cast<double>(lvl) * em.level_scale;
    }
    Image g(n, n);
    for (std::size_t m = 0; m < em.molecules; ++m) {
      if (remaining[m] > 0) {
        g[positions[m]] = level[m];
        --remaining[m];
      }
    }
    out.push_back(std::move(g));
  }
  return out;
}

Image gen_filament_pattern(const FluctuationConfig& cfg, Rng& rng) {
  cfg.validate();
  const std::size_t n = cfg.size;
  const auto count = rng.uniform_int(static_cast<std::int64_t>(cfg.filaments_lo),
                                     static_cast<std::int64_t>(cfg.filaments_hi));
  Image pattern(n, n);
  const double side = static_cast<double>(n);
  for (std::int64_t f = 0; f < count; ++f) {
    std::array<double, 4> px{}, py{};
    for (int i = 0; i < 4; ++i) {
      px[i] = rng.uniform(0.1 * side, 0.9 * side);
      py[i] = rng.uniform(0.1 * side, 0.9 * side);
    }
    Image mask(n, n);
    const int steps = static_cast<int>(8 * n);
    for (int s = 0; s <= steps; ++s) {
      const double t = static_cast<double>(s) / steps;
      const double a = (1 - t) * (1 - t) * (1 - t), b = 3 * t * (1 - t) * (1 - t),
                   c = 3 * t * t * (1 - t), d = t * t * t;
      const double x = a * px[0] + b * px[1] + c * px[2] + d * px[3];
      const double y = a * py[0] + b * py[1] + c * py[2] + d * py[3];
      const auto r0 = static_cast<std::ptrdiff_t>(std::floor(y));
      const auto c0 = static_cast<std::ptrdiff_t>(std::floor(x));
      const auto rad = static_cast<std::ptrdiff_t>(cfg.thickness);
      for (std::ptrdiff_t dr = -rad; dr <= rad; ++dr) {
        for (std::ptrdiff_t dc = -rad; dc <= rad; ++dc) {
          if (dr * dr + dc * dc > rad * rad) continue;
          const auto rr = std::clamp<std::ptrdiff_t>(r0 + dr, 0, static_cast<std::ptrdiff_t>(n) - 1);
          const auto cc = std::clamp<std::ptrdiff_t>(c0 + dc, 0, static_cast<std::ptrdiff_t>(n) - 1);
          mask(static_cast<std::size_t>(rr), static_cast<std::size_t>(cc)) = 1.0;
        }
      }
    }
    for (std::size_t i = 0; i < mask.size(); ++i) pattern[i] += cfg.intensity * mask[i];
  }
  return pattern;
}

std::vector<Image> gen_blinking_stack(const Image& pattern, const FluctuationConfig& cfg,
                                      Rng& rng) {
  cfg.validate();
  const double q = cfg.on_fraction;
  const double p_off = 1.0 / cfg.mean_on_frames;  // ON -> OFF
  const double p_on = (q > 0.0 && q < 1.0) ? q * p_off / (1.0 - q) : 0.0;  // OFF -> ON

  std::vector<std::size_t> emitters;
  for (std::size_t i = 0; i < pattern.size(); ++i) {
    if (pattern[i] != 0.0) emitters.push_back(i);
  }
  std::vector<bool> on(emitters.size());
  for (std::size_t e = 0; e < emitters.size(); ++e) {
    on[e] = q >= 1.0 ? true : (q <= 0.0 ? false : rng.uniform() < q);
  }

  std::vector<Image> stack;
  stack.reserve(cfg.frames);
  for (std::size_t t = 0; t < cfg.frames; ++t) {
    if (t > 0 && q > 0.0 && q < 1.0) {
      for (std::size_t e = 0; e < emitters.size(); ++e) {
        const double u = rng.uniform();
        on[e] = on[e] ? (u >= p_off) : (u < p_on);
      }
    }
    Image frame(pattern.rows(), pattern.cols());
    for (std::size_t e = 0; e < emitters.size(); ++e) {
      if (on[e]) frame[emitters[e]] = pattern[emitters[e]];
    }
    stack.push_back(std::move(frame));
  }
  return stack;
}

Image empirical_variance(const std::vector<Image>& stack) {
  if (stack.size() < 2) throw std::invalid_argument("empirical_variance: need at least 2 frames");
  const double T = static_cast<double>(stack.size());
  Image mean(stack.front().rows(), stack.front().cols());
  for (const Image& s : stack) mean += s;
  mean *= 1.0 / T;
  Image var(mean.rows(), mean.cols());
  for (const Image& s : stack) {
    for (std::size_t i = 0; i < var.size(); ++i) {
      const double d = s[i] - mean[i];
      var[i] += d * d;
    }
  }
  var *= 1.0 / (T - 1.0);
  return var;
}

FluctuationPair gen_fluctuation_pair(const Image& pattern, const FluctuationConfig& cfg,
                                     Rng& rng) {
  std::vector<Image> clean = gen_blinking_stack(pattern, cfg, rng);
  const ForwardModel blur(cfg.width, 1, KernelMode::Standard, pattern.rows(), pattern.cols(),
                          cfg.support);
  std::vector<Image> noisy;
  noisy.reserve(clean.size());
  for (const Image& g : clean) {
    Image f = blur.apply(g);
    for (double& v : f.values()) v += cfg.sigma * rng.normal();
    noisy.push_back(std::move(f));
  }
  return FluctuationPair{empirical_variance(noisy), empirical_variance(clean)};
}

void write_image(const std::string& path, const Image& img) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("write_image: cannot open " + path);
  const auto rows = static_cast<std::uint32_t>(img.rows());
  const auto cols = static_cast<std::uint32_t>(img.cols());
  os.write(kMagic, sizeof kMagic);
  os.write(reinterpret_cast<const char*>(&rows), sizeof rows);
  os.write(reinterpret_cast<const char*>(&cols), sizeof cols);
  os.write(reinterpret_cast<const char*>(img.values().data()),
           static_cast<std::streamsize>(img.size() * sizeof(double)));
  if (!os) throw std::runtime_error("write_image: write failed for " + path);
}

Image read_image(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("read_image: cannot open " + path);
  char magic[8];
  std::uint32_t rows = 0, cols = 0;
  is.read(magic, sizeof magic);
  is.read(reinterpret_cast<char*>(&rows), sizeof rows);
  is.read(reinterpret_cast<char*>(&cols), sizeof cols);
  if (!is || std::memcmp(magic, kMagic, sizeof kMagic) != 0) {
    throw std::runtime_error("read_image: bad header in " + path);
  }
  std::vector<double> data(static_cast<std::size_t>(rows) * cols);
  is.read(reinterpret_cast<char*>(data.data()),
          static_cast<std::streamsize>(data.size() * sizeof(double)));
  if (!is) throw std::runtime_error("read_image: truncated data in " + path);
  return Image(rows, cols, std::move(data));
}

void save_sample_set(const SampleSet& set, const std::string& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  nlohmann::ordered_json manifest;
  manifest["format"] = "unroll-sample-set-1";
  manifest["metadata"] =
      set.metadata_json.empty() ? nlohmann::ordered_json::object()
                                : nlohmann::ordered_json::parse(set.metadata_json);
  manifest["count"] = set.samples.size();
  nlohmann::ordered_json entries = nlohmann::ordered_json::array();
  for (std::size_t t = 0; t < set.samples.size(); ++t) {
    char name[32];
    std::snprintf(name, sizeof name, "%05zu", t);
    const std::string fname = std::string("f_") + name + ".bin";
    const std::string gname = std::string("g_") + name + ".bin";
    write_image((fs::path(dir) / fname).string(), set.samples[t].f);
    write_image((fs::path(dir) / gname).string(), set.samples[t].g);
    nlohmann::ordered_json e;
    e["f"] = fname;
    e["g"] = gname;
    e["f_shape"] = {set.samples[t].f.rows(), set.samples[t].f.cols()};
    e["g_shape"] = {set.samples[t].g.rows(), set.samples[t].g.cols()};
    e["seed"] = t < set.seeds.size() ? set.seeds[t] : 0;
    entries.push_back(e);
  }
  manifest["samples"] = entries;
  std::ofstream os(fs::path(dir) / "manifest.json", std::ios::trunc);
  if (!os) throw std::runtime_error("save_sample_set: cannot write manifest in " + dir);
  os << manifest.dump(2) << "\n";
}

SampleSet load_sample_set(const std::string& dir) {
  namespace fs = std::filesystem;
  const fs::path mpath = fs::path(dir) / "manifest.json";
  std::ifstream is(mpath);
  if (!is) throw std::runtime_error("load_sample_set: no manifest at " + mpath.string());
  nlohmann::ordered_json manifest;
  try {
    is >> manifest;
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error("load_sample_set: bad manifest " + mpath.string() + ": " + e.what());
  }
  SampleSet set;
  set.metadata_json = manifest.value("metadata", nlohmann::ordered_json::object()).dump();
  for (const auto& e : manifest.at("samples")) {
    Sample s{read_image((fs::path(dir) / e.at("f").get<std::string>()).string()),
             read_image((fs::path(dir) / e.at("g").get<std::string>()).string())};
    set.samples.push_back(std::move(s));
    set.seeds.push_back(e.value("seed", std::uint64_t{0}));
  }
  return set;
}

}  // namespace unroll
