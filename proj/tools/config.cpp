#include "config.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "unroll/grid_ops.hpp"
#include "unroll/outer_trainer.hpp"

namespace cli {

namespace {

using Pairs = std::vector<std::pair<std::string, std::string>>;

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

const KeyDef* find_key(const std::string& name) {
  for (const KeyDef& k : key_table()) {
    if (k.name == name) return &k;
  }
  return nullptr;
}

std::string canonical(const KeyDef& def, const std::string& raw_in) {
  const std::string raw = trim(raw_in);
  auto bad = [&](const std::string& what) {
    return ConfigError("key '" + def.name + "': " + what + " (got '" + raw + "')");
  };
  switch (def.type) {
    case KeyType::Int: {
      std::int64_t v = 0;
      const auto res = std::from_chars(raw.data(), raw.data() + raw.size(), v);
      if (res.ec != std::errc() || res.ptr != raw.data() + raw.size()) throw bad("expected an integer");
      return std::to_string(v);
    }
    case KeyType::Real:
      try {
        return unroll::format_double(unroll::parse_double(raw));
      } catch (const std::exception&) {
        throw bad("expected a real number");
      }
    case KeyType::Bool:
      if (raw == "true" || raw == "1" || raw == "yes" || raw == "on") return "true";
      if (raw == "false" || raw == "0" || raw == "no" || raw == "off") return "false";
      throw bad("expected true or false");
    case KeyType::Text:
      if (!def.choices.empty()) {
        std::stringstream ss(def.choices);
        std::string c;
        while (std::getline(ss, c, '|')) {
          if (c == raw) return raw;
        }
        throw bad("expected one of " + def.choices);
      }
      return raw;
  }
  return raw;
}

std::string real_text(double x) { return unroll::format_double(x); }

// Shared by the exp2 family: 258.21 nm FWHM at 25 nm fine pixels.
std::string isbi_width() { return real_text(unroll::width_from_fwhm(258.21, 25.0)); }

Pairs preset_pairs(const std::string& name) {
  const Pairs exp1 = {
      {"data.kind", "frames"},       {"data.coarse", "64"},         {"data.factor", "4"},
      {"data.emitters_lo", "75"},    {"data.emitters_hi", "150"},   {"data.intensity_lo", "100"},
      {"data.intensity_hi", "255"},  {"data.psf_width", "2.5"},     {"data.noise", "gaussian"},
      {"data.sigma", "0.15"},        {"data.train_count", "10"},    {"data.test_count", "25"},
      {"model.K", "190"},            {"model.rho0", "0.1"},         {"model.alpha0", "0.1"},
      {"model.delta0", "50"},        {"train.alpha_cap_stable", "1.9"},
  };
  const Pairs exp1_desk = {
      {"data.coarse", "32"},         {"data.emitters_lo", "19"},   {"data.emitters_hi", "38"},
      {"data.train_count", "5"},     {"data.test_count", "10"},    {"model.K", "100"},
      {"model.delta0", "20"},
  };
  const Pairs exp2 = {
      {"data.kind", "frames"},       {"data.coarse", "64"},        {"data.factor", "4"},
      {"data.emitters_lo", "180"},   {"data.emitters_hi", "220"},  {"data.levels", "85,170,255"},
      {"data.psf_width", isbi_width()},                             {"data.train_count", "20"},
      {"data.test_count", "20"},     {"model.K", "300"},
  };
  const Pairs exp2_desk = {
      {"data.coarse", "32"},         {"data.emitters_lo", "45"},   {"data.emitters_hi", "55"},
      {"data.train_count", "5"},     {"data.test_count", "10"},    {"model.K", "100"},
  };
  const Pairs gauss = {{"data.noise", "gaussian"}, {"data.sigma", "0.15"}, {"model.fidelity", "l2"},
                       {"model.rho0", "4"},        {"model.alpha0", "0.1"}, {"model.delta0", "5"},
                       {"train.alpha_cap_stable", "1.9"}};
  const Pairs plow = {{"data.noise", "poisson"},   {"data.background", "0.1"},
                      {"model.fidelity", "kl"},    {"model.rho0", "50"},
                      {"model.alpha0", "0.0005"},  {"model.delta0", "0.05"}};
  const Pairs phigh = {{"data.noise", "poisson"}, {"data.background", "12.75"},
                       {"model.fidelity", "kl"},  {"model.rho0", "0.5"},
                       {"model.alpha0", "0.5"},   {"model.delta0", "1"}};
  const Pairs exp3 = {
      {"data.kind", "emission"},     {"data.coarse", "64"},        {"data.factor", "4"},
      {"data.psf_width", isbi_width()},                             {"data.molecules", "8731"},
      {"data.activations", "5"},     {"data.mean_on", "4"},        {"data.level_scale", "1"},
      {"data.noise", "poisson"},     {"data.background", "10"},    {"data.train_count", "20"},
      {"data.test_count", "20"},     {"model.fidelity", "kl"},     {"model.K", "300"},
      {"model.rho0", "0.1"},         {"model.alpha0", "0.5"},      {"model.delta0", "0.1"},
      {"model.c0", "0.01"},          {"train.gt_peak", "4"},
  };
  const Pairs exp3_desk = {
      {"data.coarse", "32"},         {"data.molecules", "2000"},   {"data.activations", "1.25"},
      {"data.train_count", "5"},     {"data.test_count", "10"},    {"model.K", "100"},
  };
  const Pairs exp4 = {
      {"data.kind", "fluctuation"},  {"data.coarse", "64"},        {"data.factor", "1"},
      {"data.psf_width", "3"},       {"data.sigma", "3"},          {"data.frames", "1000"},
      {"data.on_fraction", "0.5"},   {"data.mean_on", "2"},        {"data.filaments_lo", "3"},
      {"data.filaments_hi", "5"},    {"data.filament_intensity", "32"},
      {"data.thickness", "2"},       {"data.train_count", "20"},   {"data.test_count", "10"},
      {"model.loss", "l1"},          {"model.K", "300"},           {"model.width0", "5"},
      {"model.rho0", "1e-05"},       {"model.alpha0", "1000"},     {"model.delta0", "25"},
      {"model.fixed_peak", "255"},   {"train.learn_width", "true"},
  };
  const Pairs exp4_desk = {
      {"data.frames", "500"},        {"data.train_count", "5"},    {"data.test_count", "5"},
      {"model.K", "100"},
  };

  auto cat = [](Pairs a, const Pairs& b) {
    a.insert(a.end(), b.begin(), b.end());
    return a;
  };
  if (name == "exp1") return exp1;
  if (name == "exp1-desk") return cat(exp1, exp1_desk);
  if (name == "exp2-gauss") return cat(exp2, gauss);
  if (name == "exp2-gauss-desk") return cat(cat(exp2, gauss), exp2_desk);
  if (name == "exp2-plow") return cat(exp2, plow);
  if (name == "exp2-plow-desk") return cat(cat(exp2, plow), exp2_desk);
  if (name == "exp2-phigh") return cat(exp2, phigh);
  if (name == "exp2-phigh-desk") return cat(cat(exp2, phigh), exp2_desk);
  if (name == "exp3") return exp3;
  if (name == "exp3-desk") return cat(exp3, exp3_desk);
  if (name == "exp4") return exp4;
  if (name == "exp4-desk") return cat(exp4, exp4_desk);
  throw ConfigError("unknown preset '" + name + "'");
}

}  // namespace

const std::vector<KeyDef>& key_table() {
  using T = KeyType;
  static const std::vector<KeyDef> table = {
      {"preset", T::Text, "", "", "preset the values were started from"},
      {"seed", T::Int, "1", "", "base seed of every random stream"},
      {"threads", T::Int, "1", "", "worker cap for dataset sums and reconstruction"},

      {"data.kind", T::Text, "frames", "frames|emission|fluctuation", "generator"},
      {"data.coarse", T::Int, "32", "", "coarse side m (fluctuation: image side)"},
      {"data.factor", T::Int, "4", "", "super-resolution factor L"},
      {"data.emitters_lo", T::Int, "19", "", "emitters per frame, lower bound"},
      {"data.emitters_hi", T::Int, "38", "", "emitters per frame, upper bound"},
      {"data.intensity_lo", T::Real, "100", "", "emitter intensity range"},
      {"data.intensity_hi", T::Real, "255", "", "emitter intensity range"},
      {"data.levels", T::Text, "", "", "comma list of discrete intensities (overrides the range)"},
      {"data.psf_width", T::Real, "2.5", "", "true PSF standard deviation in fine pixels"},
      {"data.psf_support", T::Int, "0", "", "kernel half-width, 0 = automatic"},
      {"data.noise", T::Text, "gaussian", "gaussian|poisson", "noise model"},
      {"data.sigma", T::Real, "0.15", "", "Gaussian noise standard deviation"},
      {"data.background", T::Real, "0", "", "Poisson background b"},
      {"data.train_count", T::Int, "5", "", "training samples"},
      {"data.test_count", T::Int, "10", "", "test samples"},
      {"data.molecules", T::Int, "400", "", "emission: candidate positions"},
      {"data.activations", T::Real, "5", "", "emission: mean activations per frame"},
      {"data.mean_on", T::Real, "4", "", "mean ON dwell in frames"},
      {"data.level_probs", T::Text, "0.1,0.25,0.3,0.25,0.1", "", "emission: P(level = i)"},
      {"data.level_scale", T::Real, "1", "", "emission: intensity of level i is i * scale"},
      {"data.frames", T::Int, "500", "", "fluctuation: frames per pattern"},
      {"data.on_fraction", T::Real, "0.5", "", "fluctuation: stationary ON probability"},
      {"data.filaments_lo", T::Int, "3", "", "fluctuation: filaments per pattern"},
      {"data.filaments_hi", T::Int, "5", "", "fluctuation: filaments per pattern"},
      {"data.filament_intensity", T::Real, "32", "", "fluctuation: emitter brightness"},
      {"data.thickness", T::Int, "2", "", "fluctuation: filament stamp radius"},

      {"model.loss", T::Text, "l2", "l1|l2", "upper-level loss"},
      {"model.fidelity", T::Text, "l2", "l2|kl", "data term"},
      {"model.fidelity_bg", T::Real, "-1", "", "data-term offset, negative = automatic"},
      {"model.K", T::Int, "100", "", "unrolled iterations"},
      {"model.eps_proj", T::Real, "0.0001", "", "smoothing of the projection"},
      {"model.width0", T::Real, "-1", "", "model PSF width, negative = data.psf_width"},
      {"model.rho0", T::Real, "0.1", "", "initial rho"},
      {"model.alpha0", T::Real, "0.1", "", "initial step size (all iterations)"},
      {"model.delta0", T::Real, "20", "", "initial binarization threshold"},
      {"model.c0", T::Real, "20", "", "offset of the binarization half level above delta"},
      {"model.bin_eps", T::Real, "0.0001", "", "binarization corner smoothing"},
      {"model.huber_gamma", T::Real, "0.01", "", "Huber knee"},
      {"model.fixed_peak", T::Real, "-1", "", "binarization level, negative = max(u)"},

      {"train.outer_iters", T::Int, "50", "", "outer iterations"},
      {"train.learn_rho", T::Bool, "true", "", ""},
      {"train.learn_alpha", T::Bool, "true", "", ""},
      {"train.learn_delta", T::Bool, "true", "", "only used with the l1 loss"},
      {"train.learn_width", T::Bool, "false", "", ""},
      {"train.scaling", T::Text, "secant", "identity|magnitude|block|secant", "descent scaling"},
      {"train.step", T::Real, "0.5", "", "Armijo initial step"},
      {"train.shrink", T::Real, "0.5", "", "Armijo backtracking factor"},
      {"train.armijo_c", T::Real, "0.0001", "", "sufficient decrease constant"},
      {"train.backtracks", T::Int, "30", "", "Armijo backtracking limit"},
      {"train.reuse_step", T::Bool, "true", "", "start each search from twice the last step"},
      {"train.rel_tol", T::Real, "1e-08", "", "relative loss change stopping test"},
      {"train.gt_peak", T::Real, "255", "", "level of the binarized ground truth"},
      {"train.alpha_cap", T::Real, "10000", "", "upper bound of every step size"},
      {"train.alpha_cap_stable", T::Real, "0", "", "if > 0, also cap alpha at this / ||A||^2"},
      {"train.rho_cap_kl", T::Real, "10", "", "rho bound factor for the kl data term"},
      {"train.width_cap", T::Real, "10", "", "upper bound of the PSF width"},

      {"eval.tolerances", T::Text, "0,2,4", "", "matching radii in fine pixels"},
      {"eval.jaccard_source", T::Text, "auto", "auto|binarized|raw", "image scored by Jaccard"},
      {"eval.threshold", T::Real, "0", "", "points are pixels strictly above this"},
      {"eval.psnr_peak", T::Real, "255", "", ""},

      {"check.all", T::Bool, "true", "", "check both losses and both data terms"},
      {"check.fine", T::Int, "12", "", ""},
      {"check.factor", T::Int, "2", "", ""},
      {"check.K", T::Int, "5", "", ""},
      {"check.width", T::Real, "1.2", "", ""},
      {"check.emitters", T::Int, "6", "", ""},
      {"check.step_scale", T::Real, "1e-06", "", ""},
      {"check.tolerance", T::Real, "0.0001", "", ""},
      {"check.params", T::Text, "", "", "comma list of parameters, empty = all"},
  };
  return table;
}

std::vector<std::string> preset_names() {
  return {"exp1",           "exp1-desk",       "exp2-gauss", "exp2-gauss-desk",
          "exp2-plow",      "exp2-plow-desk",  "exp2-phigh", "exp2-phigh-desk",
          "exp3",           "exp3-desk",       "exp4",       "exp4-desk"};
}

Config::Config() {
  for (const KeyDef& k : key_table()) values_[k.name] = canonical(k, k.fallback);
}

void Config::set(const std::string& key, const std::string& raw) {
  const KeyDef* def = find_key(key);
  if (def == nullptr) throw ConfigError("unknown config key '" + key + "'");
  values_[key] = canonical(*def, raw);
}

void Config::apply_preset(const std::string& name) {
  if (name.empty()) return;
  for (const auto& [k, v] : preset_pairs(name)) set(k, v);
  values_["preset"] = name;
}

std::vector<std::pair<std::string, std::string>> read_pairs(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open config file " + path);
  Pairs out;
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(path + ":" + std::to_string(lineno) + ": expected 'key = value'");
    }
    out.emplace_back(trim(t.substr(0, eq)), trim(t.substr(eq + 1)));
  }
  return out;
}

void Config::load_file(const std::string& path, const std::string& preset_override) {
  const Pairs pairs = read_pairs(path);
  std::string preset = preset_override;
  if (preset.empty()) {
    for (const auto& [k, v] : pairs) {
      if (k == "preset") preset = v;
    }
  }
  apply_preset(preset);
  for (const auto& [k, v] : pairs) {
    if (k == "preset") continue;
    try {
      set(k, v);
    } catch (const ConfigError& e) {
      throw ConfigError(path + ": " + e.what());
    }
  }
}

void Config::merge(const std::map<std::string, std::string>& values) {
  for (const auto& [k, v] : values) {
    if (k == "preset") {
      values_[k] = v;
    } else {
      set(k, v);
    }
  }
}

const std::string& Config::raw(const std::string& key) const {
  const auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError("unknown config key '" + key + "'");
  return it->second;
}

std::int64_t Config::integer(const std::string& key) const { return std::stoll(raw(key)); }

std::size_t Config::count(const std::string& key) const {
  const std::int64_t v = integer(key);
  if (v < 0) throw ConfigError("key '" + key + "' must be non-negative");
  return static_cast<std::size_t>(v);
}

double Config::real(const std::string& key) const { return unroll::parse_double(raw(key)); }
bool Config::flag(const std::string& key) const { return raw(key) == "true"; }
const std::string& Config::text(const std::string& key) const { return raw(key); }

std::vector<double> Config::reals(const std::string& key) const {
  std::vector<double> out;
  std::stringstream ss(raw(key));
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (trim(item).empty()) continue;
    try {
      out.push_back(unroll::parse_double(item));
    } catch (const std::exception&) {
      throw ConfigError("key '" + key + "': bad list entry '" + item + "'");
    }
  }
  return out;
}

std::string Config::dump() const {
  std::ostringstream os;
  for (const auto& [k, v] : values_) os << k << " = " << v << "\n";
  return os.str();
}

void Config::write(const std::string& path) const {
  std::ofstream os(path, std::ios::trunc);
  os << dump();
  if (!os) throw ConfigError("cannot write " + path);
}

}  // namespace cli
