#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "commands.hpp"
#include "config.hpp"
#include "unroll/outer_trainer.hpp"

namespace {

struct Common {
  std::string config;
  std::string preset;
  std::optional<std::int64_t> seed;
  std::optional<std::int64_t> threads;
  std::string loss;
  std::string fidelity;
  std::vector<std::string> sets;
};

void add_common(CLI::App* app, Common& c, cli::Paths& paths) {
  app->add_option("--config", c.config, "flat key = value config file");
  app->add_option("--preset", c.preset, "experiment preset")
      ->check(CLI::IsMember(cli::preset_names()));
  app->add_option("--seed", c.seed, "base seed");
  app->add_option("--threads", c.threads, "worker cap")->check(CLI::PositiveNumber);
  app->add_option("--loss", c.loss, "upper-level loss")->check(CLI::IsMember({"l1", "l2"}));
  app->add_option("--fidelity", c.fidelity, "data term")->check(CLI::IsMember({"l2", "kl"}));
  app->add_option("--set", c.sets, "override one config key (key=value)");
  app->add_option("--out", paths.out, "output directory");
  app->add_flag("--force", paths.force, "replace a non-empty output directory");
}

// defaults <- checkpoint config <- preset <- config file <- --set <- flags
cli::Config resolve(const Common& c, const std::string& checkpoint, bool checkgrad) {
  cli::Config cfg;
  if (!checkpoint.empty()) cfg.merge(unroll::checkpoint_load(checkpoint).config);
  if (!c.config.empty()) {
    cfg.load_file(c.config, c.preset);
  } else {
    cfg.apply_preset(c.preset);
  }
  for (const std::string& kv : c.sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw cli::ConfigError("--set expects key=value, got '" + kv + "'");
    cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (c.seed) cfg.set("seed", std::to_string(*c.seed));
  if (c.threads) cfg.set("threads", std::to_string(*c.threads));
  if (!c.loss.empty()) cfg.set("model.loss", c.loss);
  if (!c.fidelity.empty()) cfg.set("model.fidelity", c.fidelity);
  if (checkgrad && (!c.loss.empty() || !c.fidelity.empty())) cfg.set("check.all", "false");
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Learned unrolled sparse super-resolution"};
  app.require_subcommand(1);

  Common common;
  cli::Paths paths;
  bool binarize = false;
  bool pgm = false;
  std::string resume;
  std::vector<std::string> params;

  CLI::App* sim = app.add_subcommand("simulate", "generate train/ and test/ sample sets");
  add_common(sim, common, paths);

  CLI::App* train = app.add_subcommand("train", "learn the hyperparameters");
  add_common(train, common, paths);
  train->add_option("--data", paths.data, "dataset directory")->required();
  train->add_option("--resume", resume, "continue from this checkpoint");

  CLI::App* recon = app.add_subcommand("reconstruct", "apply a trained solver to a dataset");
  add_common(recon, common, paths);
  recon->add_option("--checkpoint", paths.checkpoint, "trained checkpoint")->required();
  recon->add_option("--data", paths.data, "dataset directory (test/ is used)")->required();
  recon->add_flag("--binarize", binarize, "also write binarized reconstructions");
  recon->add_flag("--pgm", pgm, "also write 8-bit PGM previews");

  CLI::App* eval = app.add_subcommand("evaluate", "Jaccard / PSNR report");
  add_common(eval, common, paths);
  eval->add_option("--recon", paths.recon, "reconstruction directory")->required();
  eval->add_option("--data,--truth", paths.data, "ground-truth dataset directory")->required();

  CLI::App* check = app.add_subcommand("checkgrad", "compare gradients with finite differences");
  add_common(check, common, paths);
  check->add_option("--param", params, "restrict to these parameters (rho, alpha, alpha[k], delta, width)");

  CLI11_PARSE(app, argc, argv);

  cli::Config cfg;
  try {
    if (check->parsed() && !params.empty()) {
      std::string joined;
      for (const std::string& p : params) joined += (joined.empty() ? "" : ",") + p;
      common.sets.push_back("check.params=" + joined);
    }
    paths.checkpoint = recon->parsed() ? paths.checkpoint : resume;
    cfg = resolve(common, paths.checkpoint, check->parsed());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return cli::kUsage;
  }

  if (sim->parsed()) return cli::cmd_simulate(cfg, paths);
  if (train->parsed()) return cli::cmd_train(cfg, paths, !resume.empty());
  if (recon->parsed()) return cli::cmd_reconstruct(cfg, paths, binarize, pgm);
  if (eval->parsed()) return cli::cmd_evaluate(cfg, paths);
  return cli::cmd_checkgrad(cfg, paths);
}
