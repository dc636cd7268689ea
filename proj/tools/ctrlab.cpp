#include <CLI11.hpp>
#include <iostream>

#include "ctrlab/bench/harness.hpp"

using namespace ctrlab;

int main(int argc, char** argv) {
  CLI::App app{"ctrlab: control synthesis laboratory"};
  app.require_subcommand(1);

  std::string config_path, out_dir, method_override, artifact_dir;
  std::vector<std::uint64_t> seed_override;

  auto* run = app.add_subcommand("run", "run an experiment from a config");
  run->add_option("--config", config_path, "config file")->required();
  run->add_option("--seed", seed_override, "override the seed list");
  run->add_option("--out", out_dir, "override the output directory");
  run->add_option("--method", method_override, "override the method");

  auto* eval = app.add_subcommand(
      "eval", "evaluate a controller over the disturbance grid");
  eval->add_option("--config", config_path, "config file")->required();
  eval->add_option("--artifact", artifact_dir,
                   "run directory with trained policies");
  eval->add_option("--seed", seed_override, "override the seed list");
  eval->add_option("--out", out_dir, "override the output directory");

  std::vector<std::string> compare_dirs_arg;
  double threshold = 0.0;
  bool have_threshold = false;
  std::string direction = "below";
  auto* cmp = app.add_subcommand("compare", "summarize result directories");
  cmp->add_option("dirs", compare_dirs_arg, "result directories")->required();
  auto* thr_opt = cmp->add_option("--threshold", threshold,
                                  "objective threshold for env-steps metric");
  cmp->add_option("--direction", direction,
                  "crossing direction: below or above");

  std::string gc_env = "pendulum";
  int gc_steps = 20, gc_trials = 100;
  std::uint64_t gc_seed = 0;
  bool gc_decoupled = false;
  auto* gc = app.add_subcommand("gradcheck",
                                "verify rollout gradients against central "
                                "differences");
  gc->add_option("--env", gc_env, "environment name");
  gc->add_option("--steps", gc_steps, "rollout length");
  gc->add_option("--trials", gc_trials, "number of random trials");
  gc->add_option("--seed", gc_seed, "rng seed");
  gc->add_flag("--decoupled", gc_decoupled,
               "allow the hopper via its smooth contact proxy");

  CLI11_PARSE(app, argc, argv);

  try {
    if (run->parsed() || eval->parsed()) {
      bench::ExperimentConfig cfg = bench::load_config(config_path);
      if (!seed_override.empty()) cfg.seeds = seed_override;
      if (!out_dir.empty()) cfg.out_dir = out_dir;
      if (!method_override.empty()) {
        // re-validate the method block pairing
        nlohmann::json doc = cfg.raw;
        doc["method"] = method_override;
        cfg = bench::parse_config(doc);
        if (!seed_override.empty()) cfg.seeds = seed_override;
        if (!out_dir.empty()) cfg.out_dir = out_dir;
      }
      if (run->parsed()) return bench::run_experiment(cfg, std::cout);
      const std::filesystem::path artifact =
          artifact_dir.empty()
              ? std::filesystem::path(bench::resolve_out_dir(cfg))
              : std::filesystem::path(artifact_dir);
      return bench::eval_command(cfg, artifact, std::cout);
    }
    if (cmp->parsed()) {
      have_threshold = thr_opt->count() > 0;
      std::vector<std::filesystem::path> dirs(compare_dirs_arg.begin(),
                                              compare_dirs_arg.end());
      bench::compare_dirs(dirs,
                          have_threshold ? std::optional<double>(threshold)
                                         : std::nullopt,
                          direction != "above", std::cout);
      return bench::kExitOk;
    }
    if (gc->parsed())
      return bench::gradcheck_command(gc_env, gc_steps, gc_trials, gc_seed,
                                      gc_decoupled, std::cout);
  } catch (const bench::ConfigError& e) {
    std::cerr << "config error at '" << e.key_path << "': " << e.what()
              << "\n";
    return bench::kExitConfigError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return bench::kExitInvariantBreach;
  }
  return bench::kExitOk;
}
