#pragma once

#include <filesystem>
#include <iosfwd>

#include "ctrlab/bench/metrics.hpp"
#include "ctrlab/bench/tasks.hpp"

namespace ctrlab::bench {

inline constexpr const char* kCodeVersion = "0.1.0";

// exit codes shared with the CLI
inline constexpr int kExitOk = 0;
inline constexpr int kExitInvariantBreach = 1;
inline constexpr int kExitConfigError = 2;
inline constexpr int kExitAllSeedsDiverged = 3;

// --- run -------------------------------------------------------------------

// one metrics file per seed plus a manifest; returns an exit code
int run_experiment(const ExperimentConfig& cfg, std::ostream& log);

json read_manifest(const std::filesystem::path& run_dir);

// --- trained artifacts -------------------------------------------------------

void save_gaussian_policy(const std::filesystem::path& path,
                          const pg::GaussianPolicy& p);
pg::GaussianPolicy load_gaussian_policy(const std::filesystem::path& path);

void save_deterministic_policy(const std::filesystem::path& path,
                               const policy::MlpSpec& spec,
                               const Eigen::VectorXd& theta);
std::pair<policy::MlpSpec, Eigen::VectorXd> load_deterministic_policy(
    const std::filesystem::path& path);

void save_psmpc_policy(const std::filesystem::path& path,
                       const psmpc::HighLevelPolicy& p);
psmpc::HighLevelPolicy load_psmpc_policy(const std::filesystem::path& path);

// --- robustness evaluation ---------------------------------------------------

struct RobustnessGrid {
  std::vector<double> param_scales = {0.7, 1.0, 1.3};
  std::vector<double> push_fracs = {0.0, 0.1, 0.2};
  std::vector<double> noise_levels = {0.0, 0.025, 0.05};
  int episodes = 10;
};
RobustnessGrid parse_grid(const json& evalj);

struct RobustnessCellResult {
  std::uint64_t seed = 0;
  std::string cell_id;
  double param_scale = 1.0, push_frac = 0.0, noise_level = 0.0;
  int successes = 0;
  int episodes = 0;
  double rate() const { return episodes ? double(successes) / episodes : 0; }
};

using CellEpisodeFn =
    std::function<bool(std::uint64_t ep_seed, const CellOverride&)>;

std::vector<RobustnessCellResult> eval_robustness(
    const TaskSetup& ts, const CellEpisodeFn& episode,
    const RobustnessGrid& grid, std::span<const std::uint64_t> seeds);

void write_robustness_csv(const std::filesystem::path& path,
                          std::span<const RobustnessCellResult> cells);
std::vector<RobustnessCellResult> read_robustness_csv(
    const std::filesystem::path& path);

// cell episode closures for the two controller families
CellEpisodeFn make_mpc_cell_episode(const TaskSetup& ts,
                                    std::shared_ptr<MpcController> ctrl);
CellEpisodeFn make_policy_cell_episode(const TaskSetup& ts,
                                       std::shared_ptr<pg::GaussianPolicy> p);

int eval_command(const ExperimentConfig& cfg,
                 const std::filesystem::path& artifact_dir, std::ostream& log);

// --- compare -----------------------------------------------------------------

struct CompareRow {
  std::string dir;
  std::string method;
  std::string task;
  double median_final_objective = 0.0;
  double median_steps_to_threshold = -1.0;  // -1: never crossed
  double final_success_rate = 0.0;
};

// env-steps at the first record crossing the threshold, -1 if never
double steps_to_threshold(const std::vector<MetricsRecord>& curve,
                          double threshold, bool below);

std::vector<CompareRow> compare_dirs(
    const std::vector<std::filesystem::path>& dirs,
    std::optional<double> threshold, bool below, std::ostream& log);

// --- gradcheck ----------------------------------------------------------------

int gradcheck_command(const std::string& env_name, int steps, int trials,
                      std::uint64_t seed, bool decoupled, std::ostream& log);

}  // namespace ctrlab::bench
