#pragma once

#include <map>
#include <optional>

#include "ctrlab/bench/config.hpp"
#include "ctrlab/bptt/bptt.hpp"
#include "ctrlab/env/cartpole.hpp"
#include "ctrlab/env/gate.hpp"
#include "ctrlab/env/hopper.hpp"
#include "ctrlab/env/pendulum.hpp"
#include "ctrlab/env/quadrotor.hpp"
#include "ctrlab/env/randomize.hpp"
#include "ctrlab/env/reward.hpp"
#include "ctrlab/mpc/minjerk.hpp"
#include "ctrlab/mpc/receding.hpp"
#include "ctrlab/pg/reinforce.hpp"
#include "ctrlab/psmpc/psmpc.hpp"

namespace ctrlab::bench {

using Eigen::VectorXd;

struct SuccessSpec {
  double balance_angle = 0.05;   // rad, final window
  int balance_final_steps = 100;
  double swing_angle = 0.1;      // rad at the horizon
  double swing_omega = 0.5;      // rad/s at the horizon
  int hop_flights = 3;           // flight phases with apex above rest
};

struct MpcOptions {
  int horizon = 40;
  bool shrink_to_episode = false;  // horizon covers the remaining episode
  mpc::SolverConfig solver;
  VectorXd q_diag, r_diag, qn_diag;  // task-dependent defaults
  double control_box = 0.0;          // 0: use env limits
};

// Everything an experiment needs, built once from the config.
struct TaskSetup {
  env::Task task = env::Task::swingup;
  std::shared_ptr<env::Env> nominal;
  ad::IntegratorConfig integ;
  env::RewardConfig reward;
  env::RandomizationSpec rand_spec;
  SuccessSpec success;

  int episode_steps = 0;
  VectorXd x0_nominal;
  std::vector<std::array<double, 2>> x0_ranges;

  std::optional<env::GateSpec> gate;  // phase re-sampled per episode
  bool randomize_gate_phase = true;
  env::Vec2 gate_start = {-1.2, 1.0};
  env::Vec2 gate_goal = {1.0, 1.0};

  std::string robust_param = "mass";
  std::vector<double> obs_scale;  // per state dim, for noise levels

  // shared cost handles (swingup / balance / hop); the evaluation metric
  std::shared_ptr<mpc::StageCost> stage_cost;
  std::shared_ptr<mpc::TerminalCost> terminal_cost;

  MpcOptions mpc_opts;
};

TaskSetup build_task(const ExperimentConfig& cfg);

// one robustness-grid cell
struct CellOverride {
  std::map<std::string, double> param_scales;
  double push_frac = 0.0;    // x nominal weight
  double noise_level = 0.0;  // x obs_scale
  std::string id = "nominal";
};

// concrete world for one episode: randomized params, gate phase, push, noise
struct EpisodeWorld {
  std::unique_ptr<env::Env> world;
  env::GateSpec gate;
  env::DisturbanceSchedule push;
  std::vector<double> obs_noise;
  VectorXd x0;
  std::uint64_t seed = 0;
};

EpisodeWorld make_episode(const TaskSetup& ts, std::uint64_t seed,
                          bool apply_randomization, const CellOverride* cell);

// --- policy-side plumbing -------------------------------------------------

int policy_obs_dim(const TaskSetup& ts);
std::vector<double> policy_obs(const TaskSetup& ts, const EpisodeWorld& w,
                               std::span<const double> x_noisy, double t);
policy::MlpSpec policy_spec(const TaskSetup& ts, int hidden);

struct EpisodeTrace {
  std::vector<VectorXd> x;
  std::vector<VectorXd> u;
  double total_reward = 0.0;
  bool gate_passed = false;
  bool gate_crashed = false;
  int steps = 0;
  std::vector<double> step_rewards;  // gate task: per-step rewards
};

// closed-loop episode under a Gaussian policy (stochastic or mean actions)
EpisodeTrace run_policy_episode(const TaskSetup& ts, const EpisodeWorld& w,
                                const pg::GaussianPolicy& p, std::uint64_t seed,
                                bool stochastic, pg::Episode* batch_out);

bool trace_success(const TaskSetup& ts, const EpisodeWorld& w,
                   const EpisodeTrace& tr);

// hop detection: flight phases whose apex clears the rest height
int count_flights_above_rest(const env::Hopper& hop,
                             std::span<const VectorXd> traj);

// --- per-method closures ---------------------------------------------------

pg::EpisodeCallbacks make_pg_callbacks(const TaskSetup& ts, bool randomize);

// frozen-reference (or regulation) tracking MPC; keepalive owns references
struct MpcController {
  mpc::OcpTemplate tmpl;
  mpc::SolverConfig solver;
  std::shared_ptr<void> keepalive;
};
MpcController make_mpc_controller(const TaskSetup& ts);

// closed-loop MPC episode on a concrete world
struct MpcEpisodeResult {
  EpisodeTrace trace;
  double closed_loop_cost = 0.0;
  std::vector<double> step_costs;  // per-step dt*l along the closed loop
  std::vector<mpc::RhStepStat> stats;
};
MpcEpisodeResult run_mpc_episode(const TaskSetup& ts, const EpisodeWorld& w,
                                 const MpcController& ctrl);

// PS-MPC problem for the gate task (decision variable: traversal time)
psmpc::PsmpcProblem make_psmpc_problem(const TaskSetup& ts,
                                       double waypoint_weight = 60.0);
psmpc::DecisionBounds psmpc_bounds(const TaskSetup& ts);

// BPTT configuration helpers
bptt::ContactDecoupling task_coupling(const TaskSetup& ts);

}  // namespace ctrlab::bench
