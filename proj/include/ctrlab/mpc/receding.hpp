#pragma once

#include <functional>
#include <optional>

#include "ctrlab/env/randomize.hpp"
#include "ctrlab/mpc/ilqr.hpp"
#include "ctrlab/util/rng.hpp"

namespace ctrlab::mpc {

// Builds the OCP anchored at simulation step k0 from the measured state.
// Horizons may shrink toward an episode end; time-varying costs are expected
// to index absolute time as offset + k internally.
using OcpTemplate =
    std::function<OcpSpec(int k0, const VectorXd& x_measured)>;

struct RhStepStat {
  int step = 0;
  bool solved = false;
  bool fallback = false;
  int iters = 0;
  double predicted_cost = 0.0;
  double violation = 0.0;
};

struct RhResult {
  std::vector<VectorXd> x;  // realized states, sim_steps+1
  std::vector<VectorXd> u;  // applied controls
  std::vector<double> stage_cost;  // dt*l per step, from the k0=0 cost
  double closed_loop_cost = 0.0;   // sum of stage costs + terminal
  std::vector<RhStepStat> stats;
  int steps_run = 0;
  bool stopped_early = false;
};

struct RhOptions {
  int sim_steps = 0;
  // world-side disturbances; the controller's model never sees them
  const env::DisturbanceSchedule* push = nullptr;
  std::vector<double> obs_noise_std;  // controller-side measurement noise
  std::uint64_t noise_seed = 0;
  // optional early-exit predicate on the realized state
  std::function<bool(int step, const VectorXd& x)> stop;
};

// Shift-and-re-solve loop: each step solves the re-anchored OCP warm-started
// from the shifted previous plan and applies exactly u_0* to the world.
RhResult receding_horizon(const env::Env& world,
                          const ad::IntegratorConfig& world_integ,
                          const VectorXd& x0, const OcpTemplate& tmpl,
                          const SolverConfig& cfg, const RhOptions& opt);

}  // namespace ctrlab::mpc
