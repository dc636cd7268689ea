#include "ctrlab/mpc/receding.hpp"

#include "ctrlab/env/step.hpp"

namespace ctrlab::mpc {

RhResult receding_horizon(const env::Env& world,
                          const ad::IntegratorConfig& world_integ,
                          const VectorXd& x0, const OcpTemplate& tmpl,
                          const SolverConfig& cfg, const RhOptions& opt) {
  RhResult res;
  res.x.push_back(x0);

  Rng noise_rng(Rng::stream(opt.noise_seed, 0x6f62));

  // the k0 = 0 instance scores the realized closed loop
  OcpSpec scorer = tmpl(0, x0);

  Solution prev;
  bool have_prev = false;

  VectorXd x_sim = x0;
  for (int k = 0; k < opt.sim_steps; ++k) {
    if (opt.stop && opt.stop(k, x_sim)) {
      res.stopped_early = true;
      break;
    }

    VectorXd x_meas = x_sim;
    if (!opt.obs_noise_std.empty()) {
      const std::vector<double> noisy = env::observe(
          std::span<const double>(x_sim.data(),
                                  static_cast<std::size_t>(x_sim.size())),
          opt.obs_noise_std, noise_rng);
      x_meas = Eigen::Map<const VectorXd>(noisy.data(),
                                          static_cast<Eigen::Index>(noisy.size()));
    }

    OcpSpec ocp = tmpl(k, x_meas);

    // warm start: shift the previous plan one step, repeat the last control
    Solution warm;
    if (have_prev && !prev.u.empty()) {
      warm.u.assign(prev.u.begin() + 1, prev.u.end());
      if (warm.u.empty()) warm.u.push_back(prev.u.back());
      while (static_cast<int>(warm.u.size()) < ocp.N)
        warm.u.push_back(warm.u.back());
      warm.u.resize(static_cast<std::size_t>(ocp.N));
    }

    RhStepStat st;
    st.step = k;
    Solution sol = solve(ocp, cfg, have_prev ? &warm : nullptr);
    st.iters = sol.iterations;
    st.predicted_cost = sol.objective;
    st.violation = sol.max_violation;
    st.solved = sol.status != SolveStatus::diverged && !sol.u.empty() &&
                sol.u[0].allFinite();

    VectorXd u_apply;
    if (st.solved) {
      u_apply = sol.u[0];
      prev = std::move(sol);
      have_prev = true;
    } else if (have_prev && !warm.u.empty()) {
      // failed solve: fall back to the shifted previous plan
      st.fallback = true;
      u_apply = warm.u[0];
      prev.u = warm.u;
    } else {
      st.fallback = true;
      u_apply = VectorXd::Zero(ocp.nu());
    }
    res.stats.push_back(st);

    const std::vector<double> push =
        opt.push ? opt.push->at(k, world.push_dim())
                 : std::vector<double>(static_cast<std::size_t>(world.push_dim()),
                                       0.0);
    VectorXd x_next(world.state_dim());
    env::step(world, world_integ,
              std::span<const double>(x_sim.data(),
                                      static_cast<std::size_t>(x_sim.size())),
              std::span<const double>(u_apply.data(),
                                      static_cast<std::size_t>(u_apply.size())),
              push,
              std::span<double>(x_next.data(),
                                static_cast<std::size_t>(x_next.size())));

    const double lk =
        scorer.dt *
        scorer.stage->value(
            std::span<const double>(x_sim.data(),
                                    static_cast<std::size_t>(x_sim.size())),
            std::span<const double>(u_apply.data(),
                                    static_cast<std::size_t>(u_apply.size())),
            k);
    res.stage_cost.push_back(lk);
    res.closed_loop_cost += lk;
    res.u.push_back(u_apply);
    res.x.push_back(x_next);
    x_sim = x_next;
    ++res.steps_run;
  }

  if (res.steps_run == opt.sim_steps) {
    const VectorXd& xN = res.x.back();
    res.closed_loop_cost += scorer.terminal->value(std::span<const double>(
        xN.data(), static_cast<std::size_t>(xN.size())));
  }
  return res;
}

}  // namespace ctrlab::mpc
