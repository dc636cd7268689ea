#include "ctrlab/bench/tasks.hpp"

#include <cmath>

#include "ctrlab/mpc/ilqr.hpp"
#include "ctrlab/util/math.hpp"

namespace ctrlab::bench {

namespace {

using env::Task;

std::shared_ptr<env::Env> build_env(const json& envj) {
  const std::string name = envj["name"].get<std::string>();
  const json params = envj.value("params", json::object());
  if (name == "pendulum") {
    env::PendulumParams p;
    p.mass = params.value("mass", p.mass);
    p.length = params.value("length", p.length);
    p.gravity = params.value("gravity", p.gravity);
    p.damping = params.value("damping", p.damping);
    p.torque_limit = params.value("torque_limit", p.torque_limit);
    return std::make_shared<env::Pendulum>(p);
  }
  if (name == "cartpole") {
    env::CartpoleParams p;
    p.cart_mass = params.value("cart_mass", p.cart_mass);
    p.pole_mass = params.value("pole_mass", p.pole_mass);
    p.pole_length = params.value("pole_length", p.pole_length);
    p.gravity = params.value("gravity", p.gravity);
    p.force_limit = params.value("force_limit", p.force_limit);
    return std::make_shared<env::Cartpole>(p);
  }
  if (name == "quadrotor") {
    env::PlanarQuadrotorParams p;
    p.mass = params.value("mass", p.mass);
    p.inertia = params.value("inertia", p.inertia);
    p.arm_length = params.value("arm_length", p.arm_length);
    p.thrust_limit = params.value("thrust_limit", p.thrust_limit);
    p.gravity = params.value("gravity", p.gravity);
    return std::make_shared<env::PlanarQuadrotor>(p);
  }
  if (name == "hopper") {
    env::HopperParams p;
    p.body_mass = params.value("body_mass", p.body_mass);
    p.leg_stiffness = params.value("leg_stiffness", p.leg_stiffness);
    p.leg_damping = params.value("leg_damping", p.leg_damping);
    p.rest_length = params.value("rest_length", p.rest_length);
    p.actuation_limit = params.value("actuation_limit", p.actuation_limit);
    return std::make_shared<env::Hopper>(p);
  }
  throw ConfigError("env.name", "unknown environment " + name);
}

env::RewardConfig parse_reward(const json& j) {
  env::RewardConfig r;
  r.w_angle = j.value("w_angle", r.w_angle);
  r.w_omega = j.value("w_omega", r.w_omega);
  r.w_u = j.value("w_u", r.w_u);
  r.w_pos = j.value("w_pos", r.w_pos);
  r.progress_weight = j.value("progress_weight", r.progress_weight);
  r.pass_bonus = j.value("pass_bonus", r.pass_bonus);
  r.crash_penalty = j.value("crash_penalty", r.crash_penalty);
  r.crossing_shaping = j.value("crossing_shaping", r.crossing_shaping);
  r.floor_height = j.value("floor_height", r.floor_height);
  r.hop_height_weight = j.value("hop_height_weight", r.hop_height_weight);
  return r;
}

env::RandomizationSpec parse_randomization(const json& j) {
  env::RandomizationSpec s;
  if (j.contains("param_ranges"))
    for (const auto& [k, v] : j["param_ranges"].items())
      s.param_ranges[k] = {v[0].get<double>(), v[1].get<double>()};
  if (j.contains("push")) {
    const json& p = j["push"];
    s.push_magnitude_lo = p.value("magnitude_lo", 0.0);
    s.push_magnitude_hi = p.value("magnitude_hi", 0.0);
    s.push_start_lo = p.value("start_lo", 0);
    s.push_start_hi = p.value("start_hi", 0);
    s.push_length_lo = p.value("length_lo", 0);
    s.push_length_hi = p.value("length_hi", 0);
  }
  if (j.contains("obs_noise_std"))
    s.obs_noise_std = j["obs_noise_std"].get<std::vector<double>>();
  s.validate();
  return s;
}

// smooth upright error built from tape primitives: (cos t + 1)^2 + sin^2 t
template <class S>
S upright_error(const S& theta) {
  using ad::cos;
  using ad::sin;
  using std::cos;
  using std::sin;
  const S c = cos(theta) + 1.0;
  const S s = sin(theta);
  return c * c + s * s;
}

void make_swingup_costs(TaskSetup& ts) {
  const env::RewardConfig rc = ts.reward;
  ts.stage_cost = mpc::make_stage_cost(
      [rc](auto x, auto u, int) {
        auto e = upright_error(x[0]);
        return rc.w_angle * e + rc.w_omega * x[1] * x[1] +
               rc.w_u * u[0] * u[0];
      });
  ts.terminal_cost = mpc::make_terminal_cost(
      [rc](auto x) {
        auto e = upright_error(x[0]);
        return 10.0 * rc.w_angle * e + 1.0 * x[1] * x[1];
      });
}

void make_balance_costs(TaskSetup& ts) {
  const env::RewardConfig rc = ts.reward;
  ts.stage_cost = mpc::make_stage_cost(
      [rc](auto x, auto u, int) {
        return rc.w_angle * x[1] * x[1] + rc.w_pos * x[0] * x[0] +
               rc.w_omega * x[3] * x[3] + 0.05 * x[2] * x[2] +
               rc.w_u * u[0] * u[0];
      });
  ts.terminal_cost = mpc::make_terminal_cost(
      [rc](auto x) {
        return 10.0 * (rc.w_angle * x[1] * x[1] + rc.w_pos * x[0] * x[0] +
                       rc.w_omega * x[3] * x[3] + 0.05 * x[2] * x[2]);
      });
}

void make_hop_costs(TaskSetup& ts, const env::Hopper& hop) {
  const double z_des = hop.params().rest_body_height() + 0.2;
  ts.stage_cost = mpc::make_stage_cost(
      [z_des](auto x, auto u, int) {
        auto dz = x[0] - z_des;
        return 4.0 * dz * dz + 2e-4 * u[0] * u[0] + 0.01 * x[1] * x[1];
      });
  ts.terminal_cost = mpc::make_terminal_cost([](auto x) {
    (void)x;
    return decltype(x[0])(0.0);
  });
}

}  // namespace

TaskSetup build_task(const ExperimentConfig& cfg) {
  TaskSetup ts;
  ts.task = env::parse_task(cfg.task);
  ts.nominal = build_env(cfg.env);
  ts.integ.dt = cfg.env.value("dt", ts.nominal->default_dt());
  const std::string im = cfg.env.value("integrator", std::string("rk4"));
  ts.integ.method = im == "semi_implicit" ? ad::Method::semi_implicit_euler
                                          : ad::Method::rk4;
  ts.integ.validate();
  ts.reward = parse_reward(cfg.reward);
  ts.rand_spec = parse_randomization(cfg.randomization);

  ts.success.balance_angle = cfg.success.value("balance_angle", 0.05);
  ts.success.balance_final_steps = cfg.success.value("balance_final_steps", 100);
  ts.success.swing_angle = cfg.success.value("swing_angle", 0.1);
  ts.success.swing_omega = cfg.success.value("swing_omega", 0.5);
  ts.success.hop_flights = cfg.success.value("hop_flights", 3);

  const std::string ename = cfg.env["name"].get<std::string>();
  const int nx = ts.nominal->state_dim();

  // per-task geometry, initial conditions, costs, mpc defaults
  switch (ts.task) {
    case Task::swingup: {
      if (ename != "pendulum")
        throw ConfigError("env.name", "swingup expects the pendulum");
      ts.episode_steps = cfg.episode.value("steps", 150);
      ts.x0_nominal = VectorXd::Zero(2);
      ts.x0_ranges = {{-0.1, 0.1}, {-0.1, 0.1}};
      ts.obs_scale = {M_PI, 5.0};
      make_swingup_costs(ts);
      ts.mpc_opts.horizon = cfg.method_cfg.value("horizon", ts.episode_steps);
      ts.mpc_opts.shrink_to_episode = true;
      ts.mpc_opts.control_box = cfg.method_cfg.value("control_box", 2.0);
      break;
    }
    case Task::balance: {
      if (ename != "cartpole")
        throw ConfigError("env.name", "balance expects the cartpole");
      ts.episode_steps = cfg.episode.value("steps", 250);
      ts.x0_nominal = VectorXd::Zero(4);
      ts.x0_nominal[1] = 0.2;
      ts.x0_ranges = {{-0.05, 0.05}, {-0.2, 0.2}, {-0.05, 0.05}, {-0.1, 0.1}};
      ts.obs_scale = {1.0, 0.5, 2.0, 2.0};
      make_balance_costs(ts);
      ts.robust_param = "pole_mass";
      ts.mpc_opts.horizon = cfg.method_cfg.value("horizon", 40);
      ts.mpc_opts.shrink_to_episode = false;
      break;
    }
    case Task::gate_pass: {
      if (ename != "quadrotor")
        throw ConfigError("env.name", "gate-pass expects the quadrotor");
      ts.episode_steps = cfg.episode.value("steps", 100);
      ts.x0_nominal = VectorXd::Zero(6);
      ts.x0_nominal[0] = ts.gate_start[0];
      ts.x0_nominal[1] = ts.gate_start[1];
      ts.x0_ranges = {{ts.gate_start[0] - 0.05, ts.gate_start[0] + 0.05},
                      {ts.gate_start[1] - 0.05, ts.gate_start[1] + 0.05},
                      {0, 0}, {0, 0}, {0, 0}, {0, 0}};
      ts.obs_scale = {1.0, 1.0, 0.5, 2.0, 2.0, 2.0};
      env::GateSpec g;
      g.base = {0.0, 1.0};
      g.amplitude = cfg.episode.value("gate_amplitude", 0.4);
      g.omega = cfg.episode.value("gate_omega", 5.0);
      g.phase = 0.0;
      g.axis = {0.0, 1.0};
      g.normal = {1.0, 0.0};
      g.half_width = cfg.episode.value("gate_half_width", 0.25);
      g.validate();
      ts.gate = g;
      ts.reward.floor_height = cfg.reward.value("floor_height", 0.1);
      ts.mpc_opts.horizon = cfg.method_cfg.value("horizon", ts.episode_steps);
      ts.mpc_opts.shrink_to_episode = true;
      break;
    }
    case Task::hop: {
      if (ename != "hopper")
        throw ConfigError("env.name", "hop expects the hopper");
      const auto& hop = dynamic_cast<const env::Hopper&>(*ts.nominal);
      ts.integ.method = ad::Method::semi_implicit_euler;
      ts.episode_steps = cfg.episode.value("steps", 375);
      const double z_eq = hop.params().rest_body_height() -
                          hop.params().body_mass * 9.81 /
                              hop.params().leg_stiffness;
      ts.x0_nominal = VectorXd::Zero(4);
      ts.x0_nominal[0] = z_eq;
      ts.x0_nominal[2] = z_eq - hop.params().rest_length -
                         hop.params().ground_height;
      ts.x0_ranges = {{z_eq - 0.02, z_eq + 0.02},
                      {-0.05, 0.05},
                      {ts.x0_nominal[2] - 0.01, ts.x0_nominal[2] + 0.01},
                      {-0.05, 0.05}};
      ts.obs_scale = {0.5, 1.0, 0.2, 1.0};
      ts.robust_param = "body_mass";
      make_hop_costs(ts, hop);
      break;
    }
  }

  if (cfg.episode.contains("x0"))
    ts.x0_nominal = Eigen::Map<const VectorXd>(
        cfg.episode["x0"].get<std::vector<double>>().data(), nx);

  // MPC weights per environment (defaults chosen per task)
  const int nu = ts.nominal->control_dim();
  auto vec_of = [&](const char* key, VectorXd def) {
    if (cfg.method_cfg.contains(key)) {
      auto v = cfg.method_cfg[key].get<std::vector<double>>();
      return VectorXd(Eigen::Map<const VectorXd>(
          v.data(), static_cast<Eigen::Index>(v.size())));
    }
    return def;
  };
  switch (ts.task) {
    case Task::balance:
      ts.mpc_opts.q_diag = vec_of("q_diag", (VectorXd(4) << 2.0, 10.0, 0.2, 0.5).finished());
      ts.mpc_opts.r_diag = vec_of("r_diag", VectorXd::Constant(nu, 0.05));
      ts.mpc_opts.qn_diag = vec_of("qn_diag", (VectorXd(4) << 20.0, 100.0, 2.0, 5.0).finished());
      break;
    case Task::gate_pass:
      ts.mpc_opts.q_diag = vec_of(
          "q_diag", (VectorXd(6) << 8.0, 8.0, 2.0, 0.5, 0.5, 0.2).finished());
      ts.mpc_opts.r_diag = vec_of("r_diag", VectorXd::Constant(nu, 0.05));
      ts.mpc_opts.qn_diag = vec_of(
          "qn_diag", (VectorXd(6) << 20.0, 20.0, 5.0, 2.0, 2.0, 0.5).finished());
      break;
    default:
      ts.mpc_opts.q_diag = vec_of("q_diag", VectorXd::Zero(nx));
      ts.mpc_opts.r_diag = vec_of("r_diag", VectorXd::Constant(nu, 0.0));
      ts.mpc_opts.qn_diag = vec_of("qn_diag", VectorXd::Zero(nx));
      break;
  }

  if (cfg.method_cfg.contains("solver")) {
    const json& s = cfg.method_cfg["solver"];
    ts.mpc_opts.solver.max_outer = s.value("max_outer", ts.mpc_opts.solver.max_outer);
    ts.mpc_opts.solver.max_inner = s.value("max_inner", ts.mpc_opts.solver.max_inner);
    ts.mpc_opts.solver.cost_tol = s.value("cost_tol", ts.mpc_opts.solver.cost_tol);
    ts.mpc_opts.solver.constraint_tol =
        s.value("constraint_tol", ts.mpc_opts.solver.constraint_tol);
  }
  return ts;
}

EpisodeWorld make_episode(const TaskSetup& ts, std::uint64_t seed,
                          bool apply_randomization, const CellOverride* cell) {
  EpisodeWorld w;
  w.seed = seed;

  std::map<std::string, double> scales;
  if (apply_randomization && !ts.rand_spec.param_ranges.empty()) {
    Rng rng(Rng::stream(seed, 0x7261));
    for (const auto& [k, r] : ts.rand_spec.param_ranges)
      scales[k] = rng.uniform(r[0], r[1]);
  }
  if (cell)
    for (const auto& [k, s] : cell->param_scales) scales[k] = s;
  w.world = scales.empty() ? ts.nominal->clone()
                           : ts.nominal->with_scaled_params(scales);

  // initial state from the per-dimension ranges
  Rng x0rng(Rng::stream(seed, 0x78));
  w.x0 = ts.x0_nominal;
  for (int i = 0; i < static_cast<int>(ts.x0_ranges.size()) &&
                  i < w.x0.size();
       ++i)
    w.x0[i] = x0rng.uniform(ts.x0_ranges[static_cast<std::size_t>(i)][0],
                            ts.x0_ranges[static_cast<std::size_t>(i)][1]);

  if (ts.gate) {
    w.gate = *ts.gate;
    if (ts.randomize_gate_phase) {
      Rng grng(Rng::stream(seed, 0x67));
      w.gate.phase = grng.uniform(0.0, 2.0 * M_PI);
    }
  }

  // disturbances: either the randomization spec's push or the cell's
  if (cell && cell->push_frac > 0.0) {
    env::RandomizationSpec push_spec;
    double weight = 0.0;
    if (const auto* q =
            dynamic_cast<const env::PlanarQuadrotor*>(ts.nominal.get()))
      weight = q->params().mass * q->params().gravity;
    else if (const auto* c =
                 dynamic_cast<const env::Cartpole*>(ts.nominal.get()))
      weight = (c->params().cart_mass + c->params().pole_mass) *
               c->params().gravity;
    else if (const auto* h = dynamic_cast<const env::Hopper*>(ts.nominal.get()))
      weight = h->params().weight();
    else if (const auto* p =
                 dynamic_cast<const env::Pendulum*>(ts.nominal.get()))
      weight = p->params().mass * p->params().gravity * p->params().length;
    push_spec.push_magnitude_lo = cell->push_frac * weight;
    push_spec.push_magnitude_hi = cell->push_frac * weight;
    push_spec.push_start_lo = ts.episode_steps / 4;
    push_spec.push_start_hi = ts.episode_steps / 2;
    push_spec.push_length_lo = ts.episode_steps / 8;
    push_spec.push_length_hi = ts.episode_steps / 4;
    w.push = env::sample_push(push_spec, ts.nominal->push_dim(), seed);
  } else if (apply_randomization && ts.rand_spec.has_push()) {
    w.push = env::sample_push(ts.rand_spec, ts.nominal->push_dim(), seed);
  }

  // observation noise: cell level scales the per-dimension magnitudes
  if (cell && cell->noise_level > 0.0) {
    w.obs_noise.resize(ts.obs_scale.size());
    for (std::size_t i = 0; i < ts.obs_scale.size(); ++i)
      w.obs_noise[i] = cell->noise_level * ts.obs_scale[i];
  } else if (apply_randomization && !ts.rand_spec.obs_noise_std.empty()) {
    w.obs_noise = ts.rand_spec.obs_noise_std;
  }
  return w;
}

int policy_obs_dim(const TaskSetup& ts) {
  int d = env::encoded_obs_dim(*ts.nominal);
  if (ts.task == env::Task::gate_pass) d += 3;  // dx, dz, gate rate
  return d;
}

std::vector<double> policy_obs(const TaskSetup& ts, const EpisodeWorld& w,
                               std::span<const double> x_noisy, double t) {
  std::vector<double> obs = env::encode_obs(*ts.nominal, x_noisy);
  if (ts.task == env::Task::gate_pass) {
    const env::Vec2 gp = env::gate_position(w.gate, t);
    const env::Vec2 gv = env::gate_velocity(w.gate, t);
    obs.push_back(gp[0] - x_noisy[0]);
    obs.push_back(gp[1] - x_noisy[1]);
    obs.push_back(gv[1]);
  }
  return obs;
}

policy::MlpSpec policy_spec(const TaskSetup& ts, int hidden) {
  policy::MlpSpec spec;
  spec.sizes = {policy_obs_dim(ts), hidden, hidden,
                ts.nominal->control_dim()};
  spec.output = policy::MlpSpec::Output::tanh_scaled;
  const auto lo = ts.nominal->control_lo();
  const auto hi = ts.nominal->control_hi();
  spec.out_scale.resize(lo.size());
  spec.out_shift.resize(lo.size());
  for (std::size_t i = 0; i < lo.size(); ++i) {
    spec.out_scale[i] = 0.5 * (hi[i] - lo[i]);
    spec.out_shift[i] = 0.5 * (hi[i] + lo[i]);
  }
  return spec;
}

EpisodeTrace run_policy_episode(const TaskSetup& ts, const EpisodeWorld& w,
                                const pg::GaussianPolicy& p, std::uint64_t seed,
                                bool stochastic, pg::Episode* batch_out) {
  EpisodeTrace tr;
  Rng act_rng(Rng::stream(seed, 0xAC));
  Rng obs_rng(Rng::stream(seed, 0x0B));

  const double dt = ts.integ.dt;
  VectorXd x = w.x0;
  tr.x.push_back(x);
  const auto* hop = dynamic_cast<const env::Hopper*>(ts.nominal.get());

  for (int k = 0; k < ts.episode_steps; ++k) {
    const double t = k * dt;
    const std::vector<double> x_noisy = env::observe(
        std::span<const double>(x.data(), static_cast<std::size_t>(x.size())),
        w.obs_noise, obs_rng);
    const std::vector<double> obs = policy_obs(ts, w, x_noisy, t);

    VectorXd u(p.act_dim());
    double logp = 0.0;
    if (stochastic) {
      auto [us, lp] = pg::sample_action(p, obs, act_rng);
      u = us;
      logp = lp;
    } else {
      p.mean_action(obs,
                    std::span<double>(u.data(),
                                      static_cast<std::size_t>(u.size())));
    }

    const std::vector<double> push =
        w.push.at(k, ts.nominal->push_dim());
    VectorXd xn(x.size());
    env::step(*w.world, ts.integ,
              std::span<const double>(x.data(),
                                      static_cast<std::size_t>(x.size())),
              std::span<const double>(u.data(),
                                      static_cast<std::size_t>(u.size())),
              push,
              std::span<double>(xn.data(),
                                static_cast<std::size_t>(xn.size())));

    double r = 0.0;
    bool done = false;
    switch (ts.task) {
      case env::Task::swingup:
        r = env::swingup_reward(
            std::span<const double>(x.data(), static_cast<std::size_t>(x.size())),
            std::span<const double>(u.data(), static_cast<std::size_t>(u.size())),
            dt, ts.reward);
        break;
      case env::Task::balance:
        r = env::balance_reward(
            std::span<const double>(x.data(), static_cast<std::size_t>(x.size())),
            std::span<const double>(u.data(), static_cast<std::size_t>(u.size())),
            dt, ts.reward);
        break;
      case env::Task::hop:
        r = env::hop_reward(*hop,
                            std::span<const double>(
                                xn.data(), static_cast<std::size_t>(xn.size())),
                            dt, ts.reward);
        break;
      case env::Task::gate_pass: {
        env::GateStepOutcome out;
        r = env::gate_step_reward(w.gate, t, {x[0], x[1]}, t + dt,
                                  {xn[0], xn[1]}, ts.reward, &out);
        if (out.passed) tr.gate_passed = true;
        if (out.crashed) tr.gate_crashed = true;
        done = out.passed || out.crashed;
        break;
      }
    }

    if (batch_out) {
      pg::StepSample s;
      s.obs = obs;
      s.action.assign(u.data(), u.data() + u.size());
      s.reward = r;
      s.logp = logp;
      batch_out->steps.push_back(std::move(s));
    }
    tr.u.push_back(u);
    tr.total_reward += r;
    x = xn;
    tr.x.push_back(x);
    ++tr.steps;
    if (done) break;
  }
  if (batch_out) batch_out->total_reward = tr.total_reward;
  return tr;
}

int count_flights_above_rest(const env::Hopper& hop,
                             std::span<const VectorXd> traj) {
  const auto& p = hop.params();
  int flights = 0;
  bool in_flight = false;
  double apex = -1e9;
  int len = 0;
  for (const auto& x : traj) {
    const double zf = x[0] - p.rest_length - x[2];
    const bool airborne = zf > p.ground_height + 1e-9;
    if (airborne) {
      if (!in_flight) {
        in_flight = true;
        apex = x[0];
        len = 1;
      } else {
        apex = std::max(apex, x[0]);
        ++len;
      }
    } else if (in_flight) {
      if (len >= 2 && apex > p.rest_body_height()) ++flights;
      in_flight = false;
    }
  }
  if (in_flight && len >= 2 && apex > p.rest_body_height()) ++flights;
  return flights;
}

bool trace_success(const TaskSetup& ts, const EpisodeWorld& w,
                   const EpisodeTrace& tr) {
  (void)w;
  switch (ts.task) {
    case env::Task::swingup: {
      if (tr.x.empty()) return false;
      const VectorXd& xT = tr.x.back();
      return std::abs(wrap_angle(xT[0] - M_PI)) < ts.success.swing_angle &&
             std::abs(xT[1]) < ts.success.swing_omega;
    }
    case env::Task::balance: {
      const int n = static_cast<int>(tr.x.size());
      if (n <= ts.success.balance_final_steps) return false;
      for (int k = n - ts.success.balance_final_steps; k < n; ++k)
        if (std::abs(wrap_angle(tr.x[static_cast<std::size_t>(k)][1])) >=
            ts.success.balance_angle)
          return false;
      return true;
    }
    case env::Task::gate_pass:
      return tr.gate_passed && !tr.gate_crashed;
    case env::Task::hop: {
      const auto* hop = dynamic_cast<const env::Hopper*>(ts.nominal.get());
      return count_flights_above_rest(*hop, tr.x) >= ts.success.hop_flights;
    }
  }
  return false;
}

pg::EpisodeCallbacks make_pg_callbacks(const TaskSetup& ts, bool randomize) {
  pg::EpisodeCallbacks cb;
  // training episode
  cb.collect = [&ts, randomize](const pg::GaussianPolicy& p,
                                std::uint64_t seed) {
    const EpisodeWorld w = make_episode(ts, seed, randomize, nullptr);
    pg::Episode ep;
    run_policy_episode(ts, w, p, seed, true, &ep);
    return ep;
  };

  const bool cost_metric =
      ts.task == env::Task::swingup || ts.task == env::Task::balance;
  cb.objective_is_cost = cost_metric;

  cb.eval_objective = [&ts, cost_metric](const pg::GaussianPolicy& p,
                                         std::uint64_t seed) {
    EpisodeWorld w = make_episode(ts, seed, false, nullptr);
    if (cost_metric) w.x0 = ts.x0_nominal;  // shared fixed evaluation state
    const EpisodeTrace tr = run_policy_episode(ts, w, p, seed, false, nullptr);
    if (!cost_metric) return tr.total_reward;
    // evaluation cost through the shared task cost handles
    double cost = 0.0;
    for (int k = 0; k < tr.steps; ++k) {
      const VectorXd& x = tr.x[static_cast<std::size_t>(k)];
      const VectorXd& u = tr.u[static_cast<std::size_t>(k)];
      cost += ts.integ.dt *
              ts.stage_cost->value(
                  std::span<const double>(x.data(),
                                          static_cast<std::size_t>(x.size())),
                  std::span<const double>(u.data(),
                                          static_cast<std::size_t>(u.size())),
                  k);
    }
    const VectorXd& xT = tr.x.back();
    cost += ts.terminal_cost->value(std::span<const double>(
        xT.data(), static_cast<std::size_t>(xT.size())));
    return cost;
  };

  cb.eval_success = [&ts](const pg::GaussianPolicy& p, std::uint64_t seed) {
    EpisodeWorld w = make_episode(ts, seed, false, nullptr);
    const EpisodeTrace tr = run_policy_episode(ts, w, p, seed, false, nullptr);
    return trace_success(ts, w, tr);
  };
  return cb;
}

MpcController make_mpc_controller(const TaskSetup& ts) {
  MpcController ctrl;
  ctrl.solver = ts.mpc_opts.solver;

  auto dyn = std::make_shared<mpc::EnvDynamics>(ts.nominal, ts.integ);
  const auto lo = ts.nominal->control_lo();
  const auto hi = ts.nominal->control_hi();
  VectorXd ulo = Eigen::Map<const VectorXd>(lo.data(),
                                            static_cast<Eigen::Index>(lo.size()));
  VectorXd uhi = Eigen::Map<const VectorXd>(hi.data(),
                                            static_cast<Eigen::Index>(hi.size()));
  if (ts.mpc_opts.control_box > 0.0) {
    ulo = VectorXd::Constant(ulo.size(), -ts.mpc_opts.control_box);
    uhi = VectorXd::Constant(uhi.size(), ts.mpc_opts.control_box);
  }
  auto box = std::make_shared<mpc::ControlBoxConstraint>(ulo, uhi);

  const int steps = ts.episode_steps;
  const double dt = ts.integ.dt;

  if (ts.task == env::Task::gate_pass) {
    // frozen-gate minimum-jerk reference, tracked with shrinking horizon
    const auto& quad =
        dynamic_cast<const env::PlanarQuadrotor&>(*ts.nominal);
    auto ref = std::make_shared<mpc::ReferenceTrajectory>(mpc::plan_reference(
        quad, ts.gate_start, ts.gate, ts.gate_goal, steps * dt, dt));
    const MpcOptions opts = ts.mpc_opts;
    ctrl.keepalive = ref;
    ctrl.tmpl = [ref, dyn, box, opts, steps, dt](int k0, const VectorXd& x) {
      mpc::OcpSpec s;
      s.N = std::max(8, std::min(opts.horizon, steps - k0));
      s.dt = dt;
      s.dynamics = dyn;
      auto stage = std::make_shared<mpc::QuadraticStageCost>(opts.q_diag,
                                                             opts.r_diag);
      stage->set_reference(ref.get(), k0);
      s.stage = stage;
      auto term = std::make_shared<mpc::QuadraticTerminalCost>(
          opts.qn_diag, ref->state(k0 + s.N));
      s.terminal = term;
      s.inequalities = {box};
      s.x_init = x;
      return s;
    };
    return ctrl;
  }

  if (ts.task == env::Task::balance) {
    const MpcOptions opts = ts.mpc_opts;
    auto stage = std::make_shared<mpc::QuadraticStageCost>(opts.q_diag,
                                                           opts.r_diag);
    auto term = std::make_shared<mpc::QuadraticTerminalCost>(opts.qn_diag);
    ctrl.tmpl = [dyn, box, stage, term, opts](int, const VectorXd& x) {
      mpc::OcpSpec s;
      s.N = opts.horizon;
      s.dt = dyn->integrator().dt;
      s.dynamics = dyn;
      s.stage = stage;
      s.terminal = term;
      s.inequalities = {box};
      s.x_init = x;
      return s;
    };
    return ctrl;
  }

  if (ts.task == env::Task::swingup) {
    const MpcOptions opts = ts.mpc_opts;
    auto stage = ts.stage_cost;
    auto term = ts.terminal_cost;
    ctrl.tmpl = [dyn, box, stage, term, opts, steps, dt](int k0,
                                                         const VectorXd& x) {
      mpc::OcpSpec s;
      s.N = opts.shrink_to_episode
                ? std::max(20, std::min(opts.horizon, steps - k0))
                : opts.horizon;
      s.dt = dt;
      s.dynamics = dyn;
      s.stage = stage;
      s.terminal = term;
      s.inequalities = {box};
      s.x_init = x;
      return s;
    };
    return ctrl;
  }

  throw ConfigError("method", "mpc does not support the hop task");
}

MpcEpisodeResult run_mpc_episode(const TaskSetup& ts, const EpisodeWorld& w,
                                 const MpcController& ctrl) {
  MpcEpisodeResult out;

  mpc::RhOptions opt;
  opt.sim_steps = ts.episode_steps;
  opt.push = &w.push;
  opt.obs_noise_std = w.obs_noise;
  opt.noise_seed = w.seed;

  // gate episodes end at the pass plane or the floor
  double plane_sign = 0.0;
  if (ts.task == env::Task::gate_pass) {
    plane_sign = env::gate_plane_distance(w.gate, {w.x0[0], w.x0[1]});
    opt.stop = [&](int, const VectorXd& x) {
      const double d = env::gate_plane_distance(w.gate, {x[0], x[1]});
      return (plane_sign != 0.0 && d * plane_sign < 0.0) ||
             x[1] <= ts.reward.floor_height;
    };
  }

  // the template tracks the frozen nominal gate; re-anchor to this episode
  mpc::RhResult rh = mpc::receding_horizon(*w.world, ts.integ, w.x0, ctrl.tmpl,
                                           ctrl.solver, opt);
  out.closed_loop_cost = rh.closed_loop_cost;
  out.step_costs = rh.stage_cost;
  out.stats = rh.stats;
  out.trace.x = rh.x;
  out.trace.u = rh.u;
  out.trace.steps = rh.steps_run;

  if (ts.task == env::Task::gate_pass) {
    // score the realized trajectory against the episode's gate
    const double dt = ts.integ.dt;
    bool solver_failed = false;
    for (const auto& st : rh.stats) solver_failed |= st.fallback;
    for (std::size_t k = 0; k + 1 < rh.x.size(); ++k) {
      env::GateStepOutcome o;
      const double r = env::gate_step_reward(
          w.gate, k * dt, {rh.x[k][0], rh.x[k][1]}, (k + 1) * dt,
          {rh.x[k + 1][0], rh.x[k + 1][1]}, ts.reward, &o);
      out.trace.total_reward += r;
      out.trace.step_rewards.push_back(r);
      if (o.passed) out.trace.gate_passed = true;
      if (o.crashed) out.trace.gate_crashed = true;
      if (o.passed || o.crashed) break;
    }
    if (solver_failed && !out.trace.gate_passed) {
      out.trace.gate_crashed = true;
      out.trace.total_reward += ts.reward.crash_penalty;
    }
  }
  return out;
}

psmpc::DecisionBounds psmpc_bounds(const TaskSetup& ts) {
  psmpc::DecisionBounds b;
  const double T = ts.episode_steps * ts.integ.dt;
  b.lo = VectorXd::Constant(1, 0.3 * T);
  b.hi = VectorXd::Constant(1, 0.9 * T);
  return b;
}

psmpc::PsmpcProblem make_psmpc_problem(const TaskSetup& ts,
                                       double waypoint_weight) {
  if (ts.task != env::Task::gate_pass)
    throw ConfigError("task", "psmpc is defined for the gate task");

  psmpc::PsmpcProblem prob;
  prob.ctx_dim = 4;

  prob.sample_context = [&ts](std::uint64_t seed) {
    const EpisodeWorld w = make_episode(ts, seed, false, nullptr);
    return std::vector<double>{std::sin(w.gate.phase), std::cos(w.gate.phase),
                               w.gate.omega, w.x0[1] - w.gate.base[1]};
  };

  auto run_with_z = [&ts, waypoint_weight](const VectorXd& z,
                                           std::uint64_t seed) {
    const EpisodeWorld w = make_episode(ts, seed, false, nullptr);
    const double t_g = z[0];

    auto dyn = std::make_shared<mpc::EnvDynamics>(ts.nominal, ts.integ);
    const auto lo = ts.nominal->control_lo();
    const auto hi = ts.nominal->control_hi();
    auto box = std::make_shared<mpc::ControlBoxConstraint>(
        Eigen::Map<const VectorXd>(lo.data(),
                                   static_cast<Eigen::Index>(lo.size())),
        Eigen::Map<const VectorXd>(hi.data(),
                                   static_cast<Eigen::Index>(hi.size())));

    const MpcOptions opts = ts.mpc_opts;
    const int steps = ts.episode_steps;
    const double dt = ts.integ.dt;
    const env::Vec2 goal = ts.gate_goal;
    const env::GateSpec gate = w.gate;  // this episode's phase
    const env::Vec2 target = env::gate_position(gate, t_g);

    // hover feedforward through a one-point reference (position weight on
    // the loitering altitude only)
    const auto& quad = dynamic_cast<const env::PlanarQuadrotor&>(*ts.nominal);
    auto hover_ref = std::make_shared<mpc::ReferenceTrajectory>();
    hover_ref->dt = dt;
    hover_ref->states = {VectorXd::Zero(6)};
    hover_ref->states[0][1] = goal[1];
    hover_ref->controls = {
        VectorXd::Constant(2, quad.params().hover_thrust())};

    mpc::OcpTemplate tmpl = [=](int k0, const VectorXd& x) {
      mpc::OcpSpec s;
      s.N = std::max(8, std::min(opts.horizon, steps - k0));
      s.dt = dt;
      s.dynamics = dyn;
      VectorXd q = VectorXd::Zero(6);
      q << 0.0, 0.5, 2.0, 0.3, 0.3, 0.2;
      auto base = std::make_shared<mpc::QuadraticStageCost>(q, opts.r_diag);
      base->set_reference(hover_ref.get(), 0);

      const int k_star = static_cast<int>(std::llround(t_g / dt)) - k0;
      std::vector<std::shared_ptr<const mpc::StageCost>> parts = {base};
      if (k_star >= 0 && k_star < s.N)
        parts.push_back(std::make_shared<mpc::WaypointCost>(
            k_star, std::vector<int>{0, 1},
            (VectorXd(2) << target[0], target[1]).finished(),
            waypoint_weight));
      s.stage = std::make_shared<mpc::CompositeStageCost>(parts);
      auto term = std::make_shared<mpc::QuadraticTerminalCost>(opts.qn_diag);
      VectorXd xg = VectorXd::Zero(6);
      xg[0] = goal[0];
      xg[1] = goal[1];
      term->set_goal(xg);
      s.terminal = term;
      s.inequalities = {box};
      s.x_init = x;
      return s;
    };

    mpc::RhOptions opt;
    opt.sim_steps = steps;
    opt.push = &w.push;
    opt.obs_noise_std = w.obs_noise;
    opt.noise_seed = w.seed;
    const double plane_sign =
        env::gate_plane_distance(gate, {w.x0[0], w.x0[1]});
    opt.stop = [&gate, plane_sign, &ts](int, const VectorXd& x) {
      const double d = env::gate_plane_distance(gate, {x[0], x[1]});
      return (plane_sign != 0.0 && d * plane_sign < 0.0) ||
             x[1] <= ts.reward.floor_height;
    };

    mpc::SolverConfig scfg = ts.mpc_opts.solver;
    mpc::RhResult rh =
        mpc::receding_horizon(*w.world, ts.integ, w.x0, tmpl, scfg, opt);

    EpisodeTrace tr;
    tr.x = rh.x;
    tr.steps = rh.steps_run;
    bool solver_failed = false;
    for (const auto& st : rh.stats) solver_failed |= st.fallback;
    for (std::size_t k = 0; k + 1 < rh.x.size(); ++k) {
      env::GateStepOutcome o;
      tr.total_reward += env::gate_step_reward(
          gate, k * ts.integ.dt, {rh.x[k][0], rh.x[k][1]},
          (k + 1) * ts.integ.dt, {rh.x[k + 1][0], rh.x[k + 1][1]}, ts.reward,
          &o);
      if (o.passed) tr.gate_passed = true;
      if (o.crashed) tr.gate_crashed = true;
      if (o.passed || o.crashed) break;
    }
    if (solver_failed && !tr.gate_passed) {
      tr.gate_crashed = true;
      tr.total_reward += ts.reward.crash_penalty;
    }
    return tr;
  };

  prob.episode_reward = [run_with_z](const VectorXd& z, std::uint64_t seed) {
    return run_with_z(z, seed).total_reward;
  };
  prob.episode_success = [run_with_z](const VectorXd& z, std::uint64_t seed) {
    const EpisodeTrace tr = run_with_z(z, seed);
    return tr.gate_passed && !tr.gate_crashed;
  };
  return prob;
}

bptt::ContactDecoupling task_coupling(const TaskSetup& ts) {
  const auto* hop = dynamic_cast<const env::Hopper*>(ts.nominal.get());
  if (hop == nullptr)
    throw ConfigError("env.name", "contact decoupling needs the hopper");
  return bptt::ContactDecoupling::from(hop->params());
}

}  // namespace ctrlab::bench
