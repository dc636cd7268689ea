#include "ctrlab/bptt/bptt.hpp"

#include <chrono>
#include <limits>

#include "ctrlab/env/randomize.hpp"

namespace ctrlab::bptt {

namespace {

env::Hopper soft_model(const env::Hopper& hop, const ContactDecoupling& c) {
  env::HopperParams p = hop.params();
  p.contact_stiffness = c.stiffness;
  p.contact_damping = c.damping;
  p.contact_sharpness = c.sharpness;
  return env::Hopper(p);
}

}  // namespace

void decoupled_step(const env::Hopper& hop, std::span<const Ad> x,
                    std::span<const Ad> u, const ContactDecoupling& c,
                    double dt, std::span<Ad> out) {
  c.validate();
  // hard values
  std::array<double, 4> xv{}, hard{};
  for (int i = 0; i < 4; ++i) xv[static_cast<std::size_t>(i)] = x[i].v;
  const std::array<double, 1> uv = {u[0].v};
  env::hopper_hard_step(hop, xv, uv, 0.0, dt, hard);

  // soft gradient path at the same inputs
  const env::Hopper soft = soft_model(hop, c);
  const auto pairs = soft.pos_vel_pairs();
  std::array<Ad, 4> xs;
  auto dyn = [&](std::span<const Ad> xi, std::span<const Ad> ui,
                 std::span<Ad> dxi) { soft.deriv(xi, ui, {}, dxi); };
  ad::semi_implicit_step<Ad>(dyn, x, u, dt, pairs, xs);

  for (int i = 0; i < 4; ++i)
    out[i] = ad::replace_value(xs[static_cast<std::size_t>(i)],
                               hard[static_cast<std::size_t>(i)]);
}

void decoupled_step(const env::Hopper& hop, std::span<const double> x,
                    std::span<const double> u, const ContactDecoupling& c,
                    double dt, std::span<double> out) {
  c.validate();
  env::hopper_hard_step(hop, x, u, 0.0, dt, out);
}

namespace {

template <class S>
void policy_env_step(const MlpSpec& pi, std::span<const S> theta,
                     const env::Env& e, const ad::IntegratorConfig& integ,
                     const ContactDecoupling* coupling,
                     std::span<const S> x, std::span<S> u_out,
                     std::span<S> x_next) {
  thread_local std::vector<S> obs;
  env::encode_obs_t<S>(e, x, obs);
  policy::mlp_forward<S, S>(pi, theta, std::span<const S>(obs), u_out);
  if (coupling != nullptr) {
    const auto* hop = dynamic_cast<const env::Hopper*>(&e);
    if (hop == nullptr)
      throw std::invalid_argument("contact decoupling needs the hopper");
    decoupled_step(*hop, x, std::span<const S>(u_out.data(), u_out.size()),
                   *coupling, integ.dt, x_next);
  } else {
    env::step(e, integ, x, std::span<const S>(u_out.data(), u_out.size()), {},
              x_next);
  }
}

}  // namespace

RolloutGrad rollout_and_grad(const MlpSpec& pi, const VectorXd& theta,
                             const env::Env& e,
                             const ad::IntegratorConfig& integ,
                             const mpc::StageCost& stage,
                             const mpc::TerminalCost& terminal,
                             std::span<const VectorXd> x0_batch, int horizon,
                             int truncation, double grad_clip,
                             const ContactDecoupling* coupling) {
  pi.validate(static_cast<int>(theta.size()));
  if (x0_batch.empty())
    throw std::invalid_argument("rollout_and_grad: empty batch");
  const int nx = e.state_dim();
  const int nu = e.control_dim();
  const int B = static_cast<int>(x0_batch.size());

  RolloutGrad out;
  out.grad = VectorXd::Zero(theta.size());

  for (int b = 0; b < B; ++b) {
    ad::Tape tape;
    std::vector<Ad> th;
    th.reserve(static_cast<std::size_t>(theta.size()));
    for (Eigen::Index i = 0; i < theta.size(); ++i)
      th.push_back(ad::make_input(tape, theta[i]));

    std::vector<Ad> x(static_cast<std::size_t>(nx));
    for (int i = 0; i < nx; ++i) x[static_cast<std::size_t>(i)] = Ad(x0_batch[b][i]);

    std::vector<Ad> u(static_cast<std::size_t>(nu));
    std::vector<Ad> xn(static_cast<std::size_t>(nx));
    Ad cost(0.0);
    int step_k = 0;
    try {
      for (int k = 0; k < horizon; ++k) {
        step_k = k;
        if (k > 0 && truncation > 0 && k % truncation == 0)
          for (auto& xi : x) xi = ad::detach(xi);
        policy_env_step<Ad>(pi, th, e, integ, coupling, x, u, xn);
        cost += integ.dt * stage.value(std::span<const Ad>(x),
                                       std::span<const Ad>(u), k);
        x = xn;
      }
      cost += terminal.value(std::span<const Ad>(x));
    } catch (const ad::AdError& err) {
      throw ad::NonFiniteError(std::string("rollout aborted at step ") +
                                   std::to_string(step_k) +
                                   " of batch member " + std::to_string(b) +
                                   ": " + err.what(),
                               step_k);
    }

    out.cost += cost.v;
    if (!cost.is_const()) {
      const std::vector<double> g = tape.gradient(cost.idx);
      for (std::size_t i = 0; i < g.size(); ++i)
        out.grad[static_cast<Eigen::Index>(i)] += g[i];
    }
  }

  out.cost /= B;
  out.grad /= static_cast<double>(B);
  out.grad = policy::clip_norm(std::move(out.grad), grad_clip);
  return out;
}

double rollout_cost(const MlpSpec& pi, const VectorXd& theta,
                    const env::Env& e, const ad::IntegratorConfig& integ,
                    const mpc::StageCost& stage,
                    const mpc::TerminalCost& terminal, const VectorXd& x0,
                    int horizon, const ContactDecoupling* coupling,
                    std::vector<VectorXd>* traj) {
  const int nx = e.state_dim();
  const int nu = e.control_dim();
  std::vector<double> x(x0.data(), x0.data() + x0.size());
  std::vector<double> u(static_cast<std::size_t>(nu));
  std::vector<double> xn(static_cast<std::size_t>(nx));
  double cost = 0.0;
  if (traj) {
    traj->clear();
    traj->push_back(x0);
  }
  std::span<const double> th(theta.data(),
                             static_cast<std::size_t>(theta.size()));
  for (int k = 0; k < horizon; ++k) {
    policy_env_step<double>(pi, th, e, integ, coupling, x, u, xn);
    cost += integ.dt * stage.value(std::span<const double>(x),
                                   std::span<const double>(u), k);
    x = xn;
    if (traj)
      traj->push_back(Eigen::Map<const VectorXd>(x.data(),
                                                 static_cast<Eigen::Index>(nx)));
  }
  cost += terminal.value(std::span<const double>(x));
  return cost;
}

BpttTrainResult train(const MlpSpec& pi, VectorXd theta0, const env::Env& e,
                      const ad::IntegratorConfig& integ,
                      const mpc::StageCost& stage,
                      const mpc::TerminalCost& terminal,
                      const BpttConfig& cfg,
                      const ContactDecoupling* coupling,
                      const SuccessProbe& success) {
  cfg.validate(e.state_dim());
  pi.validate(static_cast<int>(theta0.size()));

  BpttTrainResult res;
  res.best_theta = theta0;
  res.best_cost = std::numeric_limits<double>::infinity();

  VectorXd theta = std::move(theta0);
  VectorXd last_good = theta;
  policy::Adam opt(static_cast<int>(theta.size()), cfg.learning_rate);

  const int nx = e.state_dim();
  auto sample_x0 = [&](std::uint64_t s) {
    Rng rng(s);
    VectorXd x0(nx);
    for (int i = 0; i < nx; ++i)
      x0[i] = rng.uniform(cfg.x0_ranges[static_cast<std::size_t>(i)][0],
                          cfg.x0_ranges[static_cast<std::size_t>(i)][1]);
    return x0;
  };

  // fixed deterministic evaluation set
  std::vector<VectorXd> eval_x0;
  for (int b = 0; b < cfg.eval_batch; ++b)
    eval_x0.push_back(
        sample_x0(Rng::stream(cfg.seed, 0xE0, static_cast<std::uint64_t>(b))));

  const auto t0 = std::chrono::steady_clock::now();
  std::int64_t env_steps = 0;

  for (int it = 0; it < cfg.iterations; ++it) {
    std::vector<VectorXd> x0s;
    for (int b = 0; b < cfg.batch; ++b)
      x0s.push_back(sample_x0(Rng::stream(cfg.seed, 0xB0,
                                          static_cast<std::uint64_t>(it),
                                          static_cast<std::uint64_t>(b))));
    bool ok = true;
    try {
      RolloutGrad rg = rollout_and_grad(pi, theta, e, integ, stage, terminal,
                                        x0s, cfg.horizon, cfg.truncation,
                                        cfg.grad_clip, coupling);
      if (!std::isfinite(rg.cost) || !rg.grad.allFinite()) ok = false;
      if (ok) {
        env_steps += static_cast<std::int64_t>(cfg.batch) * cfg.horizon;
        opt.step(theta, rg.grad);
        if (!theta.allFinite()) ok = false;
      }
    } catch (const ad::AdError&) {
      ok = false;
    }

    if (!ok) {
      // recover from the last finite iterate at half the learning rate
      ++res.lr_halvings;
      if (res.lr_halvings > 3) {
        res.aborted = true;
        break;
      }
      theta = last_good;
      opt = policy::Adam(static_cast<int>(theta.size()),
                         opt.lr() * 0.5);
      continue;
    }
    last_good = theta;

    double eval = 0.0;
    for (const auto& x0 : eval_x0)
      eval += rollout_cost(pi, theta, e, integ, stage, terminal, x0,
                           cfg.horizon, coupling);
    eval /= std::max<std::size_t>(1, eval_x0.size());

    if (std::isfinite(eval) && eval < res.best_cost) {
      res.best_cost = eval;
      res.best_theta = theta;
    }

    TrainPoint pt;
    pt.iteration = it;
    pt.env_steps = env_steps;
    pt.wall_time_s =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
            .count();
    pt.objective = eval;
    pt.success = success ? success(theta) : false;
    res.curve.push_back(pt);
  }
  return res;
}

}  // namespace ctrlab::bptt
