#include "ctrlab/psmpc/psmpc.hpp"

#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>

#include "ctrlab/ad/record.hpp"

namespace ctrlab::psmpc {

VectorXd HighLevelPolicy::mean(std::span<const double> ctx) const {
  if (!contextual) return mu;
  VectorXd m(z_dim());
  policy::mlp_forward<double, double>(
      net, {w.data(), static_cast<std::size_t>(w.size())}, ctx,
      std::span<double>(m.data(), static_cast<std::size_t>(m.size())));
  return m;
}

double HighLevelPolicy::std_of(int i) const {
  const double width = bounds.hi[i] - bounds.lo[i];
  return std::clamp(std::exp(log_std[i]), 1e-3, width);
}

VectorXd HighLevelPolicy::sample(std::span<const double> ctx, Rng& rng) const {
  VectorXd z = mean(ctx);
  for (int i = 0; i < z_dim(); ++i) z[i] += std_of(i) * rng.normal();
  return bounds.clamp(z);
}

HighLevelPolicy HighLevelPolicy::context_free(DecisionBounds b, VectorXd mu0,
                                              VectorXd log_std0) {
  HighLevelPolicy p;
  p.contextual = false;
  p.bounds = std::move(b);
  p.mu = std::move(mu0);
  p.log_std = std::move(log_std0);
  return p;
}

HighLevelPolicy HighLevelPolicy::with_context(DecisionBounds b, int ctx_dim,
                                              int hidden, VectorXd log_std0,
                                              std::uint64_t seed) {
  HighLevelPolicy p;
  p.contextual = true;
  p.bounds = std::move(b);
  p.net.sizes = {ctx_dim, hidden, hidden, p.bounds.dim()};
  p.net.output = MlpSpec::Output::linear;
  p.w = policy::mlp_init(p.net, seed);
  p.mu = 0.5 * (p.bounds.lo + p.bounds.hi);
  p.log_std = std::move(log_std0);
  return p;
}

mpc::OcpSpec embed_decision(const mpc::OcpSpec& base, const VectorXd& z,
                            const env::GateSpec& gate, DecisionMode mode,
                            double waypoint_weight) {
  mpc::OcpSpec out = base;
  if (mode == DecisionMode::cost_tuning) {
    const auto* q =
        dynamic_cast<const mpc::QuadraticStageCost*>(base.stage.get());
    if (q == nullptr)
      throw std::invalid_argument(
          "cost tuning requires a quadratic stage cost");
    auto scaled = std::make_shared<mpc::QuadraticStageCost>(*q);
    scaled->set_scales(std::exp(z[0]), std::exp(z.size() > 1 ? z[1] : 0.0));
    out.stage = std::move(scaled);
    return out;
  }

  const double t_g = z[0];
  const int k_star = static_cast<int>(std::llround(t_g / base.dt));
  if (k_star < 0 || k_star > base.N)
    throw std::out_of_range("traversal step outside the horizon");
  const env::Vec2 target = env::gate_position(gate, t_g);
  auto waypoint = std::make_shared<mpc::WaypointCost>(
      k_star, std::vector<int>{0, 1},
      (VectorXd(2) << target[0], target[1]).finished(), waypoint_weight);
  out.stage = std::make_shared<mpc::CompositeStageCost>(
      std::vector<std::shared_ptr<const mpc::StageCost>>{base.stage,
                                                         waypoint});
  return out;
}

std::vector<double> exp_reward_weights(std::span<const WeightedSample> samples,
                                       double beta) {
  double rmax = -std::numeric_limits<double>::infinity();
  for (const auto& s : samples) rmax = std::max(rmax, s.reward);
  std::vector<double> w(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i)
    w[i] = std::exp(beta * (samples[i].reward - rmax));
  return w;
}

bool reward_weighted_update(std::span<const WeightedSample> samples,
                            double beta, double std_floor,
                            HighLevelPolicy& policy) {
  if (samples.size() < 2)
    throw std::invalid_argument("reward_weighted_update: need >= 2 samples");
  const std::vector<double> w = exp_reward_weights(samples, beta);
  const double wsum = std::accumulate(w.begin(), w.end(), 0.0);
  const int zd = policy.z_dim();

  bool degenerate = false;
  if (!policy.contextual) {
    VectorXd mu_new = VectorXd::Zero(zd);
    for (std::size_t i = 0; i < samples.size(); ++i)
      mu_new += w[i] * samples[i].z;
    mu_new /= wsum;
    VectorXd var = VectorXd::Zero(zd);
    for (std::size_t i = 0; i < samples.size(); ++i) {
      const VectorXd d = samples[i].z - mu_new;
      var += w[i] * d.cwiseProduct(d);
    }
    var /= wsum;
    policy.mu = mu_new;
    for (int j = 0; j < zd; ++j) {
      const double floored = std::max(std_floor * std_floor, var[j]);
      if (var[j] < std_floor * std_floor) degenerate = true;
      policy.log_std[j] = 0.5 * std::log(floored);
    }
    return degenerate;
  }

  // contextual: weighted gradient steps on the mean-squared residual
  using ad::Ad;
  policy::Adam opt(static_cast<int>(policy.w.size()), 0.05);
  std::vector<Ad> zbuf(static_cast<std::size_t>(zd));
  for (int epoch = 0; epoch < 50; ++epoch) {
    ad::Tape tape;
    std::vector<Ad> tw;
    tw.reserve(static_cast<std::size_t>(policy.w.size()));
    for (Eigen::Index i = 0; i < policy.w.size(); ++i)
      tw.push_back(ad::make_input(tape, policy.w[i]));
    Ad loss(0.0);
    for (std::size_t i = 0; i < samples.size(); ++i) {
      policy::mlp_forward<Ad, double>(policy.net, std::span<const Ad>(tw),
                                      samples[i].context, std::span<Ad>(zbuf));
      for (int j = 0; j < zd; ++j) {
        const Ad d = zbuf[static_cast<std::size_t>(j)] - samples[i].z[j];
        loss += (w[i] / wsum) * d * d;
      }
    }
    if (loss.is_const()) break;
    const std::vector<double> g = tape.gradient(loss.idx);
    VectorXd grad = Eigen::Map<const VectorXd>(
        g.data(), static_cast<Eigen::Index>(g.size()));
    opt.step(policy.w, grad);
  }

  // residual-based std with the floor
  VectorXd var = VectorXd::Zero(zd);
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const VectorXd m = policy.mean(samples[i].context);
    const VectorXd d = samples[i].z - m;
    var += (w[i] / wsum) * d.cwiseProduct(d);
  }
  for (int j = 0; j < zd; ++j) {
    const double floored = std::max(std_floor * std_floor, var[j]);
    if (var[j] < std_floor * std_floor) degenerate = true;
    policy.log_std[j] = 0.5 * std::log(floored);
  }
  return degenerate;
}

PsmpcTrainResult train(HighLevelPolicy init, const PsmpcProblem& problem,
                       const PsmpcConfig& cfg) {
  cfg.validate();
  PsmpcTrainResult res;
  res.policy = std::move(init);
  res.best_mean_reward = -std::numeric_limits<double>::infinity();
  HighLevelPolicy best = res.policy;

  const auto t0 = std::chrono::steady_clock::now();
  std::int64_t env_steps = 0;

  for (int it = 0; it < cfg.iterations; ++it) {
    std::vector<WeightedSample> samples(
        static_cast<std::size_t>(cfg.samples_per_iter));
    double mean_reward = 0.0;
    for (int i = 0; i < cfg.samples_per_iter; ++i) {
      const std::uint64_t es = Rng::stream(cfg.seed, 0x50,
                                           static_cast<std::uint64_t>(it),
                                           static_cast<std::uint64_t>(i));
      WeightedSample& s = samples[static_cast<std::size_t>(i)];
      s.context = problem.sample_context(es);
      Rng zrng(Rng::stream(es, 0x5A));
      s.z = res.policy.sample(s.context, zrng);
      s.reward = problem.episode_reward(s.z, es);
      mean_reward += s.reward;
    }
    mean_reward /= cfg.samples_per_iter;
    env_steps += cfg.samples_per_iter;

    reward_weighted_update(samples, cfg.beta, cfg.std_floor, res.policy);

    if (mean_reward > res.best_mean_reward) {
      res.best_mean_reward = mean_reward;
      best = res.policy;
    }

    TrainPoint pt;
    pt.iteration = it;
    pt.env_steps = env_steps;
    pt.wall_time_s =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
            .count();
    pt.objective = mean_reward;

    // deterministic evaluation with the policy mean
    if (problem.episode_success) {
      int succ = 0;
      for (int e = 0; e < cfg.eval_episodes; ++e) {
        const std::uint64_t es = Rng::stream(cfg.seed, 0x5E,
                                             static_cast<std::uint64_t>(e));
        const auto ctx = problem.sample_context(es);
        if (problem.episode_success(res.policy.select(ctx), es)) ++succ;
      }
      pt.success = succ * 2 >= cfg.eval_episodes;
    }
    res.curve.push_back(pt);
  }

  res.policy = best;
  return res;
}

}  // namespace ctrlab::psmpc
