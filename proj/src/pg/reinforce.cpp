#include "ctrlab/pg/reinforce.hpp"

#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>

#include "ctrlab/ad/record.hpp"

namespace ctrlab::pg {

namespace {

constexpr double kHalfLog2Pi = 0.9189385332046727;  // 0.5*log(2*pi)

using ad::Ad;

// log-density and entropy terms of the clamped-std Gaussian on the tape
Ad taped_logp(const GaussianPolicy& p, std::span<const Ad> theta,
              std::span<const double> obs, std::span<const double> action,
              std::vector<Ad>& mean_buf) {
  using ad::exp;
  using ad::log;
  using ad::max;
  using ad::min;
  const int na = p.act_dim();
  const int np = p.mean.param_count();
  mean_buf.assign(static_cast<std::size_t>(na), Ad(0.0));
  policy::mlp_forward<Ad, double>(
      p.mean, theta.subspan(0, static_cast<std::size_t>(np)), obs,
      std::span<Ad>(mean_buf));
  Ad acc(0.0);
  for (int a = 0; a < na; ++a) {
    const Ad sigma = min(max(exp(theta[static_cast<std::size_t>(np + a)]),
                             GaussianPolicy::kStdLo),
                         GaussianPolicy::kStdHi);
    const Ad d = (action[static_cast<std::size_t>(a)] -
                  mean_buf[static_cast<std::size_t>(a)]) /
                 sigma;
    acc += -log(sigma) - kHalfLog2Pi - 0.5 * d * d;
  }
  return acc;
}

Ad taped_entropy(const GaussianPolicy& p, std::span<const Ad> theta) {
  using ad::exp;
  using ad::log;
  using ad::max;
  using ad::min;
  const int np = p.mean.param_count();
  Ad acc(0.0);
  for (int a = 0; a < p.act_dim(); ++a) {
    const Ad sigma = min(max(exp(theta[static_cast<std::size_t>(np + a)]),
                             GaussianPolicy::kStdLo),
                         GaussianPolicy::kStdHi);
    acc += log(sigma) + 0.5 + kHalfLog2Pi;
  }
  return acc;
}

}  // namespace

std::pair<VectorXd, double> sample_action(const GaussianPolicy& p,
                                          std::span<const double> obs,
                                          Rng& rng) {
  const int na = p.act_dim();
  VectorXd mean(na);
  p.mean_action(obs, std::span<double>(mean.data(),
                                       static_cast<std::size_t>(na)));
  if (!mean.allFinite())
    throw ad::NonFiniteError("policy mean is non-finite", -1);
  VectorXd u(na);
  double logp = 0.0;
  for (int a = 0; a < na; ++a) {
    const double sigma = p.std_of(a);
    const double eps = rng.normal();
    u[a] = mean[a] + sigma * eps;
    logp += -std::log(sigma) - kHalfLog2Pi - 0.5 * eps * eps;
  }
  return {u, logp};
}

double log_prob(const GaussianPolicy& p, std::span<const double> obs,
                std::span<const double> action) {
  const int na = p.act_dim();
  VectorXd mean(na);
  p.mean_action(obs, std::span<double>(mean.data(),
                                       static_cast<std::size_t>(na)));
  double logp = 0.0;
  for (int a = 0; a < na; ++a) {
    const double sigma = p.std_of(a);
    const double d = (action[static_cast<std::size_t>(a)] - mean[a]) / sigma;
    logp += -std::log(sigma) - kHalfLog2Pi - 0.5 * d * d;
  }
  return logp;
}

std::vector<std::vector<double>> returns_to_go(const RolloutBatch& batch,
                                               double gamma) {
  if (batch.episodes.empty())
    throw std::invalid_argument("returns_to_go: empty batch");
  std::vector<std::vector<double>> g(batch.episodes.size());
  for (std::size_t e = 0; e < batch.episodes.size(); ++e) {
    const auto& steps = batch.episodes[e].steps;
    g[e].assign(steps.size(), 0.0);
    double acc = 0.0;
    for (int k = static_cast<int>(steps.size()) - 1; k >= 0; --k) {
      acc = steps[static_cast<std::size_t>(k)].reward + gamma * acc;
      g[e][static_cast<std::size_t>(k)] = acc;
    }
  }
  return g;
}

double ValueNet::predict(std::span<const double> obs) const {
  double out = 0.0;
  policy::mlp_forward<double, double>(
      spec, {w.data(), static_cast<std::size_t>(w.size())}, obs,
      std::span<double>(&out, 1));
  return out;
}

ValueNet ValueNet::make(int obs_dim, int hidden, std::uint64_t seed) {
  ValueNet v;
  v.spec.sizes = {obs_dim, hidden, 1};
  v.spec.output = MlpSpec::Output::linear;
  v.w = policy::mlp_init(v.spec, seed);
  return v;
}

void ValueNet::fit(const RolloutBatch& batch,
                   const std::vector<std::vector<double>>& returns, int epochs,
                   double lr) {
  policy::Adam opt(static_cast<int>(w.size()), lr);
  std::vector<Ad> out_buf(1);
  for (int ep = 0; ep < epochs; ++ep) {
    ad::Tape tape;
    std::vector<Ad> tw;
    tw.reserve(static_cast<std::size_t>(w.size()));
    for (Eigen::Index i = 0; i < w.size(); ++i)
      tw.push_back(ad::make_input(tape, w[i]));
    Ad loss(0.0);
    int n = 0;
    for (std::size_t e = 0; e < batch.episodes.size(); ++e) {
      for (std::size_t k = 0; k < batch.episodes[e].steps.size(); ++k) {
        const auto& st = batch.episodes[e].steps[k];
        policy::mlp_forward<Ad, double>(
            spec, std::span<const Ad>(tw), st.obs, std::span<Ad>(out_buf));
        const Ad d = out_buf[0] - returns[e][k];
        loss += d * d;
        ++n;
      }
    }
    if (n == 0 || loss.is_const()) return;
    loss /= static_cast<double>(n);
    std::vector<double> g = tape.gradient(loss.idx);
    VectorXd grad = Eigen::Map<const VectorXd>(
        g.data(), static_cast<Eigen::Index>(g.size()));
    opt.step(w, grad);
  }
}

std::vector<std::vector<double>> advantages(
    const RolloutBatch& batch, const std::vector<std::vector<double>>& returns,
    Baseline baseline, const ValueNet* value, bool normalize) {
  std::vector<std::vector<double>> adv(returns.size());

  double mean_return = 0.0;
  if (baseline == Baseline::mean_return) {
    double acc = 0.0;
    int n = 0;
    for (const auto& g : returns)
      for (double v : g) {
        acc += v;
        ++n;
      }
    mean_return = n > 0 ? acc / n : 0.0;
  }

  for (std::size_t e = 0; e < returns.size(); ++e) {
    adv[e].resize(returns[e].size());
    for (std::size_t k = 0; k < returns[e].size(); ++k) {
      double b = 0.0;
      if (baseline == Baseline::mean_return) {
        b = mean_return;
      } else if (baseline == Baseline::value_mlp && value != nullptr) {
        b = value->predict(batch.episodes[e].steps[k].obs);
      }
      adv[e][k] = returns[e][k] - b;
    }
  }

  if (normalize) {
    double mean = 0.0;
    int n = 0;
    for (const auto& a : adv)
      for (double v : a) {
        mean += v;
        ++n;
      }
    if (n > 1) {
      mean /= n;
      double var = 0.0;
      for (const auto& a : adv)
        for (double v : a) var += (v - mean) * (v - mean);
      const double std = std::sqrt(var / n);
      const double inv = std > 1e-12 ? 1.0 / std : 1.0;  // degenerate: center only
      for (auto& a : adv)
        for (double& v : a) v = (v - mean) * inv;
    }
  }
  return adv;
}

VectorXd policy_gradient(const GaussianPolicy& p, const RolloutBatch& batch,
                         const std::vector<std::vector<double>>& adv,
                         double entropy_weight, double grad_clip) {
  const int np = p.param_count();
  VectorXd g = VectorXd::Zero(np);
  std::vector<Ad> mean_buf;
  for (std::size_t e = 0; e < batch.episodes.size(); ++e) {
    const auto& steps = batch.episodes[e].steps;
    if (steps.empty()) continue;
    ad::Tape tape;
    std::vector<Ad> theta;
    theta.reserve(static_cast<std::size_t>(np));
    for (int i = 0; i < np; ++i)
      theta.push_back(ad::make_input(tape, p.theta[i]));
    Ad obj(0.0);
    for (std::size_t k = 0; k < steps.size(); ++k) {
      const Ad lp = taped_logp(p, theta, steps[k].obs, steps[k].action,
                               mean_buf);
      obj += lp * adv[e][k];
      if (entropy_weight != 0.0)
        obj += entropy_weight * taped_entropy(p, theta);
    }
    if (obj.is_const()) continue;
    const std::vector<double> ge = tape.gradient(obj.idx);
    for (int i = 0; i < np; ++i) g[i] += ge[static_cast<std::size_t>(i)];
  }
  g /= static_cast<double>(batch.episodes.size());
  if (!g.allFinite())
    throw ad::NonFiniteError("non-finite policy gradient", -1);
  return policy::clip_norm(std::move(g), grad_clip);
}

VectorXd ppo_gradient(const GaussianPolicy& p, const RolloutBatch& batch,
                      const std::vector<std::vector<double>>& adv,
                      double epsilon, double entropy_weight,
                      double grad_clip) {
  using ad::exp;
  using ad::min;
  const int np = p.param_count();
  VectorXd g = VectorXd::Zero(np);
  std::vector<Ad> mean_buf;
  for (std::size_t e = 0; e < batch.episodes.size(); ++e) {
    const auto& steps = batch.episodes[e].steps;
    if (steps.empty()) continue;
    ad::Tape tape;
    std::vector<Ad> theta;
    for (int i = 0; i < np; ++i)
      theta.push_back(ad::make_input(tape, p.theta[i]));
    Ad obj(0.0);
    for (std::size_t k = 0; k < steps.size(); ++k) {
      const Ad lp = taped_logp(p, theta, steps[k].obs, steps[k].action,
                               mean_buf);
      const Ad ratio = exp(lp - steps[k].logp);
      const Ad clipped =
          ad::max(ad::min(ratio, 1.0 + epsilon), 1.0 - epsilon);
      obj += min(ratio * adv[e][k], clipped * adv[e][k]);
      if (entropy_weight != 0.0)
        obj += entropy_weight * taped_entropy(p, theta);
    }
    if (obj.is_const()) continue;
    const std::vector<double> ge = tape.gradient(obj.idx);
    for (int i = 0; i < np; ++i) g[i] += ge[static_cast<std::size_t>(i)];
  }
  g /= static_cast<double>(batch.episodes.size());
  if (!g.allFinite())
    throw ad::NonFiniteError("non-finite ppo gradient", -1);
  return policy::clip_norm(std::move(g), grad_clip);
}

double max_logp_mismatch(const GaussianPolicy& p, const RolloutBatch& batch) {
  double worst = 0.0;
  for (const auto& ep : batch.episodes)
    for (const auto& st : ep.steps)
      worst = std::max(worst,
                       std::abs(st.logp - log_prob(p, st.obs, st.action)));
  return worst;
}

PgTrainResult train(GaussianPolicy init, const EpisodeCallbacks& task,
                    const PgConfig& cfg) {
  cfg.validate();
  PgTrainResult res;
  res.best = init;
  GaussianPolicy cur = std::move(init);

  policy::Adam opt(cur.param_count(), cfg.learning_rate);
  std::optional<ValueNet> value;
  if (cfg.baseline == Baseline::value_mlp)
    value = ValueNet::make(cur.obs_dim(), 32, Rng::stream(cfg.seed, 0x76));

  const auto t0 = std::chrono::steady_clock::now();
  std::int64_t env_steps = 0;
  res.best_objective = task.objective_is_cost
                           ? std::numeric_limits<double>::infinity()
                           : -std::numeric_limits<double>::infinity();

  for (int it = 0; it < cfg.iterations; ++it) {
    RolloutBatch batch;
    try {
      for (int e = 0; e < cfg.episodes_per_iter; ++e) {
        Episode ep = task.collect(
            cur, Rng::stream(cfg.seed, 0xC0,
                             static_cast<std::uint64_t>(it),
                             static_cast<std::uint64_t>(e)));
        batch.env_steps += static_cast<std::int64_t>(ep.steps.size());
        batch.episodes.push_back(std::move(ep));
      }
      env_steps += batch.env_steps;

      const auto returns = returns_to_go(batch, cfg.gamma);
      if (value) value->fit(batch, returns, 10, 1e-2);
      const auto adv =
          advantages(batch, returns, cfg.baseline,
                     value ? &*value : nullptr, cfg.normalize_advantages);

      if (cfg.ppo_clip) {
        for (int epoch = 0; epoch < cfg.ppo_epochs; ++epoch) {
          VectorXd g = ppo_gradient(cur, batch, adv, cfg.ppo_epsilon,
                                    cfg.entropy_weight, cfg.grad_clip);
          VectorXd neg = -g;
          opt.step(cur.theta, neg);
        }
      } else {
        VectorXd g = policy_gradient(cur, batch, adv, cfg.entropy_weight,
                                     cfg.grad_clip);
        VectorXd neg = -g;  // Adam minimizes
        opt.step(cur.theta, neg);
      }
    } catch (const ad::AdError&) {
      res.diverged = true;
      res.diverged_iteration = it;
      break;
    }

    // deterministic evaluation on a fixed seed set
    double obj = 0.0;
    int succ = 0;
    for (int e = 0; e < cfg.eval_episodes; ++e) {
      const std::uint64_t es =
          Rng::stream(cfg.seed, 0xEA, static_cast<std::uint64_t>(e));
      obj += task.eval_objective(cur, es);
      if (task.eval_success && task.eval_success(cur, es)) ++succ;
    }
    obj /= std::max(1, cfg.eval_episodes);
    const bool better = task.objective_is_cost ? obj < res.best_objective
                                               : obj > res.best_objective;
    if (!std::isfinite(obj)) {
      res.diverged = true;
      res.diverged_iteration = it;
      break;
    }
    if (better) {
      res.best_objective = obj;
      res.best = cur;
    }

    TrainPoint pt;
    pt.iteration = it;
    pt.env_steps = env_steps;
    pt.wall_time_s =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
            .count();
    pt.objective = obj;
    pt.success = task.eval_success &&
                 succ * 2 >= cfg.eval_episodes;  // majority of eval episodes
    res.curve.push_back(pt);
  }
  return res;
}

}  // namespace ctrlab::pg
