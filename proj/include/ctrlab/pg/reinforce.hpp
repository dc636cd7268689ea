#pragma once

#include <functional>
#include <optional>

#include "ctrlab/policy/mlp.hpp"
#include "ctrlab/util/curve.hpp"
#include "ctrlab/util/rng.hpp"

namespace ctrlab::pg {

using Eigen::VectorXd;
using policy::MlpSpec;

// Diagonal-Gaussian policy: tanh-scaled mean network plus a state-independent
// log-std head. theta = [mean weights; log_std].
struct GaussianPolicy {
  MlpSpec mean;
  VectorXd theta;

  static constexpr double kStdLo = 1e-3;
  static constexpr double kStdHi = 10.0;

  int obs_dim() const { return mean.input_dim(); }
  int act_dim() const { return mean.output_dim(); }
  int param_count() const { return mean.param_count() + act_dim(); }

  std::span<const double> mean_params() const {
    return {theta.data(), static_cast<std::size_t>(mean.param_count())};
  }
  double log_std(int a) const { return theta[mean.param_count() + a]; }
  double std_of(int a) const {
    return std::clamp(std::exp(log_std(a)), kStdLo, kStdHi);
  }

  void mean_action(std::span<const double> obs, std::span<double> out) const {
    policy::mlp_forward<double, double>(mean, mean_params(), obs, out);
  }

  static GaussianPolicy make(MlpSpec spec, double init_log_std,
                             std::uint64_t seed) {
    GaussianPolicy p;
    p.mean = std::move(spec);
    p.theta.resize(p.param_count());
    p.theta.head(p.mean.param_count()) = policy::mlp_init(p.mean, seed);
    p.theta.tail(p.act_dim()).setConstant(init_log_std);
    return p;
  }
};

struct StepSample {
  std::vector<double> obs;
  std::vector<double> action;
  double reward = 0.0;
  double logp = 0.0;
};

struct Episode {
  std::vector<StepSample> steps;
  double total_reward = 0.0;
};

struct RolloutBatch {
  std::vector<Episode> episodes;
  std::int64_t env_steps = 0;
};

enum class Baseline { none, mean_return, value_mlp };

struct PgConfig {
  double gamma = 0.99;
  int episodes_per_iter = 16;
  double learning_rate = 5e-3;
  Baseline baseline = Baseline::mean_return;
  double entropy_weight = 0.0;
  double grad_clip = 10.0;
  int iterations = 200;
  std::uint64_t seed = 0;
  bool randomize = false;
  bool normalize_advantages = true;
  int eval_episodes = 4;
  // optional PPO-style clipped-ratio updates over the same batch
  bool ppo_clip = false;
  double ppo_epsilon = 0.2;
  int ppo_epochs = 4;

  void validate() const {
    if (!(gamma >= 0.0 && gamma <= 1.0))
      throw std::invalid_argument("pg: gamma must lie in [0,1]");
    if (!(learning_rate > 0))
      throw std::invalid_argument("pg: learning rate must be positive");
    if (episodes_per_iter < 1 || iterations < 1)
      throw std::invalid_argument("pg: counts must be positive");
  }
};

// u = mean(obs) + std (.) eps; logp is the Gaussian log-density of the
// unclamped action.
std::pair<VectorXd, double> sample_action(const GaussianPolicy& p,
                                          std::span<const double> obs,
                                          Rng& rng);

// recompute the log-density of a stored action (double path)
double log_prob(const GaussianPolicy& p, std::span<const double> obs,
                std::span<const double> action);

// return-to-go G_k = sum_{j>=k} gamma^{j-k} r_j, per episode
std::vector<std::vector<double>> returns_to_go(const RolloutBatch& batch,
                                               double gamma);

// small value network used by Baseline::value_mlp
struct ValueNet {
  MlpSpec spec;
  VectorXd w;
  double predict(std::span<const double> obs) const;
  // a few Adam epochs on the squared regression error against returns
  void fit(const RolloutBatch& batch,
           const std::vector<std::vector<double>>& returns, int epochs,
           double lr);
  static ValueNet make(int obs_dim, int hidden, std::uint64_t seed);
};

// advantages = G - baseline, optionally normalized to zero mean / unit std
// across the whole iteration batch
std::vector<std::vector<double>> advantages(
    const RolloutBatch& batch, const std::vector<std::vector<double>>& returns,
    Baseline baseline, const ValueNet* value, bool normalize);

// (1/E) sum_e sum_k grad log pi(u|obs) * A + entropy bonus gradient, clipped
// to grad_clip. Ascent direction.
VectorXd policy_gradient(const GaussianPolicy& p, const RolloutBatch& batch,
                         const std::vector<std::vector<double>>& adv,
                         double entropy_weight, double grad_clip);

// one PPO-lite clipped-ratio ascent gradient at the current theta
VectorXd ppo_gradient(const GaussianPolicy& p, const RolloutBatch& batch,
                      const std::vector<std::vector<double>>& adv,
                      double epsilon, double entropy_weight, double grad_clip);

// max |stored logp - recomputed logp| over a batch (consistency diagnostic)
double max_logp_mismatch(const GaussianPolicy& p, const RolloutBatch& batch);

// Task plumbing supplied by the harness.
struct EpisodeCallbacks {
  // stochastic training episode under the given policy and seed
  std::function<Episode(const GaussianPolicy&, std::uint64_t seed)> collect;
  // deterministic (mean-action) evaluation objective for one seed
  std::function<double(const GaussianPolicy&, std::uint64_t seed)> eval_objective;
  // optional success predicate on one deterministic evaluation episode
  std::function<bool(const GaussianPolicy&, std::uint64_t seed)> eval_success;
  bool objective_is_cost = false;  // false: higher is better
};

struct PgTrainResult {
  GaussianPolicy best;
  double best_objective = 0.0;
  std::vector<TrainPoint> curve;
  bool diverged = false;
  int diverged_iteration = -1;
};

PgTrainResult train(GaussianPolicy init, const EpisodeCallbacks& task,
                    const PgConfig& cfg);

}  // namespace ctrlab::pg
