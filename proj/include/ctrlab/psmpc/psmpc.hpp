#pragma once

#include <functional>

#include "ctrlab/env/gate.hpp"
#include "ctrlab/mpc/receding.hpp"
#include "ctrlab/mpc/tracking.hpp"
#include "ctrlab/policy/mlp.hpp"
#include "ctrlab/util/curve.hpp"

namespace ctrlab::psmpc {

using Eigen::VectorXd;
using policy::MlpSpec;

// Hard-to-optimize decision variables handed to the online NLP. For the gate
// task z = (traversal time); for tuning z = (log Q multiplier, log R
// multiplier).
struct DecisionBounds {
  VectorXd lo, hi;
  VectorXd clamp(VectorXd z) const {
    return z.cwiseMax(lo).cwiseMin(hi);
  }
  int dim() const { return static_cast<int>(lo.size()); }
};

// Gaussian high-level policy over z: either a constant mean (context-free)
// or a small MLP from context features.
struct HighLevelPolicy {
  bool contextual = false;
  MlpSpec net;    // context -> mean z (contextual mode)
  VectorXd w;     // net weights
  VectorXd mu;    // context-free mean
  VectorXd log_std;
  DecisionBounds bounds;

  int z_dim() const { return bounds.dim(); }

  VectorXd mean(std::span<const double> ctx) const;
  // clamped runtime selection (no sampling)
  VectorXd select(std::span<const double> ctx) const {
    return bounds.clamp(mean(ctx));
  }
  VectorXd sample(std::span<const double> ctx, Rng& rng) const;

  double std_of(int i) const;

  static HighLevelPolicy context_free(DecisionBounds b, VectorXd mu0,
                                      VectorXd log_std0);
  static HighLevelPolicy with_context(DecisionBounds b, int ctx_dim,
                                      int hidden, VectorXd log_std0,
                                      std::uint64_t seed);
};

struct PsmpcConfig {
  int samples_per_iter = 16;  // E >= 2
  double beta = 2.0;          // temperature > 0
  int iterations = 30;
  double std_floor = 0.02;
  std::uint64_t seed = 0;
  bool context_free = false;
  int eval_episodes = 20;

  void validate() const {
    if (samples_per_iter < 2)
      throw std::invalid_argument("psmpc: need E >= 2 samples");
    if (!(beta > 0)) throw std::invalid_argument("psmpc: beta must be > 0");
    if (!(std_floor > 0))
      throw std::invalid_argument("psmpc: std floor must be > 0");
  }
};

enum class DecisionMode { gate_waypoint, cost_tuning };

// Gate mode: adds a waypoint stage cost at k* = round(t_g/dt) pulling the
// position to gate_position(t_g). Tuning mode: scales the Q/R diagonals of
// the quadratic stage cost by exp(z). The template's stage cost must be a
// QuadraticStageCost (possibly already composed).
mpc::OcpSpec embed_decision(const mpc::OcpSpec& base, const VectorXd& z,
                            const env::GateSpec& gate, DecisionMode mode,
                            double waypoint_weight = 50.0);

struct WeightedSample {
  VectorXd z;
  std::vector<double> context;
  double reward = 0.0;
};

// Episodic reward-weighted maximum likelihood: w_i = exp(beta (R_i - max_j
// R_j)). Context-free: weighted mean/variance with a std floor. Contextual:
// weighted gradient steps on the mean network, residual-based std.
// Returns true if the sample set was degenerate (zero weighted variance).
bool reward_weighted_update(std::span<const WeightedSample> samples,
                            double beta, double std_floor,
                            HighLevelPolicy& policy);

// weights as used by the update, exposed for the property tests
std::vector<double> exp_reward_weights(std::span<const WeightedSample> samples,
                                       double beta);

// Task closure handed in by the harness: deterministic episodes per
// (z, seed), contexts sampled per seed.
struct PsmpcProblem {
  int ctx_dim = 0;
  std::function<std::vector<double>(std::uint64_t ep_seed)> sample_context;
  std::function<double(const VectorXd& z, std::uint64_t ep_seed)> episode_reward;
  std::function<bool(const VectorXd& z, std::uint64_t ep_seed)> episode_success;
};

struct PsmpcTrainResult {
  HighLevelPolicy policy;
  std::vector<TrainPoint> curve;
  double best_mean_reward = 0.0;
};

PsmpcTrainResult train(HighLevelPolicy init, const PsmpcProblem& problem,
                       const PsmpcConfig& cfg);

}  // namespace ctrlab::psmpc
