#pragma once

#include <array>
#include <functional>

#include "ctrlab/env/hopper.hpp"
#include "ctrlab/env/step.hpp"
#include "ctrlab/mpc/ocp.hpp"
#include "ctrlab/policy/mlp.hpp"
#include "ctrlab/util/curve.hpp"

namespace ctrlab::bptt {

using ad::Ad;
using Eigen::VectorXd;
using policy::MlpSpec;

// Forward values from the hard-contact stepper, derivatives through the
// smooth spring-damper ground model evaluated at the same inputs. No blend:
// full substitution.
struct ContactDecoupling {
  double stiffness = 4000.0;  // N/m
  double damping = 40.0;      // N*s/m
  double sharpness = 100.0;   // softplus beta

  void validate() const {
    if (!(stiffness > 0 && damping > 0 && sharpness > 0))
      throw std::invalid_argument("contact decoupling params out of range");
  }
  static ContactDecoupling from(const env::HopperParams& p) {
    return {p.contact_stiffness, p.contact_damping, p.contact_sharpness};
  }
};

// hard-contact value path, soft-contact gradient path
void decoupled_step(const env::Hopper& hop, std::span<const Ad> x,
                    std::span<const Ad> u, const ContactDecoupling& c,
                    double dt, std::span<Ad> out);
void decoupled_step(const env::Hopper& hop, std::span<const double> x,
                    std::span<const double> u, const ContactDecoupling& c,
                    double dt, std::span<double> out);

struct BpttConfig {
  int horizon = 100;       // N
  int truncation = 50;     // K, detach the state every K steps
  double learning_rate = 5e-3;
  double grad_clip = 100.0;
  int batch = 16;
  std::vector<std::array<double, 2>> x0_ranges;  // per-dimension uniform
  int iterations = 300;
  std::uint64_t seed = 0;
  int eval_batch = 8;

  void validate(int nx) const {
    if (horizon < 0) throw std::invalid_argument("bptt: horizon must be >= 0");
    if (horizon > 0 && !(truncation >= 1 && truncation <= horizon))
      throw std::invalid_argument("bptt: need 1 <= K <= N");
    if (static_cast<int>(x0_ranges.size()) != nx)
      throw std::invalid_argument("bptt: x0 range dimension mismatch");
    for (const auto& r : x0_ranges)
      if (!(std::isfinite(r[0]) && std::isfinite(r[1]) && r[0] <= r[1]))
        throw std::invalid_argument("bptt: bad x0 range");
  }
};

struct RolloutGrad {
  double cost = 0.0;
  VectorXd grad;
};

// J = batch mean of sum_k dt*l(x_k, u_k, k) + l_N(x_N) under u = pi_theta(x);
// grad is the exact reverse-mode derivative of the computed J (respecting
// truncation detach points), clipped to grad_clip.
RolloutGrad rollout_and_grad(const MlpSpec& pi, const VectorXd& theta,
                             const env::Env& e,
                             const ad::IntegratorConfig& integ,
                             const mpc::StageCost& stage,
                             const mpc::TerminalCost& terminal,
                             std::span<const VectorXd> x0_batch, int horizon,
                             int truncation, double grad_clip,
                             const ContactDecoupling* coupling);

// deterministic rollout cost (no tape), same step rule as rollout_and_grad
double rollout_cost(const MlpSpec& pi, const VectorXd& theta,
                    const env::Env& e, const ad::IntegratorConfig& integ,
                    const mpc::StageCost& stage,
                    const mpc::TerminalCost& terminal, const VectorXd& x0,
                    int horizon, const ContactDecoupling* coupling,
                    std::vector<VectorXd>* traj = nullptr);

struct BpttTrainResult {
  VectorXd best_theta;
  double best_cost = 0.0;
  std::vector<TrainPoint> curve;
  int lr_halvings = 0;
  bool aborted = false;
};

// optional per-iterate success probe (e.g. hop detection) for the curve
using SuccessProbe = std::function<bool(const VectorXd& theta)>;

BpttTrainResult train(const MlpSpec& pi, VectorXd theta0, const env::Env& e,
                      const ad::IntegratorConfig& integ,
                      const mpc::StageCost& stage,
                      const mpc::TerminalCost& terminal,
                      const BpttConfig& cfg,
                      const ContactDecoupling* coupling = nullptr,
                      const SuccessProbe& success = nullptr);

}  // namespace ctrlab::bptt
