#pragma once

#include "ctrlab/env/env.hpp"

namespace ctrlab::env {

// State (theta, omega), theta measured from the hanging position so the
// stable equilibrium is theta = 0 and upright is theta = pi. Control is a
// torque, saturated at +-torque_limit. Push enters as an extra torque.
struct PendulumParams {
  double mass = 1.0;         // kg
  double length = 0.5;       // m
  double gravity = 9.81;     // m/s^2
  double damping = 0.02;     // N*m*s/rad, >= 0
  double torque_limit = 2.5; // N*m

  void validate() const {
    if (!(mass > 0 && length > 0 && gravity > 0 && torque_limit > 0 &&
          damping >= 0))
      throw std::invalid_argument("pendulum params out of range");
  }
};

class Pendulum : public EnvModel<Pendulum> {
 public:
  explicit Pendulum(PendulumParams p = {}) : p_(p) { p_.validate(); }

  const char* name() const override { return "pendulum"; }
  int state_dim() const override { return 2; }
  int control_dim() const override { return 1; }
  int push_dim() const override { return 1; }
  std::vector<double> control_lo() const override {
    return {-p_.torque_limit};
  }
  std::vector<double> control_hi() const override { return {p_.torque_limit}; }
  std::vector<std::pair<int, int>> pos_vel_pairs() const override {
    return {{0, 1}};
  }
  std::vector<int> angle_dims() const override { return {0}; }

  template <class S>
  void dyn(std::span<const S> x, std::span<const S> u,
           std::span<const double> push, std::span<S> dx) const {
    using ad::sin;
    using std::sin;
    const S tau = detail::clamp_sg(u[0], -p_.torque_limit, p_.torque_limit);
    const double ext = push.empty() ? 0.0 : push[0];
    const double inertia = p_.mass * p_.length * p_.length;
    dx[0] = x[1];
    dx[1] = (-p_.mass * p_.gravity * p_.length * sin(x[0]) -
             p_.damping * x[1] + tau + ext) /
            inertia;
  }

  std::vector<std::string> param_names() const override {
    return {"mass", "length", "damping", "torque_limit"};
  }
  std::unique_ptr<Env> with_scaled_params(
      const std::map<std::string, double>& s) const override {
    PendulumParams q = p_;
    q.mass *= scale_of(s, "mass");
    q.length *= scale_of(s, "length");
    q.damping *= scale_of(s, "damping");
    q.torque_limit *= scale_of(s, "torque_limit");
    return std::make_unique<Pendulum>(q);
  }

  const PendulumParams& params() const { return p_; }

  // E = 1/2 m l^2 w^2 - m g l cos(theta)
  double energy(std::span<const double> x) const {
    return 0.5 * p_.mass * p_.length * p_.length * x[1] * x[1] -
           p_.mass * p_.gravity * p_.length * std::cos(x[0]);
  }

 private:
  PendulumParams p_;
};

}  // namespace ctrlab::env
