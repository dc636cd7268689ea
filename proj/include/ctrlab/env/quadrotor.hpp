#pragma once

#include "ctrlab/env/env.hpp"

namespace ctrlab::env {

// Planar quadrotor in the x-z plane. State (px, pz, phi, vx, vz, omega),
// controls are the two rotor thrusts, each in [0, thrust_limit]. phi is the
// roll angle, positive counterclockwise; rotor 1 sits at +arm_length.
// Push is a 2D external force (N) on the body.
struct PlanarQuadrotorParams {
  double mass = 0.8;          // kg
  double inertia = 0.01;      // kg*m^2
  double arm_length = 0.2;    // m
  double thrust_limit = 8.0;  // N per rotor
  double gravity = 9.81;      // m/s^2

  void validate() const {
    if (!(mass > 0 && inertia > 0 && arm_length > 0 && thrust_limit > 0 &&
          gravity > 0))
      throw std::invalid_argument("quadrotor params out of range");
  }

  double hover_thrust() const { return 0.5 * mass * gravity; }
};

class PlanarQuadrotor : public EnvModel<PlanarQuadrotor> {
 public:
  explicit PlanarQuadrotor(PlanarQuadrotorParams p = {}) : p_(p) {
    p_.validate();
  }

  const char* name() const override { return "quadrotor"; }
  int state_dim() const override { return 6; }
  int control_dim() const override { return 2; }
  int push_dim() const override { return 2; }
  std::vector<double> control_lo() const override { return {0.0, 0.0}; }
  std::vector<double> control_hi() const override {
    return {p_.thrust_limit, p_.thrust_limit};
  }
  std::vector<std::pair<int, int>> pos_vel_pairs() const override {
    return {{0, 3}, {1, 4}, {2, 5}};
  }
  std::vector<int> angle_dims() const override { return {2}; }

  template <class S>
  void dyn(std::span<const S> x, std::span<const S> u,
           std::span<const double> push, std::span<S> dx) const {
    using ad::cos;
    using ad::sin;
    using std::cos;
    using std::sin;
    const S f1 = detail::clamp_sg(u[0], 0.0, p_.thrust_limit);
    const S f2 = detail::clamp_sg(u[1], 0.0, p_.thrust_limit);
    const S thrust = f1 + f2;
    const double fx = push.size() > 0 ? push[0] : 0.0;
    const double fz = push.size() > 1 ? push[1] : 0.0;
    dx[0] = x[3];
    dx[1] = x[4];
    dx[2] = x[5];
    dx[3] = (-thrust * sin(x[2]) + fx) / p_.mass;
    dx[4] = (thrust * cos(x[2]) + fz) / p_.mass - p_.gravity;
    dx[5] = p_.arm_length * (f1 - f2) / p_.inertia;
  }

  std::vector<std::string> param_names() const override {
    return {"mass", "inertia", "arm_length", "thrust_limit"};
  }
  std::unique_ptr<Env> with_scaled_params(
      const std::map<std::string, double>& s) const override {
    PlanarQuadrotorParams q = p_;
    q.mass *= scale_of(s, "mass");
    q.inertia *= scale_of(s, "inertia");
    q.arm_length *= scale_of(s, "arm_length");
    q.thrust_limit *= scale_of(s, "thrust_limit");
    return std::make_unique<PlanarQuadrotor>(q);
  }

  const PlanarQuadrotorParams& params() const { return p_; }

 private:
  PlanarQuadrotorParams p_;
};

}  // namespace ctrlab::env
