#pragma once

#include "ctrlab/env/env.hpp"

namespace ctrlab::env {

// State (x, theta, xdot, thetadot), theta measured from upright. Point-mass
// pole at distance pole_length from the pivot. Control is a horizontal force
// on the cart; push adds to it.
struct CartpoleParams {
  double cart_mass = 1.0;    // kg
  double pole_mass = 0.1;    // kg
  double pole_length = 0.5;  // m
  double gravity = 9.81;     // m/s^2
  double force_limit = 10.0; // N

  void validate() const {
    if (!(cart_mass > 0 && pole_mass > 0 && pole_length > 0 && gravity > 0 &&
          force_limit > 0))
      throw std::invalid_argument("cartpole params out of range");
  }
};

class Cartpole : public EnvModel<Cartpole> {
 public:
  explicit Cartpole(CartpoleParams p = {}) : p_(p) { p_.validate(); }

  const char* name() const override { return "cartpole"; }
  int state_dim() const override { return 4; }
  int control_dim() const override { return 1; }
  int push_dim() const override { return 1; }
  std::vector<double> control_lo() const override { return {-p_.force_limit}; }
  std::vector<double> control_hi() const override { return {p_.force_limit}; }
  std::vector<std::pair<int, int>> pos_vel_pairs() const override {
    return {{0, 2}, {1, 3}};
  }
  std::vector<int> angle_dims() const override { return {1}; }

  template <class S>
  void dyn(std::span<const S> x, std::span<const S> u,
           std::span<const double> push, std::span<S> dx) const {
    using ad::cos;
    using ad::sin;
    using std::cos;
    using std::sin;
    const double mc = p_.cart_mass, mp = p_.pole_mass, l = p_.pole_length,
                 g = p_.gravity;
    const S F = detail::clamp_sg(u[0], -p_.force_limit, p_.force_limit) +
                S(push.empty() ? 0.0 : push[0]);
    const S s = sin(x[1]);
    const S c = cos(x[1]);
    const S td = x[3];
    const S denom = mc + mp * s * s;
    dx[0] = x[2];
    dx[1] = x[3];
    dx[2] = (F + mp * s * (l * td * td - g * c)) / denom;
    dx[3] = ((mc + mp) * g * s - c * F - mp * l * s * c * td * td) /
            (l * denom);
  }

  std::vector<std::string> param_names() const override {
    return {"cart_mass", "pole_mass", "pole_length", "force_limit"};
  }
  std::unique_ptr<Env> with_scaled_params(
      const std::map<std::string, double>& s) const override {
    CartpoleParams q = p_;
    q.cart_mass *= scale_of(s, "cart_mass");
    q.pole_mass *= scale_of(s, "pole_mass");
    q.pole_length *= scale_of(s, "pole_length");
    q.force_limit *= scale_of(s, "force_limit");
    return std::make_unique<Cartpole>(q);
  }

  const CartpoleParams& params() const { return p_; }

 private:
  CartpoleParams p_;
};

}  // namespace ctrlab::env
