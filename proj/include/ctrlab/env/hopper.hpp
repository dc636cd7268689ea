#pragma once

#include <array>

#include "ctrlab/env/env.hpp"

namespace ctrlab::env {

// One-dimensional hopper: a body of mass `body_mass` above a light foot,
// connected by an actuated spring-damper leg. State (z, v, e, edot) where z
// is body height, e the leg extension relative to rest_length (leg length =
// rest_length + e, foot height = z - rest_length - e). Control is a leg
// force in N, positive extends the leg.
//
// Two contact treatments share the flight equations:
//  * hard: foot pinned to the ground while loaded, touchdown projects the
//    foot state (impulse on the massless-side foot, body velocity continuous)
//  * soft: spring-damper ground force smoothed by a softplus, C^1 everywhere
// The smooth model is the env vector field; the hard model is the stepper.
struct HopperParams {
  double body_mass = 1.0;        // kg
  double leg_stiffness = 200.0;  // N/m
  double leg_damping = 4.0;      // N*s/m
  double rest_length = 0.5;      // m
  double ground_height = 0.0;    // m
  double actuation_limit = 25.0; // N

  // smooth ground model constants (gradient path)
  double contact_stiffness = 4000.0;  // N/m
  double contact_damping = 40.0;      // N*s/m
  double contact_sharpness = 100.0;   // softplus beta, 1/N scale

  // foot mass as a fixed fraction of the body
  static constexpr double kFootMassRatio = 0.1;
  double foot_mass() const { return kFootMassRatio * body_mass; }

  void validate() const {
    if (!(body_mass > 0 && leg_stiffness > 0 && leg_damping > 0 &&
          rest_length > 0 && actuation_limit > 0 && contact_stiffness > 0 &&
          contact_damping > 0 && contact_sharpness > 0))
      throw std::invalid_argument("hopper params out of range");
  }

  // body height when standing on an unloaded leg
  double rest_body_height() const { return ground_height + rest_length; }
  double weight() const { return (body_mass + foot_mass()) * 9.81; }
};

namespace detail {

// numerically stable softplus(z)/beta built from tape primitives
template <class S>
S softplus(const S& z, double beta) {
  using ad::exp;
  using ad::log;
  using ad::max;
  using ad::min;
  using std::exp;
  using std::log;
  using std::max;
  using std::min;
  const S zb = z * beta;
  return (max(zb, S(0.0)) + log(1.0 + exp(min(zb, -zb)))) / beta;
}

}  // namespace detail

class Hopper : public EnvModel<Hopper> {
 public:
  explicit Hopper(HopperParams p = {}) : p_(p) { p_.validate(); }

  const char* name() const override { return "hopper"; }
  int state_dim() const override { return 4; }
  int control_dim() const override { return 1; }
  int push_dim() const override { return 1; }  // vertical body force
  bool is_smooth() const override { return false; }
  double default_dt() const override { return 0.004; }
  std::vector<double> control_lo() const override {
    return {-p_.actuation_limit};
  }
  std::vector<double> control_hi() const override {
    return {p_.actuation_limit};
  }
  std::vector<std::pair<int, int>> pos_vel_pairs() const override {
    return {{0, 1}, {2, 3}};
  }

  template <class S>
  S leg_force(std::span<const S> x, const S& u_clamped) const {
    return -p_.leg_stiffness * x[2] - p_.leg_damping * x[3] + u_clamped;
  }

  template <class S>
  S foot_height(std::span<const S> x) const {
    return x[0] - p_.rest_length - x[2];
  }

  // smooth ground normal force at the foot
  template <class S>
  S soft_contact_force(std::span<const S> x) const {
    const S zf = foot_height(x);
    const S pen = p_.ground_height - zf;
    const S pen_rate = -(x[1] - x[3]);  // -d(zf)/dt
    return detail::softplus(
        p_.contact_stiffness * pen + p_.contact_damping * pen_rate,
        p_.contact_sharpness);
  }

  // shared flight/contact equations given a ground normal force N
  template <class S>
  void deriv_with_contact(std::span<const S> x, std::span<const S> u,
                          double push, const S& N, std::span<S> dx) const {
    const double g = 9.81;
    const double M = p_.body_mass, mf = p_.foot_mass();
    const S uc =
        detail::clamp_sg(u[0], -p_.actuation_limit, p_.actuation_limit);
    const S fl = leg_force(x, uc);
    const S body_acc = -g + (fl + push) / M;
    const S foot_acc = -g + (N - fl) / mf;
    dx[0] = x[1];
    dx[1] = body_acc;
    dx[2] = x[3];
    dx[3] = body_acc - foot_acc;
  }

  // the smooth (gradient-path) vector field
  template <class S>
  void dyn(std::span<const S> x, std::span<const S> u,
           std::span<const double> push, std::span<S> dx) const {
    const S N = soft_contact_force(x);
    deriv_with_contact(x, u, push.empty() ? 0.0 : push[0], N, dx);
  }

  std::vector<std::string> param_names() const override {
    return {"body_mass", "leg_stiffness", "leg_damping", "actuation_limit"};
  }
  std::unique_ptr<Env> with_scaled_params(
      const std::map<std::string, double>& s) const override {
    HopperParams q = p_;
    q.body_mass *= scale_of(s, "body_mass");
    q.leg_stiffness *= scale_of(s, "leg_stiffness");
    q.leg_damping *= scale_of(s, "leg_damping");
    q.actuation_limit *= scale_of(s, "actuation_limit");
    return std::make_unique<Hopper>(q);
  }

  const HopperParams& params() const { return p_; }

 private:
  HopperParams p_;
};

// Hard-contact semi-implicit step. Stance keeps the foot pinned (leg state
// slaved to the body), touchdown projects the foot onto the ground and kills
// its velocity; the body velocity is continuous across the impact.
inline void hopper_hard_step(const Hopper& h, std::span<const double> x,
                             std::span<const double> u, double push, double dt,
                             std::span<double> out) {
  const HopperParams& p = h.params();
  const double g = 9.81;
  const double M = p.body_mass, mf = p.foot_mass();

  double z = x[0], v = x[1], e = x[2], ed = x[3];
  const double zf = z - p.rest_length - e;
  const bool in_contact = zf <= p.ground_height + 1e-12;

  const double uc =
      std::min(std::max(u[0], -p.actuation_limit), p.actuation_limit);

  bool stance = false;
  if (in_contact) {
    // project the foot onto the ground
    e = z - p.rest_length - p.ground_height;
    ed = v;
    const double fl = -p.leg_stiffness * e - p.leg_damping * ed + uc;
    const double normal = mf * g + fl;
    stance = normal >= 0.0;  // tensile leg force releases the foot
    if (stance) {
      const double vn = v + dt * (-g + (fl + push) / M);
      const double zn = z + dt * vn;
      out[0] = zn;
      out[1] = vn;
      out[2] = zn - p.rest_length - p.ground_height;
      out[3] = vn;
      return;
    }
  }

  // flight (possibly right after release): zero ground force
  const std::array<double, 4> xs = {z, v, e, ed};
  std::array<double, 4> dx{};
  h.deriv_with_contact<double>(xs, u, push, 0.0, dx);
  const double vn = v + dt * dx[1];
  const double zn = z + dt * vn;
  const double edn = ed + dt * dx[3];
  double en = e + dt * edn;
  out[0] = zn;
  out[1] = vn;
  out[2] = en;
  out[3] = edn;
  if (zn - p.rest_length - en < p.ground_height) {  // touchdown
    out[2] = zn - p.rest_length - p.ground_height;
    out[3] = vn;
  }
}

// ground force the hard model transmits in stance (weight at static rest)
inline double hopper_hard_contact_force(const Hopper& h,
                                        std::span<const double> x,
                                        std::span<const double> u) {
  const HopperParams& p = h.params();
  const double zf = x[0] - p.rest_length - x[2];
  if (zf > p.ground_height + 1e-12) return 0.0;
  const double e = x[0] - p.rest_length - p.ground_height;
  const double uc =
      std::min(std::max(u[0], -p.actuation_limit), p.actuation_limit);
  const double fl = -p.leg_stiffness * e - p.leg_damping * x[1] + uc;
  return std::max(0.0, p.foot_mass() * 9.81 + fl);
}

}  // namespace ctrlab::env
