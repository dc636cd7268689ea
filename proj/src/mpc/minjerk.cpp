#include "ctrlab/mpc/minjerk.hpp"

#include <cmath>

namespace ctrlab::mpc {

double min_jerk_scalar(double p0, double pf, double tau) {
  tau = std::clamp(tau, 0.0, 1.0);
  const double t3 = tau * tau * tau;
  const double s = 10.0 * t3 - 15.0 * t3 * tau + 6.0 * t3 * tau * tau;
  return p0 + (pf - p0) * s;
}

double min_jerk_scalar_rate(double p0, double pf, double tau, double T) {
  tau = std::clamp(tau, 0.0, 1.0);
  const double t2 = tau * tau;
  const double ds = 30.0 * t2 - 60.0 * t2 * tau + 30.0 * t2 * t2;
  return (pf - p0) * ds / T;
}

namespace {

double min_jerk_scalar_accel(double p0, double pf, double tau, double T) {
  tau = std::clamp(tau, 0.0, 1.0);
  const double dds = 60.0 * tau - 180.0 * tau * tau + 120.0 * tau * tau * tau;
  return (pf - p0) * dds / (T * T);
}

struct Segment {
  env::Vec2 a, b;
  double t0, t1;
};

}  // namespace

ReferenceTrajectory plan_reference(const env::PlanarQuadrotor& quad,
                                   const env::Vec2& start,
                                   const std::optional<env::GateSpec>& gate,
                                   const env::Vec2& goal, double duration,
                                   double dt) {
  if (!(duration > 0) || !(dt > 0))
    throw std::invalid_argument("plan_reference: duration and dt must be > 0");

  std::vector<Segment> segs;
  if (gate) {
    // frozen gate prediction at the fixed nominal crossing time
    const double t_nominal = 0.5 * duration;
    const env::Vec2 center = env::gate_position(*gate, t_nominal);
    segs.push_back({start, center, 0.0, t_nominal});
    segs.push_back({center, goal, t_nominal, duration});
  } else {
    segs.push_back({start, goal, 0.0, duration});
  }

  const auto& p = quad.params();
  ReferenceTrajectory ref;
  ref.dt = dt;
  const int steps = static_cast<int>(std::round(duration / dt));
  const VectorXd hover =
      VectorXd::Constant(2, p.hover_thrust());

  for (int k = 0; k <= steps; ++k) {
    const double t = std::min(k * dt, duration);
    const Segment& s =
        (segs.size() > 1 && t > segs[0].t1) ? segs[1] : segs[0];
    const double T = s.t1 - s.t0;
    const double tau = T > 0 ? (t - s.t0) / T : 1.0;
    VectorXd x = VectorXd::Zero(6);
    x[0] = min_jerk_scalar(s.a[0], s.b[0], tau);
    x[1] = min_jerk_scalar(s.a[1], s.b[1], tau);
    x[3] = min_jerk_scalar_rate(s.a[0], s.b[0], tau, T);
    x[4] = min_jerk_scalar_rate(s.a[1], s.b[1], tau, T);
    ref.states.push_back(std::move(x));
    if (k < steps) ref.controls.push_back(hover);

    // feasibility: required thrust magnitude within the rotor envelope
    const double ax = min_jerk_scalar_accel(s.a[0], s.b[0], tau, T);
    const double az = min_jerk_scalar_accel(s.a[1], s.b[1], tau, T);
    const double f = p.mass * std::hypot(ax, az + p.gravity);
    if (f > 2.0 * p.thrust_limit || f < 0.0) ref.infeasible_warning = true;
  }
  return ref;
}

}  // namespace ctrlab::mpc
