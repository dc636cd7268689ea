#pragma once

#include <optional>

#include "ctrlab/env/gate.hpp"
#include "ctrlab/env/quadrotor.hpp"
#include "ctrlab/mpc/tracking.hpp"

namespace ctrlab::mpc {

// Rest-to-rest quintic (minimum jerk) position profile per axis:
// p(tau) = p0 + (pf - p0)(10 tau^3 - 15 tau^4 + 6 tau^5).
double min_jerk_scalar(double p0, double pf, double tau);
double min_jerk_scalar_rate(double p0, double pf, double tau, double T);

// Geometric reference for the planar quadrotor: start -> gate center frozen
// at the nominal crossing time (duration/2) -> goal, sampled at dt. States
// are (px, pz, 0, vx, vz, 0); controls are the hover feedforward. Without a
// gate the plan is a single segment to the goal. Sets infeasible_warning if
// the required thrust leaves [0, 2*thrust_limit] anywhere along the plan.
ReferenceTrajectory plan_reference(const env::PlanarQuadrotor& quad,
                                   const env::Vec2& start,
                                   const std::optional<env::GateSpec>& gate,
                                   const env::Vec2& goal, double duration,
                                   double dt);

}  // namespace ctrlab::mpc
