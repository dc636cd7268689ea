#pragma once

#include <array>
#include <cmath>
#include <optional>
#include <stdexcept>

namespace ctrlab::env {

using Vec2 = std::array<double, 2>;

inline double dot2(const Vec2& a, const Vec2& b) {
  return a[0] * b[0] + a[1] * b[1];
}

// A gate sliding sinusoidally along a fixed axis inside its own pass plane.
// center(t) = base + amplitude * sin(omega*t + phase) * axis. The axis must
// be perpendicular to the pass-plane normal so the plane itself is static.
struct GateSpec {
  Vec2 base = {0.0, 1.0};
  double amplitude = 0.0;    // m, >= 0
  double omega = 0.0;        // rad/s
  double phase = 0.0;        // rad
  Vec2 axis = {0.0, 1.0};    // unit, motion direction
  Vec2 normal = {1.0, 0.0};  // unit, pass-plane normal
  double half_width = 0.25;  // m, > 0

  void validate() const {
    if (!(half_width > 0) || amplitude < 0)
      throw std::invalid_argument("gate: half_width > 0, amplitude >= 0");
    if (std::abs(std::hypot(axis[0], axis[1]) - 1.0) > 1e-9 ||
        std::abs(std::hypot(normal[0], normal[1]) - 1.0) > 1e-9)
      throw std::invalid_argument("gate: axis and normal must be unit");
    if (std::abs(dot2(axis, normal)) > 1e-9)
      throw std::invalid_argument("gate: axis must lie in the pass plane");
  }

  double displacement(double t) const {
    return amplitude * std::sin(omega * t + phase);
  }

  double displacement_rate(double t) const {
    return amplitude * omega * std::cos(omega * t + phase);
  }
};

inline Vec2 gate_position(const GateSpec& g, double t) {
  const double s = g.displacement(t);
  return {g.base[0] + s * g.axis[0], g.base[1] + s * g.axis[1]};
}

inline Vec2 gate_velocity(const GateSpec& g, double t) {
  const double r = g.displacement_rate(t);
  return {r * g.axis[0], r * g.axis[1]};
}

// signed distance of p to the pass plane (positive on the approach side is a
// convention of the caller; this is just n . (p - base))
inline double gate_plane_distance(const GateSpec& g, const Vec2& p) {
  return dot2(g.normal, {p[0] - g.base[0], p[1] - g.base[1]});
}

struct GateCrossing {
  double t = 0.0;       // crossing time
  Vec2 point = {0, 0};  // interpolated position at crossing
  double offset = 0.0;  // in-plane distance from the gate center at time t
  bool pass = false;    // |offset| <= half_width
};

// Detects a plane crossing on the linear segment p0->p1 over [t0, t1].
// Crossing means the signed plane distance changes sign (or hits zero from a
// nonzero value). Returns the interpolated event, comparing the in-plane
// offset against the moving gate center at the crossing time.
inline std::optional<GateCrossing> detect_crossing(const GateSpec& g,
                                                   double t0, const Vec2& p0,
                                                   double t1, const Vec2& p1) {
  const double d0 = gate_plane_distance(g, p0);
  const double d1 = gate_plane_distance(g, p1);
  if (d0 == 0.0 && d1 == 0.0) return std::nullopt;  // sliding along the plane
  const bool crossed = (d0 < 0.0 && d1 >= 0.0) || (d0 > 0.0 && d1 <= 0.0);
  if (!crossed) return std::nullopt;
  const double alpha = d0 / (d0 - d1);  // root of the linear distance
  GateCrossing ev;
  ev.t = t0 + alpha * (t1 - t0);
  ev.point = {p0[0] + alpha * (p1[0] - p0[0]), p0[1] + alpha * (p1[1] - p0[1])};
  const Vec2 c = gate_position(g, ev.t);
  ev.offset = dot2(g.axis, {ev.point[0] - c[0], ev.point[1] - c[1]});
  ev.pass = std::abs(ev.offset) <= g.half_width;
  return ev;
}

}  // namespace ctrlab::env
