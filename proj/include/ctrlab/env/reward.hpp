#pragma once

#include <optional>
#include <span>
#include <stdexcept>

#include "ctrlab/env/env.hpp"
#include "ctrlab/env/gate.hpp"
#include "ctrlab/env/hopper.hpp"
#include "ctrlab/util/math.hpp"

namespace ctrlab::env {

enum class Task { swingup, balance, gate_pass, hop };

inline Task parse_task(const std::string& s) {
  if (s == "swingup") return Task::swingup;
  if (s == "balance") return Task::balance;
  if (s == "gate-pass") return Task::gate_pass;
  if (s == "hop") return Task::hop;
  throw std::invalid_argument("unknown task: " + s);
}

inline const char* task_name(Task t) {
  switch (t) {
    case Task::swingup: return "swingup";
    case Task::balance: return "balance";
    case Task::gate_pass: return "gate-pass";
    case Task::hop: return "hop";
  }
  return "?";
}

// Task-level reward coefficients; defaults documented here, overridable from
// the experiment config.
struct RewardConfig {
  // quadratic state/control weights (swingup, balance)
  double w_angle = 1.0;
  double w_omega = 0.1;
  double w_u = 0.02;
  double w_pos = 0.2;  // cart / body position term for balance

  // gate task
  double progress_weight = 1.0;
  double pass_bonus = 10.0;
  double crash_penalty = -10.0;
  double crossing_shaping = 0.0;  // optional smooth near-center bonus
  double floor_height = 0.0;      // crash below this

  // hop task
  double hop_height_weight = 1.0;
};

// -(angle_err^2 + w*omega^2 + w*u^2)*dt, zero (maximal) at upright rest
inline double swingup_reward(std::span<const double> x,
                             std::span<const double> u, double dt,
                             const RewardConfig& c) {
  const double err = wrap_angle(x[0] - M_PI);
  return -(c.w_angle * err * err + c.w_omega * x[1] * x[1] +
           c.w_u * u[0] * u[0]) *
         dt;
}

inline double balance_reward(std::span<const double> x,
                             std::span<const double> u, double dt,
                             const RewardConfig& c) {
  const double th = wrap_angle(x[1]);
  return -(c.w_angle * th * th + c.w_pos * x[0] * x[0] +
           c.w_omega * x[3] * x[3] + c.w_u * u[0] * u[0]) *
         dt;
}

inline double hop_reward(const Hopper& h, std::span<const double> x, double dt,
                         const RewardConfig& c) {
  const double excess = x[0] - h.params().rest_body_height();
  return c.hop_height_weight * std::max(0.0, excess) * dt;
}

struct GateStepOutcome {
  bool crossed = false;
  bool passed = false;
  bool crashed = false;
  double offset = 0.0;
};

// Progress toward the pass plane plus pass bonus / crash penalty on the
// transition p0 (at t0) -> p1 (at t1). Crash = crossing outside the gate
// half-width or dropping below the floor.
inline double gate_step_reward(const GateSpec& g, double t0, const Vec2& p0,
                               double t1, const Vec2& p1,
                               const RewardConfig& c, GateStepOutcome* out) {
  GateStepOutcome o;
  const double d0 = std::abs(gate_plane_distance(g, p0));
  const double d1 = std::abs(gate_plane_distance(g, p1));
  double r = c.progress_weight * (d0 - d1);
  if (auto ev = detect_crossing(g, t0, p0, t1, p1)) {
    o.crossed = true;
    o.offset = ev->offset;
    if (ev->pass) {
      o.passed = true;
      r += c.pass_bonus;
      if (c.crossing_shaping > 0.0) {
        const double rel = ev->offset / g.half_width;
        r += c.crossing_shaping * (1.0 - rel * rel);
      }
    } else {
      o.crashed = true;
      r += c.crash_penalty;
    }
  }
  if (p1[1] <= c.floor_height && !o.crashed) {
    o.crashed = true;
    r += c.crash_penalty;
  }
  if (out) *out = o;
  return r;
}

}  // namespace ctrlab::env
