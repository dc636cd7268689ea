#pragma once

#include <span>
#include <vector>

#include "ctrlab/ad/integrate.hpp"
#include "ctrlab/env/env.hpp"
#include "ctrlab/env/hopper.hpp"

namespace ctrlab::env {

// One discrete step of an environment. Smooth environments integrate their
// vector field with the configured scheme; the hopper always runs the
// hard-contact semi-implicit stepper (its differentiable path lives in the
// decoupled step).
inline void step(const Env& e, const ad::IntegratorConfig& cfg,
                 std::span<const double> x, std::span<const double> u,
                 std::span<const double> push, std::span<double> out) {
  check_dims(e, x.size(), u.size());
  if (!e.is_smooth()) {
    const auto* hop = dynamic_cast<const Hopper*>(&e);
    if (hop != nullptr) {
      hopper_hard_step(*hop, x, u, push.empty() ? 0.0 : push[0], cfg.dt, out);
      return;
    }
  }
  auto dyn = [&](std::span<const double> xs, std::span<const double> us,
                 std::span<double> dxs) { e.deriv(xs, us, push, dxs); };
  if (cfg.method == ad::Method::rk4) {
    ad::rk4_step<double>(dyn, x, u, cfg.dt, out);
  } else {
    const auto pairs = e.pos_vel_pairs();
    ad::semi_implicit_step<double>(dyn, x, u, cfg.dt, pairs, out);
  }
  for (double v : out)
    if (!std::isfinite(v))
      throw ad::IntegrationError("non-finite next state", -1);
}

// Tape path for smooth environments; refuses hard-contact dynamics.
inline void step(const Env& e, const ad::IntegratorConfig& cfg,
                 std::span<const Ad> x, std::span<const Ad> u,
                 std::span<const double> push, std::span<Ad> out) {
  check_dims(e, x.size(), u.size());
  if (!e.is_smooth())
    throw std::invalid_argument(
        std::string(e.name()) +
        ": discontinuous dynamics cannot be taped directly");
  auto dyn = [&](std::span<const Ad> xs, std::span<const Ad> us,
                 std::span<Ad> dxs) { e.deriv(xs, us, push, dxs); };
  if (cfg.method == ad::Method::rk4) {
    ad::rk4_step<Ad>(dyn, x, u, cfg.dt, out);
  } else {
    const auto pairs = e.pos_vel_pairs();
    ad::semi_implicit_step<Ad>(dyn, x, u, cfg.dt, pairs, out);
  }
}

}  // namespace ctrlab::env
