#pragma once

#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "ctrlab/ad/tape.hpp"

namespace ctrlab::ad {

enum class Method { rk4, semi_implicit_euler };

struct IntegratorConfig {
  Method method = Method::rk4;
  double dt = 0.02;  // (0, 0.1]

  void validate() const {
    if (!(dt > 0.0 && dt <= 0.1))
      throw std::invalid_argument("integrator dt must lie in (0, 0.1]");
  }
};

struct IntegrationError : std::runtime_error {
  IntegrationError(const std::string& msg, int stage_index)
      : std::runtime_error(msg), stage(stage_index) {}
  int stage;
};

namespace detail {

template <class S>
void check_stage_finite(std::span<const S> dx, int stage) {
  for (const S& v : dx)
    if (!std::isfinite(value_of(v)))
      throw IntegrationError(
          "non-finite dynamics evaluation at stage " + std::to_string(stage),
          stage);
}

}  // namespace detail

// Classical RK4. dyn: (span<const S> x, span<const S> u, span<S> dx).
template <class S, class F>
void rk4_step(F&& dyn, std::span<const S> x, std::span<const S> u, double dt,
              std::span<S> out) {
  const std::size_t n = x.size();
  std::vector<S> k1(n), k2(n), k3(n), k4(n), xt(n);

  dyn(x, u, std::span<S>(k1));
  detail::check_stage_finite(std::span<const S>(k1), 0);
  for (std::size_t i = 0; i < n; ++i) xt[i] = x[i] + (0.5 * dt) * k1[i];
  dyn(std::span<const S>(xt), u, std::span<S>(k2));
  detail::check_stage_finite(std::span<const S>(k2), 1);
  for (std::size_t i = 0; i < n; ++i) xt[i] = x[i] + (0.5 * dt) * k2[i];
  dyn(std::span<const S>(xt), u, std::span<S>(k3));
  detail::check_stage_finite(std::span<const S>(k3), 2);
  for (std::size_t i = 0; i < n; ++i) xt[i] = x[i] + dt * k3[i];
  dyn(std::span<const S>(xt), u, std::span<S>(k4));
  detail::check_stage_finite(std::span<const S>(k4), 3);

  for (std::size_t i = 0; i < n; ++i)
    out[i] = x[i] + (dt / 6.0) * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
}

// Symplectic-style Euler: velocities first, then their paired positions with
// the fresh velocity. `pairs` lists (position index, velocity index); any
// state dimension not mentioned integrates explicitly.
template <class S, class F>
void semi_implicit_step(F&& dyn, std::span<const S> x, std::span<const S> u,
                        double dt,
                        std::span<const std::pair<int, int>> pairs,
                        std::span<S> out) {
  const std::size_t n = x.size();
  std::vector<S> dx(n);
  dyn(x, u, std::span<S>(dx));
  detail::check_stage_finite(std::span<const S>(dx), 0);

  std::vector<bool> paired_pos(n, false);
  for (std::size_t i = 0; i < n; ++i) out[i] = x[i] + dt * dx[i];
  for (const auto& [pi, vi] : pairs) {
    out[static_cast<std::size_t>(vi)] =
        x[static_cast<std::size_t>(vi)] + dt * dx[static_cast<std::size_t>(vi)];
    out[static_cast<std::size_t>(pi)] =
        x[static_cast<std::size_t>(pi)] +
        dt * out[static_cast<std::size_t>(vi)];
    paired_pos[static_cast<std::size_t>(pi)] = true;
  }
  (void)paired_pos;
}

}  // namespace ctrlab::ad
