#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "ctrlab/env/env.hpp"
#include "ctrlab/util/rng.hpp"

namespace ctrlab::env {

// Domain-randomization recipe: multiplicative parameter ranges, an episodic
// push window, and per-dimension observation noise.
struct RandomizationSpec {
  // parameter -> [lo, hi], 0 < lo <= 1 <= hi
  std::map<std::string, std::array<double, 2>> param_ranges;

  double push_magnitude_lo = 0.0;  // N
  double push_magnitude_hi = 0.0;
  int push_start_lo = 0;  // steps
  int push_start_hi = 0;
  int push_length_lo = 0;
  int push_length_hi = 0;

  std::vector<double> obs_noise_std;  // per state dimension; empty = none

  void validate() const {
    for (const auto& [k, r] : param_ranges)
      if (!(r[0] > 0.0 && r[0] <= 1.0 && 1.0 <= r[1]))
        throw std::invalid_argument("randomization range for " + k +
                                    " must satisfy 0 < lo <= 1 <= hi");
    if (push_magnitude_lo < 0 || push_magnitude_hi < push_magnitude_lo)
      throw std::invalid_argument("bad push magnitude range");
    for (double s : obs_noise_std)
      if (s < 0) throw std::invalid_argument("negative observation noise");
  }

  bool has_push() const { return push_magnitude_hi > 0.0; }
};

// p' = p * uniform(lo, hi) per listed parameter; deterministic per seed.
inline std::unique_ptr<Env> sample_randomized(const Env& e,
                                              const RandomizationSpec& spec,
                                              std::uint64_t seed) {
  spec.validate();
  Rng rng(Rng::stream(seed, 0x7261));
  std::map<std::string, double> scales;
  for (const auto& [k, r] : spec.param_ranges)
    scales[k] = rng.uniform(r[0], r[1]);
  return e.with_scaled_params(scales);
}

// A contiguous-window external force. force is per push dimension.
struct DisturbanceSchedule {
  int start = 0;
  int length = 0;
  std::vector<double> force;

  std::vector<double> at(int k, int push_dim) const {
    if (k >= start && k < start + length && !force.empty()) return force;
    return std::vector<double>(static_cast<std::size_t>(push_dim), 0.0);
  }
};

inline DisturbanceSchedule sample_push(const RandomizationSpec& spec,
                                       int push_dim, std::uint64_t seed) {
  DisturbanceSchedule d;
  if (!spec.has_push() || push_dim == 0) return d;
  Rng rng(Rng::stream(seed, 0x7075));
  d.start = rng.uniform_int(spec.push_start_lo, spec.push_start_hi);
  d.length = rng.uniform_int(spec.push_length_lo, spec.push_length_hi);
  const double mag = rng.uniform(spec.push_magnitude_lo,
                                 spec.push_magnitude_hi);
  d.force.assign(static_cast<std::size_t>(push_dim), 0.0);
  if (push_dim == 1) {
    d.force[0] = rng.uniform() < 0.5 ? -mag : mag;
  } else {
    const double ang = rng.uniform(0.0, 2.0 * M_PI);
    d.force[0] = mag * std::cos(ang);
    if (push_dim > 1) d.force[1] = mag * std::sin(ang);
  }
  return d;
}

// x + independent zero-mean Gaussian noise; zero std returns x exactly.
inline std::vector<double> observe(std::span<const double> x,
                                   std::span<const double> noise_std,
                                   Rng& rng) {
  std::vector<double> o(x.begin(), x.end());
  for (std::size_t i = 0; i < o.size(); ++i) {
    const double s = i < noise_std.size() ? noise_std[i] : 0.0;
    if (s > 0.0) o[i] += s * rng.normal();
  }
  return o;
}

// angles become (sin, cos); everything else passes through. Works on tape
// scalars so differentiable rollouts can consume encoded observations.
template <class S>
void encode_obs_t(const Env& e, std::span<const S> x, std::vector<S>& obs) {
  using ad::cos;
  using ad::sin;
  using std::cos;
  using std::sin;
  const auto angles = e.angle_dims();
  obs.clear();
  obs.reserve(x.size() + angles.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const bool is_angle =
        std::find(angles.begin(), angles.end(), static_cast<int>(i)) !=
        angles.end();
    if (is_angle) {
      obs.push_back(sin(x[i]));
      obs.push_back(cos(x[i]));
    } else {
      obs.push_back(x[i]);
    }
  }
}

// angles become (sin, cos); everything else passes through
inline std::vector<double> encode_obs(const Env& e,
                                      std::span<const double> x) {
  const auto angles = e.angle_dims();
  std::vector<double> o;
  o.reserve(x.size() + angles.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const bool is_angle =
        std::find(angles.begin(), angles.end(), static_cast<int>(i)) !=
        angles.end();
    if (is_angle) {
      o.push_back(std::sin(x[i]));
      o.push_back(std::cos(x[i]));
    } else {
      o.push_back(x[i]);
    }
  }
  return o;
}

inline int encoded_obs_dim(const Env& e) {
  return e.state_dim() + static_cast<int>(e.angle_dims().size());
}

}  // namespace ctrlab::env
