#pragma once

#include <map>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "ctrlab/ad/integrate.hpp"
#include "ctrlab/ad/tape.hpp"

namespace ctrlab::env {

using ad::Ad;

// Immutable parameter bundle plus pure dynamics. Every environment exposes
// the same continuous-time vector field on plain reals and on tape scalars;
// the two paths share one templated implementation, so real-path values are
// bit-identical.
class Env {
 public:
  virtual ~Env() = default;

  virtual const char* name() const = 0;
  virtual int state_dim() const = 0;
  virtual int control_dim() const = 0;
  virtual int push_dim() const { return 0; }

  virtual std::vector<double> control_lo() const = 0;
  virtual std::vector<double> control_hi() const = 0;

  // xdot = f(x, clamp(u)) + external push coupling
  virtual void deriv(std::span<const double> x, std::span<const double> u,
                     std::span<const double> push,
                     std::span<double> dx) const = 0;
  virtual void deriv(std::span<const Ad> x, std::span<const Ad> u,
                     std::span<const double> push, std::span<Ad> dx) const = 0;

  // (position, velocity) index pairs for semi-implicit integration
  virtual std::vector<std::pair<int, int>> pos_vel_pairs() const = 0;

  // state dimensions that are angles (encoded as sin/cos in observations)
  virtual std::vector<int> angle_dims() const { return {}; }

  // smooth vector field everywhere (hopper hard contact is not)
  virtual bool is_smooth() const { return true; }

  virtual std::vector<std::string> param_names() const = 0;
  virtual std::unique_ptr<Env> with_scaled_params(
      const std::map<std::string, double>& scales) const = 0;
  virtual std::unique_ptr<Env> clone() const = 0;

  virtual double default_dt() const { return 0.02; }

 protected:
  static double scale_of(const std::map<std::string, double>& scales,
                         const std::string& key) {
    auto it = scales.find(key);
    return it == scales.end() ? 1.0 : it->second;
  }
};

// Dispatches both virtual dynamics overloads into Derived::dyn<S>().
template <class Derived>
class EnvModel : public Env {
 public:
  void deriv(std::span<const double> x, std::span<const double> u,
             std::span<const double> push,
             std::span<double> dx) const override {
    derived().template dyn<double>(x, u, push, dx);
  }
  void deriv(std::span<const Ad> x, std::span<const Ad> u,
             std::span<const double> push, std::span<Ad> dx) const override {
    derived().template dyn<Ad>(x, u, push, dx);
  }
  std::unique_ptr<Env> clone() const override {
    return std::make_unique<Derived>(derived());
  }

 private:
  const Derived& derived() const {
    return *static_cast<const Derived*>(this);
  }
};

namespace detail {
template <class S>
S clamp_sg(const S& v, double lo, double hi) {
  using ad::max;
  using ad::min;
  using std::max;
  using std::min;
  return max(min(v, S(hi)), S(lo));  // zero subgradient outside the box
}
}  // namespace detail

inline void check_dims(const Env& e, std::size_t nx, std::size_t nu) {
  if (nx != static_cast<std::size_t>(e.state_dim()) ||
      nu != static_cast<std::size_t>(e.control_dim()))
    throw std::invalid_argument(std::string(e.name()) +
                                ": state/control dimension mismatch");
}

}  // namespace ctrlab::env
