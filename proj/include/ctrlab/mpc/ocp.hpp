#pragma once

#include <Eigen/Dense>
#include <memory>
#include <span>
#include <stdexcept>
#include <vector>

#include "ctrlab/ad/record.hpp"
#include "ctrlab/ad/tape.hpp"
#include "ctrlab/env/env.hpp"
#include "ctrlab/env/step.hpp"

namespace ctrlab::mpc {

using ad::Ad;
using Eigen::MatrixXd;
using Eigen::VectorXd;

struct StageExpansion {
  VectorXd lx, lu;
  MatrixXd lxx, luu, lux;
  void resize(int nx, int nu) {
    lx.setZero(nx);
    lu.setZero(nu);
    lxx.setZero(nx, nx);
    luu.setZero(nu, nu);
    lux.setZero(nu, nx);
  }
};

// Differentiable stage cost l(x, u, k). The default expansion uses the tape
// gradient and central differences of that gradient for the Hessian;
// quadratic costs override with exact expressions.
class StageCost {
 public:
  virtual ~StageCost() = default;
  virtual double value(std::span<const double> x, std::span<const double> u,
                       int k) const = 0;
  virtual Ad value(std::span<const Ad> x, std::span<const Ad> u,
                   int k) const = 0;
  virtual void expand(std::span<const double> x, std::span<const double> u,
                      int k, StageExpansion& e) const;
};

class TerminalCost {
 public:
  virtual ~TerminalCost() = default;
  virtual double value(std::span<const double> x) const = 0;
  virtual Ad value(std::span<const Ad> x) const = 0;
  virtual void expand(std::span<const double> x, VectorXd& lx,
                      MatrixXd& lxx) const;
};

// c(x, u, k), either c = 0 (equality) or c <= 0 (inequality).
class Constraint {
 public:
  enum class Type { equality, inequality };

  explicit Constraint(Type t) : type(t) {}
  virtual ~Constraint() = default;
  virtual int dim() const = 0;
  virtual void eval(std::span<const double> x, std::span<const double> u,
                    int k, std::span<double> out) const = 0;
  virtual void eval(std::span<const Ad> x, std::span<const Ad> u, int k,
                    std::span<Ad> out) const = 0;
  // J = d c / d (x, u), dim x (nx + nu); default via the tape
  virtual void jacobian(std::span<const double> x, std::span<const double> u,
                        int k, MatrixXd& J) const;

  Type type;
};

// x_{k+1} = f(x_k, u_k), with tape-backed linearization.
class DiscreteDynamics {
 public:
  virtual ~DiscreteDynamics() = default;
  virtual int nx() const = 0;
  virtual int nu() const = 0;
  virtual void step(std::span<const double> x, std::span<const double> u,
                    std::span<double> out) const = 0;
  virtual void step(std::span<const Ad> x, std::span<const Ad> u,
                    std::span<Ad> out) const = 0;
  void linearize(std::span<const double> x, std::span<const double> u,
                 MatrixXd& A, MatrixXd& B) const;
};

// integrator applied to an environment's vector field, no disturbances
class EnvDynamics : public DiscreteDynamics {
 public:
  EnvDynamics(std::shared_ptr<const env::Env> e, ad::IntegratorConfig cfg)
      : env_(std::move(e)), cfg_(cfg) {
    cfg_.validate();
  }
  int nx() const override { return env_->state_dim(); }
  int nu() const override { return env_->control_dim(); }
  void step(std::span<const double> x, std::span<const double> u,
            std::span<double> out) const override {
    env::step(*env_, cfg_, x, u, {}, out);
  }
  void step(std::span<const Ad> x, std::span<const Ad> u,
            std::span<Ad> out) const override {
    env::step(*env_, cfg_, x, u, {}, out);
  }
  const env::Env& environment() const { return *env_; }
  const ad::IntegratorConfig& integrator() const { return cfg_; }

 private:
  std::shared_ptr<const env::Env> env_;
  ad::IntegratorConfig cfg_;
};

class LinearDynamics : public DiscreteDynamics {
 public:
  LinearDynamics(MatrixXd A, MatrixXd B) : A_(std::move(A)), B_(std::move(B)) {
    if (A_.rows() != A_.cols() || A_.rows() != B_.rows())
      throw std::invalid_argument("linear dynamics dimension mismatch");
  }
  int nx() const override { return static_cast<int>(A_.rows()); }
  int nu() const override { return static_cast<int>(B_.cols()); }
  void step(std::span<const double> x, std::span<const double> u,
            std::span<double> out) const override {
    step_impl<double>(x, u, out);
  }
  void step(std::span<const Ad> x, std::span<const Ad> u,
            std::span<Ad> out) const override {
    step_impl<Ad>(x, u, out);
  }
  const MatrixXd& A() const { return A_; }
  const MatrixXd& B() const { return B_; }

 private:
  template <class S>
  void step_impl(std::span<const S> x, std::span<const S> u,
                 std::span<S> out) const {
    for (int i = 0; i < nx(); ++i) {
      S acc(0.0);
      for (int j = 0; j < nx(); ++j) acc += A_(i, j) * x[j];
      for (int j = 0; j < nu(); ++j) acc += B_(i, j) * u[j];
      out[i] = acc;
    }
  }
  MatrixXd A_, B_;
};

// u - hi <= 0, lo - u <= 0
class ControlBoxConstraint : public Constraint {
 public:
  ControlBoxConstraint(VectorXd lo, VectorXd hi)
      : Constraint(Type::inequality), lo_(std::move(lo)), hi_(std::move(hi)) {
    if (lo_.size() != hi_.size() || (lo_.array() > hi_.array()).any())
      throw std::invalid_argument("bad control box");
  }
  int dim() const override { return static_cast<int>(2 * lo_.size()); }
  void eval(std::span<const double> x, std::span<const double> u, int k,
            std::span<double> out) const override {
    eval_impl<double>(x, u, k, out);
  }
  void eval(std::span<const Ad> x, std::span<const Ad> u, int k,
            std::span<Ad> out) const override {
    eval_impl<Ad>(x, u, k, out);
  }
  void jacobian(std::span<const double> x, std::span<const double> u, int k,
                MatrixXd& J) const override {
    const int nu = static_cast<int>(lo_.size());
    J.setZero(dim(), static_cast<Eigen::Index>(x.size()) + nu);
    (void)u;
    (void)k;
    for (int i = 0; i < nu; ++i) {
      J(i, static_cast<Eigen::Index>(x.size()) + i) = 1.0;
      J(nu + i, static_cast<Eigen::Index>(x.size()) + i) = -1.0;
    }
  }

 private:
  template <class S>
  void eval_impl(std::span<const S>, std::span<const S> u, int,
                 std::span<S> out) const {
    const int nu = static_cast<int>(lo_.size());
    for (int i = 0; i < nu; ++i) {
      out[static_cast<std::size_t>(i)] = u[static_cast<std::size_t>(i)] - hi_[i];
      out[static_cast<std::size_t>(nu + i)] =
          lo_[i] - u[static_cast<std::size_t>(i)];
    }
  }
  VectorXd lo_, hi_;
};

// Discretized optimal control problem. Stage costs integrate as l(x,u,k)*dt;
// the terminal cost is not scaled.
struct OcpSpec {
  int N = 0;
  double dt = 0.0;
  std::shared_ptr<const DiscreteDynamics> dynamics;
  std::shared_ptr<const StageCost> stage;
  std::shared_ptr<const TerminalCost> terminal;
  std::vector<std::shared_ptr<const Constraint>> equalities;
  std::vector<std::shared_ptr<const Constraint>> inequalities;
  VectorXd x_init;

  int nx() const { return dynamics ? dynamics->nx() : 0; }
  int nu() const { return dynamics ? dynamics->nu() : 0; }

  void validate() const {
    if (N < 1) throw std::invalid_argument("ocp: horizon must be >= 1");
    if (!(dt > 0)) throw std::invalid_argument("ocp: dt must be positive");
    if (!dynamics || !stage || !terminal)
      throw std::invalid_argument("ocp: dynamics and costs are required");
    if (x_init.size() != nx())
      throw std::invalid_argument("ocp: x_init dimension mismatch");
  }
};

// helpers for wrapping generic lambdas: F callable as S(span<const S> x,
// span<const S> u, int k) for S in {double, Ad}
template <class F>
class GenericStageCost : public StageCost {
 public:
  explicit GenericStageCost(F f) : f_(std::move(f)) {}
  double value(std::span<const double> x, std::span<const double> u,
               int k) const override {
    return f_(x, u, k);
  }
  Ad value(std::span<const Ad> x, std::span<const Ad> u,
           int k) const override {
    return f_(x, u, k);
  }

 private:
  F f_;
};

template <class F>
std::shared_ptr<StageCost> make_stage_cost(F f) {
  return std::make_shared<GenericStageCost<F>>(std::move(f));
}

template <class F>
class GenericTerminalCost : public TerminalCost {
 public:
  explicit GenericTerminalCost(F f) : f_(std::move(f)) {}
  double value(std::span<const double> x) const override { return f_(x); }
  Ad value(std::span<const Ad> x) const override { return f_(x); }

 private:
  F f_;
};

template <class F>
std::shared_ptr<TerminalCost> make_terminal_cost(F f) {
  return std::make_shared<GenericTerminalCost<F>>(std::move(f));
}

}  // namespace ctrlab::mpc
