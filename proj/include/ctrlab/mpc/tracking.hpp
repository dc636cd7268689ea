#pragma once

#include <optional>
#include <utility>

#include "ctrlab/mpc/ocp.hpp"

namespace ctrlab::mpc {

// Time-indexed reference, sampled at dt. Controls are optional feedforwards;
// indexing past the end holds the last entry.
struct ReferenceTrajectory {
  double dt = 0.0;
  std::vector<VectorXd> states;
  std::vector<VectorXd> controls;
  bool infeasible_warning = false;

  int length() const { return static_cast<int>(states.size()); }
  const VectorXd& state(int k) const {
    if (states.empty()) throw std::out_of_range("empty reference");
    return states[static_cast<std::size_t>(
        std::clamp(k, 0, length() - 1))];
  }
  bool has_controls() const { return !controls.empty(); }
  const VectorXd& control(int k) const {
    return controls[static_cast<std::size_t>(
        std::clamp(k, 0, static_cast<int>(controls.size()) - 1))];
  }
};

// (x - xbar_k)' Q (x - xbar_k) + (u - ubar_k)' R (u - ubar_k) with diagonal
// weights; exact quadratic expansion. `offset` shifts the reference index so
// receding-horizon re-anchoring keeps absolute time alignment. q_scale and
// r_scale are multipliers on the two blocks (the tuning knob of the
// high-level policy).
class QuadraticStageCost : public StageCost {
 public:
  QuadraticStageCost(VectorXd q_diag, VectorXd r_diag)
      : q_(std::move(q_diag)), r_(std::move(r_diag)) {
    if ((q_.array() < 0).any() || (r_.array() < 0).any())
      throw std::invalid_argument("negative diagonal weight");
  }

  void set_reference(const ReferenceTrajectory* ref, int offset = 0) {
    ref_ = ref;
    offset_ = offset;
  }
  void set_scales(double q_scale, double r_scale) {
    q_scale_ = q_scale;
    r_scale_ = r_scale;
  }
  double q_scale() const { return q_scale_; }
  double r_scale() const { return r_scale_; }

  double value(std::span<const double> x, std::span<const double> u,
               int k) const override {
    return value_impl<double>(x, u, k);
  }
  Ad value(std::span<const Ad> x, std::span<const Ad> u,
           int k) const override {
    return value_impl<Ad>(x, u, k);
  }

  void expand(std::span<const double> x, std::span<const double> u, int k,
              StageExpansion& e) const override {
    const int nx = static_cast<int>(x.size());
    const int nu = static_cast<int>(u.size());
    e.resize(nx, nu);
    for (int i = 0; i < nx; ++i) {
      const double d = x[static_cast<std::size_t>(i)] - x_ref(k, i);
      e.lx[i] = 2.0 * q_scale_ * q_[i] * d;
      e.lxx(i, i) = 2.0 * q_scale_ * q_[i];
    }
    for (int i = 0; i < nu; ++i) {
      const double d = u[static_cast<std::size_t>(i)] - u_ref(k, i);
      e.lu[i] = 2.0 * r_scale_ * r_[i] * d;
      e.luu(i, i) = 2.0 * r_scale_ * r_[i];
    }
  }

 private:
  template <class S>
  S value_impl(std::span<const S> x, std::span<const S> u, int k) const {
    S acc(0.0);
    for (int i = 0; i < static_cast<int>(x.size()); ++i) {
      const S d = x[static_cast<std::size_t>(i)] - x_ref(k, i);
      acc += q_scale_ * q_[i] * d * d;
    }
    for (int i = 0; i < static_cast<int>(u.size()); ++i) {
      const S d = u[static_cast<std::size_t>(i)] - u_ref(k, i);
      acc += r_scale_ * r_[i] * d * d;
    }
    return acc;
  }

  double x_ref(int k, int i) const {
    return ref_ ? ref_->state(offset_ + k)[i] : 0.0;
  }
  double u_ref(int k, int i) const {
    return (ref_ && ref_->has_controls()) ? ref_->control(offset_ + k)[i]
                                          : 0.0;
  }

  VectorXd q_, r_;
  const ReferenceTrajectory* ref_ = nullptr;
  int offset_ = 0;
  double q_scale_ = 1.0, r_scale_ = 1.0;
};

class QuadraticTerminalCost : public TerminalCost {
 public:
  explicit QuadraticTerminalCost(VectorXd q_diag, VectorXd x_goal = {})
      : q_(std::move(q_diag)), goal_(std::move(x_goal)) {
    if ((q_.array() < 0).any())
      throw std::invalid_argument("negative diagonal weight");
  }
  void set_goal(VectorXd g) { goal_ = std::move(g); }
  void set_scale(double s) { scale_ = s; }

  double value(std::span<const double> x) const override {
    return value_impl<double>(x);
  }
  Ad value(std::span<const Ad> x) const override { return value_impl<Ad>(x); }

  void expand(std::span<const double> x, VectorXd& lx,
              MatrixXd& lxx) const override {
    const int nx = static_cast<int>(x.size());
    lx.setZero(nx);
    lxx.setZero(nx, nx);
    for (int i = 0; i < nx; ++i) {
      const double d = x[static_cast<std::size_t>(i)] - ref(i);
      lx[i] = 2.0 * scale_ * q_[i] * d;
      lxx(i, i) = 2.0 * scale_ * q_[i];
    }
  }

 private:
  template <class S>
  S value_impl(std::span<const S> x) const {
    S acc(0.0);
    for (int i = 0; i < static_cast<int>(x.size()); ++i) {
      const S d = x[static_cast<std::size_t>(i)] - ref(i);
      acc += scale_ * q_[i] * d * d;
    }
    return acc;
  }
  double ref(int i) const { return goal_.size() > i ? goal_[i] : 0.0; }

  VectorXd q_;
  VectorXd goal_;
  double scale_ = 1.0;
};

// single-step quadratic pull of selected state dims toward a target point
class WaypointCost : public StageCost {
 public:
  WaypointCost(int active_step, std::vector<int> dims, VectorXd target,
               double weight)
      : step_(active_step), dims_(std::move(dims)), target_(std::move(target)),
        w_(weight) {}

  int active_step() const { return step_; }
  const VectorXd& target() const { return target_; }

  double value(std::span<const double> x, std::span<const double> u,
               int k) const override {
    return value_impl<double>(x, u, k);
  }
  Ad value(std::span<const Ad> x, std::span<const Ad> u,
           int k) const override {
    return value_impl<Ad>(x, u, k);
  }
  void expand(std::span<const double> x, std::span<const double> u, int k,
              StageExpansion& e) const override {
    e.resize(static_cast<int>(x.size()), static_cast<int>(u.size()));
    if (k != step_) return;
    for (std::size_t j = 0; j < dims_.size(); ++j) {
      const int i = dims_[j];
      const double d =
          x[static_cast<std::size_t>(i)] - target_[static_cast<Eigen::Index>(j)];
      e.lx[i] = 2.0 * w_ * d;
      e.lxx(i, i) = 2.0 * w_;
    }
  }

 private:
  template <class S>
  S value_impl(std::span<const S> x, std::span<const S>, int k) const {
    S acc(0.0);
    if (k != step_) return acc;
    for (std::size_t j = 0; j < dims_.size(); ++j) {
      const S d = x[static_cast<std::size_t>(dims_[j])] -
                  target_[static_cast<Eigen::Index>(j)];
      acc += w_ * d * d;
    }
    return acc;
  }

  int step_;
  std::vector<int> dims_;
  VectorXd target_;
  double w_;
};

class CompositeStageCost : public StageCost {
 public:
  explicit CompositeStageCost(
      std::vector<std::shared_ptr<const StageCost>> parts)
      : parts_(std::move(parts)) {}

  double value(std::span<const double> x, std::span<const double> u,
               int k) const override {
    double acc = 0;
    for (const auto& p : parts_) acc += p->value(x, u, k);
    return acc;
  }
  Ad value(std::span<const Ad> x, std::span<const Ad> u,
           int k) const override {
    Ad acc(0.0);
    for (const auto& p : parts_) acc += p->value(x, u, k);
    return acc;
  }
  void expand(std::span<const double> x, std::span<const double> u, int k,
              StageExpansion& e) const override {
    e.resize(static_cast<int>(x.size()), static_cast<int>(u.size()));
    StageExpansion part;
    for (const auto& p : parts_) {
      p->expand(x, u, k, part);
      e.lx += part.lx;
      e.lu += part.lu;
      e.lxx += part.lxx;
      e.luu += part.luu;
      e.lux += part.lux;
    }
  }

 private:
  std::vector<std::shared_ptr<const StageCost>> parts_;
};

// The tracking objective: stage (x - xbar)'Q(x - xbar) + (u - ubar)'R(u -
// ubar), terminal with Q_N against the final reference point. The returned
// stage cost keeps a pointer into `ref`; the caller owns its lifetime.
struct TrackingCost {
  std::shared_ptr<QuadraticStageCost> stage;
  std::shared_ptr<QuadraticTerminalCost> terminal;
};

inline TrackingCost tracking_cost(const ReferenceTrajectory& ref,
                                  VectorXd q_diag, VectorXd r_diag,
                                  VectorXd qn_diag) {
  auto stage = std::make_shared<QuadraticStageCost>(std::move(q_diag),
                                                    std::move(r_diag));
  stage->set_reference(&ref);
  auto terminal = std::make_shared<QuadraticTerminalCost>(
      std::move(qn_diag), ref.state(ref.length() - 1));
  return {std::move(stage), std::move(terminal)};
}

}  // namespace ctrlab::mpc
