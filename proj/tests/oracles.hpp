// Independent reference implementations used only by the tests: central
// finite differences, a Riccati recursion for discrete LQR, a mass-matrix
// cartpole, and a dense-time gate-crossing scan. These must stay independent
// of the library code paths they check.
#pragma once

#include <Eigen/Dense>
#include <functional>
#include <random>
#include <vector>

#include "ctrlab/env/gate.hpp"
#include "ctrlab/util/rng.hpp"

namespace oracles {

using Eigen::MatrixXd;
using Eigen::VectorXd;

// central-difference gradient of a scalar function
inline VectorXd fd_gradient(const std::function<double(const VectorXd&)>& f,
                            const VectorXd& x, double h = 1e-5) {
  VectorXd g(x.size());
  VectorXd xp = x;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double xi = x[i];
    xp[i] = xi + h;
    const double fp = f(xp);
    xp[i] = xi - h;
    const double fm = f(xp);
    xp[i] = xi;
    g[i] = (fp - fm) / (2.0 * h);
  }
  return g;
}

inline MatrixXd fd_jacobian(
    const std::function<VectorXd(const VectorXd&)>& f, const VectorXd& x,
    double h = 1e-6) {
  const VectorXd f0 = f(x);
  MatrixXd J(f0.size(), x.size());
  VectorXd xp = x;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double xi = x[i];
    xp[i] = xi + h;
    const VectorXd fp = f(xp);
    xp[i] = xi - h;
    const VectorXd fm = f(xp);
    xp[i] = xi;
    J.col(i) = (fp - fm) / (2.0 * h);
  }
  return J;
}

// Finite-horizon discrete LQR via the Riccati recursion:
//   J = sum_{k<N} dt*(x'Qx + u'Ru) + x_N' Qf x_N,  x' = Ax + Bu
struct LqrOracle {
  std::vector<MatrixXd> K;  // N gains
  MatrixXd P0;

  double optimal_cost(const VectorXd& x0) const { return x0.dot(P0 * x0); }
};

inline LqrOracle riccati(const MatrixXd& A, const MatrixXd& B,
                         const MatrixXd& Q, const MatrixXd& R,
                         const MatrixXd& Qf, int N, double dt) {
  LqrOracle out;
  out.K.resize(static_cast<std::size_t>(N));
  const MatrixXd Qd = Q * dt;
  const MatrixXd Rd = R * dt;
  MatrixXd P = Qf;
  for (int k = N - 1; k >= 0; --k) {
    const MatrixXd BtP = B.transpose() * P;
    const MatrixXd K = (Rd + BtP * B).ldlt().solve(BtP * A);
    const MatrixXd Acl = A - B * K;
    P = Qd + K.transpose() * Rd * K + Acl.transpose() * P * Acl;
    P = 0.5 * (P + P.transpose()).eval();
    out.K[static_cast<std::size_t>(k)] = K;
  }
  out.P0 = P;
  return out;
}

// random stable (A, B) pair: A scaled to spectral radius < 0.95
inline std::pair<MatrixXd, MatrixXd> random_stable_pair(int n, int m,
                                                        ctrlab::Rng& rng) {
  MatrixXd A(n, n), B(n, m);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) A(i, j) = rng.normal();
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < m; ++j) B(i, j) = rng.normal();
  const double rho = A.eigenvalues().cwiseAbs().maxCoeff();
  if (rho > 1e-12) A *= rng.uniform(0.3, 0.95) / rho;
  return {A, B};
}

// Cartpole accelerations from the mass-matrix form, solved numerically.
// Second implementation of the standard equations of motion; independent of
// the closed-form expressions in the library.
inline Eigen::Vector2d cartpole_accel_oracle(double mc, double mp, double l,
                                             double g, double theta,
                                             double thetadot, double force) {
  Eigen::Matrix2d M;
  M << mc + mp, mp * l * std::cos(theta),
      mp * l * std::cos(theta), mp * l * l;
  Eigen::Vector2d rhs;
  rhs << force + mp * l * thetadot * thetadot * std::sin(theta),
      mp * g * l * std::sin(theta);
  return M.ldlt().solve(rhs);
}

// Dense-time interpolated gate-crossing scan: subdivides every segment and
// reports whether the trajectory passes within the half-width of the moving
// center. Brute-force counterpart of the event detector.
inline bool dense_gate_pass(const ctrlab::env::GateSpec& g,
                            const std::vector<ctrlab::env::Vec2>& traj,
                            double dt, int subdiv = 200) {
  using ctrlab::env::Vec2;
  double prev_d = ctrlab::env::gate_plane_distance(g, traj[0]);
  for (std::size_t k = 0; k + 1 < traj.size(); ++k) {
    for (int j = 1; j <= subdiv; ++j) {
      const double a = static_cast<double>(j) / subdiv;
      const Vec2 p = {traj[k][0] + a * (traj[k + 1][0] - traj[k][0]),
                      traj[k][1] + a * (traj[k + 1][1] - traj[k][1])};
      const double d = ctrlab::env::gate_plane_distance(g, p);
      if ((prev_d < 0 && d >= 0) || (prev_d > 0 && d <= 0)) {
        const double t = (k + a) * dt;
        const Vec2 c = ctrlab::env::gate_position(g, t);
        const double off = ctrlab::env::dot2(
            g.axis, {p[0] - c[0], p[1] - c[1]});
        return std::abs(off) <= g.half_width;
      }
      if (d != 0.0) prev_d = d;
    }
  }
  return false;
}

}  // namespace oracles
