#pragma once

#include "ctrlab/mpc/ocp.hpp"

namespace ctrlab::mpc {

struct SolverConfig {
  int max_outer = 10;
  int max_inner = 60;
  double cost_tol = 1e-7;        // relative decrease of the AL objective
  double constraint_tol = 1e-4;  // absolute violation
  double reg_init = 1e-8;
  double reg_scale = 2.0;  // x2 on backward failure, x0.5 on success
  double reg_max = 1e9;
  double penalty_init = 10.0;
  double penalty_growth = 10.0;
  double ls_backtrack = 0.5;
  double ls_min_step = 1e-4;

  void validate() const {
    if (!(cost_tol > 0 && constraint_tol > 0))
      throw std::invalid_argument("solver: tolerances must be positive");
    if (!(reg_scale > 1 && penalty_growth > 1))
      throw std::invalid_argument("solver: growth factors must exceed 1");
    if (!(ls_backtrack > 0 && ls_backtrack < 1 && ls_min_step > 0))
      throw std::invalid_argument("solver: bad line search parameters");
  }
};

enum class SolveStatus { converged, max_iter, diverged };

inline const char* to_string(SolveStatus s) {
  switch (s) {
    case SolveStatus::converged: return "converged";
    case SolveStatus::max_iter: return "max-iter";
    case SolveStatus::diverged: return "diverged";
  }
  return "?";
}

struct IterStat {
  int outer = 0;
  int inner = 0;
  double al_cost = 0;    // augmented objective after the accepted step
  double true_cost = 0;  // objective without penalty terms
  double violation = 0;
  double reg = 0;
  double alpha = 0;
};

struct Solution {
  std::vector<VectorXd> x;  // N+1
  std::vector<VectorXd> u;  // N
  double objective = 0.0;
  double max_violation = 0.0;
  int iterations = 0;
  SolveStatus status = SolveStatus::max_iter;
  int diverged_at = -1;
  std::vector<IterStat> trace;
};

// Single-shooting iLQR with augmented-Lagrangian constraint handling.
Solution solve(const OcpSpec& ocp, const SolverConfig& cfg,
               const Solution* warm_start = nullptr);

// objective J = sum_k dt*l(x_k, u_k, k) + l_N(x_N) along a rollout of u
double evaluate_objective(const OcpSpec& ocp,
                          const std::vector<VectorXd>& x,
                          const std::vector<VectorXd>& u);

// max over stages of max(|g|, max(h, 0))
double max_constraint_violation(const OcpSpec& ocp,
                                const std::vector<VectorXd>& x,
                                const std::vector<VectorXd>& u);

}  // namespace ctrlab::mpc
