#include "ctrlab/mpc/ilqr.hpp"

#include <Eigen/Cholesky>
#include <cmath>
#include <limits>

namespace ctrlab::mpc {

namespace {

struct AlState {
  std::vector<std::vector<VectorXd>> lam_eq;    // [constraint][stage]
  std::vector<std::vector<VectorXd>> lam_ineq;  // >= 0
  double mu = 10.0;
};

AlState init_al(const OcpSpec& ocp, double mu) {
  AlState al;
  al.mu = mu;
  al.lam_eq.resize(ocp.equalities.size());
  for (std::size_t c = 0; c < ocp.equalities.size(); ++c)
    al.lam_eq[c].assign(static_cast<std::size_t>(ocp.N),
                        VectorXd::Zero(ocp.equalities[c]->dim()));
  al.lam_ineq.resize(ocp.inequalities.size());
  for (std::size_t c = 0; c < ocp.inequalities.size(); ++c)
    al.lam_ineq[c].assign(static_cast<std::size_t>(ocp.N),
                          VectorXd::Zero(ocp.inequalities[c]->dim()));
  return al;
}

void eval_constraint(const Constraint& con, const VectorXd& x,
                     const VectorXd& u, int k, VectorXd& out) {
  out.resize(con.dim());
  con.eval(std::span<const double>(x.data(), static_cast<std::size_t>(x.size())),
           std::span<const double>(u.data(), static_cast<std::size_t>(u.size())),
           k, std::span<double>(out.data(), static_cast<std::size_t>(out.size())));
}

// Rockafellar-style penalty terms for one stage
double al_stage_value(const OcpSpec& ocp, const AlState& al, int k,
                      const VectorXd& x, const VectorXd& u) {
  double acc = 0.0;
  VectorXd c;
  for (std::size_t i = 0; i < ocp.equalities.size(); ++i) {
    eval_constraint(*ocp.equalities[i], x, u, k, c);
    const VectorXd& lam = al.lam_eq[i][static_cast<std::size_t>(k)];
    acc += lam.dot(c) + 0.5 * al.mu * c.squaredNorm();
  }
  for (std::size_t i = 0; i < ocp.inequalities.size(); ++i) {
    eval_constraint(*ocp.inequalities[i], x, u, k, c);
    const VectorXd& lam = al.lam_ineq[i][static_cast<std::size_t>(k)];
    for (Eigen::Index j = 0; j < c.size(); ++j) {
      const double s = lam[j] + al.mu * c[j];
      if (s > 0.0)
        acc += lam[j] * c[j] + 0.5 * al.mu * c[j] * c[j];
      else
        acc += -0.5 * lam[j] * lam[j] / al.mu;
    }
  }
  return acc;
}

// gradient and Gauss-Newton Hessian of the stage AL terms, added into e
void al_stage_expand(const OcpSpec& ocp, const AlState& al, int k,
                     const VectorXd& x, const VectorXd& u, StageExpansion& e) {
  const int nx = static_cast<int>(x.size());
  const int nu = static_cast<int>(u.size());
  VectorXd c;
  MatrixXd J;
  auto add_terms = [&](const VectorXd& w, const std::vector<bool>& active) {
    for (Eigen::Index j = 0; j < w.size(); ++j) {
      if (!active[static_cast<std::size_t>(j)]) continue;
      const auto Jx = J.row(j).head(nx);
      const auto Ju = J.row(j).tail(nu);
      e.lx += w[j] * Jx.transpose();
      e.lu += w[j] * Ju.transpose();
      e.lxx += al.mu * Jx.transpose() * Jx;
      e.luu += al.mu * Ju.transpose() * Ju;
      e.lux += al.mu * Ju.transpose() * Jx;
    }
  };
  for (std::size_t i = 0; i < ocp.equalities.size(); ++i) {
    const Constraint& con = *ocp.equalities[i];
    eval_constraint(con, x, u, k, c);
    con.jacobian(std::span<const double>(x.data(), static_cast<std::size_t>(nx)),
                 std::span<const double>(u.data(), static_cast<std::size_t>(nu)),
                 k, J);
    const VectorXd w = al.lam_eq[i][static_cast<std::size_t>(k)] + al.mu * c;
    add_terms(w, std::vector<bool>(static_cast<std::size_t>(c.size()), true));
  }
  for (std::size_t i = 0; i < ocp.inequalities.size(); ++i) {
    const Constraint& con = *ocp.inequalities[i];
    eval_constraint(con, x, u, k, c);
    con.jacobian(std::span<const double>(x.data(), static_cast<std::size_t>(nx)),
                 std::span<const double>(u.data(), static_cast<std::size_t>(nu)),
                 k, J);
    const VectorXd& lam = al.lam_ineq[i][static_cast<std::size_t>(k)];
    VectorXd w = lam + al.mu * c;
    std::vector<bool> active(static_cast<std::size_t>(c.size()));
    for (Eigen::Index j = 0; j < c.size(); ++j)
      active[static_cast<std::size_t>(j)] = w[j] > 0.0;
    add_terms(w, active);
  }
}

void update_multipliers(const OcpSpec& ocp, AlState& al,
                        const std::vector<VectorXd>& X,
                        const std::vector<VectorXd>& U) {
  VectorXd c;
  for (int k = 0; k < ocp.N; ++k) {
    for (std::size_t i = 0; i < ocp.equalities.size(); ++i) {
      eval_constraint(*ocp.equalities[i], X[static_cast<std::size_t>(k)],
                      U[static_cast<std::size_t>(k)], k, c);
      al.lam_eq[i][static_cast<std::size_t>(k)] += al.mu * c;
    }
    for (std::size_t i = 0; i < ocp.inequalities.size(); ++i) {
      eval_constraint(*ocp.inequalities[i], X[static_cast<std::size_t>(k)],
                      U[static_cast<std::size_t>(k)], k, c);
      VectorXd& lam = al.lam_ineq[i][static_cast<std::size_t>(k)];
      lam = (lam + al.mu * c).cwiseMax(0.0);
    }
  }
}

struct RolloutResult {
  std::vector<VectorXd> x;
  double true_cost = 0.0;
  double al_cost = 0.0;
  bool finite = false;
  int bad_step = -1;
};

RolloutResult rollout(const OcpSpec& ocp, const AlState& al,
                      const std::vector<VectorXd>& U) {
  RolloutResult r;
  const int nx = ocp.nx();
  r.x.assign(static_cast<std::size_t>(ocp.N + 1), VectorXd::Zero(nx));
  r.x[0] = ocp.x_init;
  double cost = 0.0, alc = 0.0;
  for (int k = 0; k < ocp.N; ++k) {
    const VectorXd& xk = r.x[static_cast<std::size_t>(k)];
    const VectorXd& uk = U[static_cast<std::size_t>(k)];
    const double lk =
        ocp.stage->value(std::span<const double>(xk.data(), xk.size()),
                         std::span<const double>(uk.data(), uk.size()), k);
    cost += ocp.dt * lk;
    alc += al_stage_value(ocp, al, k, xk, uk);
    VectorXd& xn = r.x[static_cast<std::size_t>(k + 1)];
    try {
      ocp.dynamics->step(
          std::span<const double>(xk.data(), static_cast<std::size_t>(xk.size())),
          std::span<const double>(uk.data(), static_cast<std::size_t>(uk.size())),
          std::span<double>(xn.data(), static_cast<std::size_t>(xn.size())));
    } catch (const std::runtime_error&) {
      r.bad_step = k;
      return r;
    }
    if (!xn.allFinite() || !std::isfinite(cost)) {
      r.bad_step = k;
      return r;
    }
  }
  const VectorXd& xN = r.x[static_cast<std::size_t>(ocp.N)];
  cost += ocp.terminal->value(
      std::span<const double>(xN.data(), static_cast<std::size_t>(xN.size())));
  if (!std::isfinite(cost) || !std::isfinite(alc)) {
    r.bad_step = ocp.N;
    return r;
  }
  r.true_cost = cost;
  r.al_cost = cost + alc;
  r.finite = true;
  return r;
}

// closed-loop candidate: u = U + alpha*kff + K (x - X)
RolloutResult feedback_rollout(const OcpSpec& ocp, const AlState& al,
                               const std::vector<VectorXd>& X,
                               const std::vector<VectorXd>& U,
                               const std::vector<VectorXd>& kff,
                               const std::vector<MatrixXd>& K, double alpha,
                               std::vector<VectorXd>& U_new) {
  RolloutResult r;
  const int nx = ocp.nx();
  r.x.assign(static_cast<std::size_t>(ocp.N + 1), VectorXd::Zero(nx));
  r.x[0] = ocp.x_init;
  U_new.assign(static_cast<std::size_t>(ocp.N), VectorXd::Zero(ocp.nu()));
  double cost = 0.0, alc = 0.0;
  for (int k = 0; k < ocp.N; ++k) {
    const std::size_t sk = static_cast<std::size_t>(k);
    const VectorXd& xk = r.x[sk];
    U_new[sk] = U[sk] + alpha * kff[sk] + K[sk] * (xk - X[sk]);
    if (!U_new[sk].allFinite()) {
      r.bad_step = k;
      return r;
    }
    const double lk = ocp.stage->value(
        std::span<const double>(xk.data(), static_cast<std::size_t>(xk.size())),
        std::span<const double>(U_new[sk].data(),
                                static_cast<std::size_t>(U_new[sk].size())),
        k);
    cost += ocp.dt * lk;
    alc += al_stage_value(ocp, al, k, xk, U_new[sk]);
    VectorXd& xn = r.x[sk + 1];
    try {
      ocp.dynamics->step(
          std::span<const double>(xk.data(), static_cast<std::size_t>(xk.size())),
          std::span<const double>(U_new[sk].data(),
                                  static_cast<std::size_t>(U_new[sk].size())),
          std::span<double>(xn.data(), static_cast<std::size_t>(xn.size())));
    } catch (const std::runtime_error&) {
      r.bad_step = k;
      return r;
    }
    if (!xn.allFinite() || !std::isfinite(cost) || !std::isfinite(alc)) {
      r.bad_step = k;
      return r;
    }
  }
  const VectorXd& xN = r.x[static_cast<std::size_t>(ocp.N)];
  cost += ocp.terminal->value(
      std::span<const double>(xN.data(), static_cast<std::size_t>(xN.size())));
  if (!std::isfinite(cost)) {
    r.bad_step = ocp.N;
    return r;
  }
  r.true_cost = cost;
  r.al_cost = cost + alc;
  r.finite = true;
  return r;
}

struct BackwardOut {
  std::vector<VectorXd> kff;
  std::vector<MatrixXd> K;
  double dv1 = 0, dv2 = 0;
  bool ok = false;
};

BackwardOut backward_pass(const OcpSpec& ocp,
                          const std::vector<MatrixXd>& A,
                          const std::vector<MatrixXd>& B,
                          const std::vector<StageExpansion>& ex,
                          const VectorXd& lNx, const MatrixXd& lNxx,
                          double reg) {
  const int nx = ocp.nx(), nu = ocp.nu(), N = ocp.N;
  BackwardOut out;
  out.kff.assign(static_cast<std::size_t>(N), VectorXd::Zero(nu));
  out.K.assign(static_cast<std::size_t>(N), MatrixXd::Zero(nu, nx));

  VectorXd Vx = lNx;
  MatrixXd Vxx = lNxx;
  for (int k = N - 1; k >= 0; --k) {
    const std::size_t sk = static_cast<std::size_t>(k);
    const VectorXd Qx = ex[sk].lx + A[sk].transpose() * Vx;
    const VectorXd Qu = ex[sk].lu + B[sk].transpose() * Vx;
    const MatrixXd Qxx = ex[sk].lxx + A[sk].transpose() * Vxx * A[sk];
    const MatrixXd Quu = ex[sk].luu + B[sk].transpose() * Vxx * B[sk];
    const MatrixXd Qux = ex[sk].lux + B[sk].transpose() * Vxx * A[sk];

    MatrixXd Quu_reg = Quu + reg * MatrixXd::Identity(nu, nu);
    Eigen::LLT<MatrixXd> llt(Quu_reg);
    if (llt.info() != Eigen::Success) return out;  // not PD; caller raises reg

    out.kff[sk] = -llt.solve(Qu);
    out.K[sk] = -llt.solve(Qux);
    out.dv1 += out.kff[sk].dot(Qu);
    out.dv2 += 0.5 * out.kff[sk].dot(Quu_reg * out.kff[sk]);

    Vx = Qx + out.K[sk].transpose() * Quu_reg * out.kff[sk] +
         out.K[sk].transpose() * Qu + Qux.transpose() * out.kff[sk];
    Vxx = Qxx + out.K[sk].transpose() * Quu_reg * out.K[sk] +
          out.K[sk].transpose() * Qux + Qux.transpose() * out.K[sk];
    Vxx = 0.5 * (Vxx + Vxx.transpose()).eval();
  }
  out.ok = true;
  return out;
}

}  // namespace

double evaluate_objective(const OcpSpec& ocp, const std::vector<VectorXd>& x,
                          const std::vector<VectorXd>& u) {
  double cost = 0.0;
  for (int k = 0; k < ocp.N; ++k) {
    const VectorXd& xk = x[static_cast<std::size_t>(k)];
    const VectorXd& uk = u[static_cast<std::size_t>(k)];
    cost += ocp.dt * ocp.stage->value(
                         std::span<const double>(xk.data(),
                                                 static_cast<std::size_t>(xk.size())),
                         std::span<const double>(uk.data(),
                                                 static_cast<std::size_t>(uk.size())),
                         k);
  }
  const VectorXd& xN = x[static_cast<std::size_t>(ocp.N)];
  return cost + ocp.terminal->value(std::span<const double>(
                    xN.data(), static_cast<std::size_t>(xN.size())));
}

double max_constraint_violation(const OcpSpec& ocp,
                                const std::vector<VectorXd>& x,
                                const std::vector<VectorXd>& u) {
  double viol = 0.0;
  VectorXd c;
  for (int k = 0; k < ocp.N; ++k) {
    for (const auto& con : ocp.equalities) {
      eval_constraint(*con, x[static_cast<std::size_t>(k)],
                      u[static_cast<std::size_t>(k)], k, c);
      viol = std::max(viol, c.cwiseAbs().maxCoeff());
    }
    for (const auto& con : ocp.inequalities) {
      eval_constraint(*con, x[static_cast<std::size_t>(k)],
                      u[static_cast<std::size_t>(k)], k, c);
      viol = std::max(viol, c.cwiseMax(0.0).maxCoeff());
    }
  }
  return viol;
}

Solution solve(const OcpSpec& ocp, const SolverConfig& cfg,
               const Solution* warm_start) {
  ocp.validate();
  cfg.validate();
  const int nx = ocp.nx(), nu = ocp.nu(), N = ocp.N;
  (void)nx;

  std::vector<VectorXd> U(static_cast<std::size_t>(N), VectorXd::Zero(nu));
  if (warm_start && !warm_start->u.empty()) {
    for (int k = 0; k < N; ++k) {
      const std::size_t src = std::min(static_cast<std::size_t>(k),
                                       warm_start->u.size() - 1);
      if (warm_start->u[src].size() == nu)
        U[static_cast<std::size_t>(k)] = warm_start->u[src];
    }
  }

  const bool constrained =
      !ocp.equalities.empty() || !ocp.inequalities.empty();
  AlState al = init_al(ocp, cfg.penalty_init);

  Solution sol;
  sol.trace.reserve(64);

  RolloutResult cur = rollout(ocp, al, U);
  if (!cur.finite) {
    sol.status = SolveStatus::diverged;
    sol.diverged_at = 0;
    sol.x = std::move(cur.x);
    sol.u = std::move(U);
    sol.objective = std::numeric_limits<double>::infinity();
    sol.max_violation = std::numeric_limits<double>::infinity();
    return sol;
  }

  double reg = cfg.reg_init;
  int total_inner = 0;

  // best-so-far snapshot for max-iter exits
  bool have_best = false;
  double best_viol = std::numeric_limits<double>::infinity();
  double best_cost = std::numeric_limits<double>::infinity();
  std::vector<VectorXd> best_x, best_u;

  auto consider_best = [&](const std::vector<VectorXd>& X,
                           const std::vector<VectorXd>& Uc, double cost,
                           double viol) {
    const bool feas = viol <= cfg.constraint_tol;
    const bool best_feas = best_viol <= cfg.constraint_tol;
    bool better;
    if (feas != best_feas)
      better = feas;
    else if (feas)
      better = cost < best_cost;
    else
      better = viol < best_viol;
    if (!have_best || better) {
      have_best = true;
      best_viol = viol;
      best_cost = cost;
      best_x = X;
      best_u = Uc;
    }
  };

  bool converged = false;
  try {
    const int outer_rounds = constrained ? cfg.max_outer : 1;
    for (int outer = 0; outer < outer_rounds; ++outer) {
      bool inner_converged = false;
      for (int inner = 0; inner < cfg.max_inner; ++inner) {
        // expansions around the current trajectory
        std::vector<MatrixXd> A(static_cast<std::size_t>(N)),
            B(static_cast<std::size_t>(N));
        std::vector<StageExpansion> ex(static_cast<std::size_t>(N));
        for (int k = 0; k < N; ++k) {
          const std::size_t sk = static_cast<std::size_t>(k);
          const VectorXd& xk = cur.x[sk];
          const VectorXd& uk = U[sk];
          ocp.dynamics->linearize(
              std::span<const double>(xk.data(),
                                      static_cast<std::size_t>(xk.size())),
              std::span<const double>(uk.data(),
                                      static_cast<std::size_t>(uk.size())),
              A[sk], B[sk]);
          ocp.stage->expand(
              std::span<const double>(xk.data(),
                                      static_cast<std::size_t>(xk.size())),
              std::span<const double>(uk.data(),
                                      static_cast<std::size_t>(uk.size())),
              k, ex[sk]);
          ex[sk].lx *= ocp.dt;
          ex[sk].lu *= ocp.dt;
          ex[sk].lxx *= ocp.dt;
          ex[sk].luu *= ocp.dt;
          ex[sk].lux *= ocp.dt;
          al_stage_expand(ocp, al, k, xk, uk, ex[sk]);
        }
        VectorXd lNx;
        MatrixXd lNxx;
        const VectorXd& xN = cur.x[static_cast<std::size_t>(N)];
        ocp.terminal->expand(
            std::span<const double>(xN.data(),
                                    static_cast<std::size_t>(xN.size())),
            lNx, lNxx);

        BackwardOut bw;
        while (true) {
          bw = backward_pass(ocp, A, B, ex, lNx, lNxx, reg);
          if (bw.ok) break;
          reg *= cfg.reg_scale;
          if (reg > cfg.reg_max) break;
        }
        if (!bw.ok) {
          inner_converged = true;  // cannot improve at max regularization
          break;
        }

        // expected improvement too small -> local optimum of the AL problem
        if (std::abs(bw.dv1) + std::abs(bw.dv2) <
            cfg.cost_tol * std::max(1.0, std::abs(cur.al_cost))) {
          inner_converged = true;
          break;
        }

        bool accepted = false;
        std::vector<VectorXd> U_new;
        for (double alpha = 1.0; alpha >= cfg.ls_min_step;
             alpha *= cfg.ls_backtrack) {
          RolloutResult cand =
              feedback_rollout(ocp, al, cur.x, U, bw.kff, bw.K, alpha, U_new);
          if (!cand.finite || cand.al_cost > cur.al_cost) continue;
          // accepted: never increases the augmented objective
          const double rel_dec = (cur.al_cost - cand.al_cost) /
                                 std::max(1.0, std::abs(cur.al_cost));
          cur = std::move(cand);
          U = U_new;
          accepted = true;
          ++total_inner;
          reg = std::max(reg * 0.5, 1e-12);
          sol.trace.push_back(IterStat{outer, inner, cur.al_cost,
                                       cur.true_cost, -1.0, reg, alpha});
          if (rel_dec < cfg.cost_tol) inner_converged = true;
          break;
        }
        if (!accepted) {
          reg *= cfg.reg_scale;
          if (reg > cfg.reg_max) {
            inner_converged = true;
            break;
          }
          continue;
        }
        if (inner_converged) break;
      }

      const double viol = max_constraint_violation(ocp, cur.x, U);
      if (!sol.trace.empty()) sol.trace.back().violation = viol;
      consider_best(cur.x, U, cur.true_cost, viol);

      if (inner_converged && viol <= cfg.constraint_tol) {
        converged = true;
        break;
      }
      if (!constrained) break;
      if (outer + 1 < outer_rounds) {
        update_multipliers(ocp, al, cur.x, U);
        al.mu *= cfg.penalty_growth;
        // re-anchor the AL objective under the new multipliers
        cur = rollout(ocp, al, U);
        if (!cur.finite) throw ad::NonFiniteError("al re-anchor", -1);
        reg = cfg.reg_init;
      }
    }
  } catch (const std::runtime_error&) {
    sol.status = SolveStatus::diverged;
    sol.diverged_at = total_inner;
    sol.x = std::move(cur.x);
    sol.u = std::move(U);
    sol.objective = cur.finite ? cur.true_cost
                               : std::numeric_limits<double>::infinity();
    sol.max_violation = std::numeric_limits<double>::infinity();
    sol.iterations = total_inner;
    return sol;
  }

  sol.iterations = total_inner;
  if (converged) {
    sol.status = SolveStatus::converged;
    sol.x = cur.x;
    sol.u = U;
    sol.objective = cur.true_cost;
    sol.max_violation = max_constraint_violation(ocp, cur.x, U);
  } else {
    sol.status = SolveStatus::max_iter;
    if (have_best) {
      sol.x = best_x;
      sol.u = best_u;
      sol.objective = best_cost;
      sol.max_violation = best_viol;
    } else {
      sol.x = cur.x;
      sol.u = U;
      sol.objective = cur.true_cost;
      sol.max_violation = max_constraint_violation(ocp, cur.x, U);
    }
  }
  return sol;
}

}  // namespace ctrlab::mpc
