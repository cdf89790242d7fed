#pragma once

#include <string>
#include <vector>

#include "mppinvest/linalg.hpp"

namespace mppinvest {

/// min_p  1/2 p'Hp + (C theta + d)'p
/// s.t.   A p <= b + E theta      (duals lambda >= 0)
///        B p  = y + F theta      (duals mu)
///
/// The Lagrangian is 1/2 p'Hp + (C theta + d)'p + lambda'(Ap - E theta - b)
/// + mu'(Bp - F theta - y), so stationarity reads Hp + C theta + d + A'lambda + B'mu = 0.
struct ParametricProblem {
  Mat H, C;
  Vec d;
  Mat A, E;
  Vec b;
  Mat B, F;
  Vec y;
  std::vector<std::string> labels;  // one per inequality row, then one per equality row

  int num_vars() const { return static_cast<int>(H.rows()); }
  int num_ineq() const { return static_cast<int>(A.rows()); }
  int num_eq() const { return static_cast<int>(B.rows()); }
  int num_params() const { return static_cast<int>(C.cols()); }

  /// Throws std::invalid_argument on inconsistent dimensions or a non-symmetric H.
  void validate() const;

  Vec linear_term(const Vec& theta) const { return C * theta + d; }
  Vec ineq_rhs(const Vec& theta) const { return b + E * theta; }
  Vec eq_rhs(const Vec& theta) const { return y + F * theta; }
  double objective(const Vec& theta, const Vec& p) const {
    return 0.5 * p.dot(H * p) + linear_term(theta).dot(p);
  }
};

enum class SolveStatus { Optimal, Infeasible, Unbounded, Degenerate };

std::string to_string(SolveStatus s);

struct PrimalDualSolution {
  Vec p;
  Vec ineq_duals;
  Vec eq_duals;
  /// Working set of the active-set method: linearly independent rows with
  /// zero slack that carry the inequality duals. Sorted.
  std::vector<int> active_set;
  /// Rows with zero slack (within act_tol) that are not in active_set.
  std::vector<int> weakly_active;
  double objective = 0.0;
  SolveStatus status = SolveStatus::Infeasible;
  int iterations = 0;

  /// Optimal or Degenerate: p and the duals satisfy KKT either way.
  bool has_solution() const {
    return status == SolveStatus::Optimal || status == SolveStatus::Degenerate;
  }
};

struct SolverOptions {
  double act_tol = 1e-7;
  double kkt_tol = 1e-8;
  int max_iterations = 0;  // 0: scaled with the problem size
  /// Drive H = 0 problems to a vertex so that the working set is square.
  bool vertex_for_lp = true;
};

/// Solves the instance at a fixed theta. Status Degenerate means an optimum
/// was found but the KKT block matrix of its working set is singular, so no
/// affine solution map exists around it.
PrimalDualSolution solve(const ParametricProblem& problem, const Vec& theta,
                         const SolverOptions& options = {},
                         const std::vector<int>* warm_start = nullptr);

/// Plain QP: min 1/2 p'Hp + g'p s.t. A p <= b, B p = y.
PrimalDualSolution solve_qp(const Mat& H, const Vec& g, const Mat& A, const Vec& b,
                            const Mat& B, const Vec& y, const SolverOptions& options = {},
                            const std::vector<int>* warm_start = nullptr);

struct KktResiduals {
  double stationarity = 0.0;
  double primal_feas = 0.0;
  double dual_feas = 0.0;
  double comp_slack = 0.0;

  double max() const;
  bool within(double tol) const { return max() <= tol; }
};

KktResiduals kkt_residuals(const ParametricProblem& problem, const Vec& theta,
                           const PrimalDualSolution& solution);

/// Exhaustive oracle: every active subset of at most n inequality rows is
/// tried and the best KKT-consistent candidate kept. `iterations` reports the
/// number of subsets examined. Exponential; test-sized problems only.
PrimalDualSolution brute_force_solve(const ParametricProblem& problem, const Vec& theta,
                                     const SolverOptions& options = {});

}  // namespace mppinvest
