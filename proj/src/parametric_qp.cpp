#include "mppinvest/parametric_qp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include <Eigen/Eigenvalues>
#include <Eigen/LU>
#include <Eigen/QR>

namespace mppinvest {

std::string to_string(SolveStatus s) {
  switch (s) {
    case SolveStatus::Optimal: return "optimal";
    case SolveStatus::Infeasible: return "infeasible";
    case SolveStatus::Unbounded: return "unbounded";
    case SolveStatus::Degenerate: return "degenerate";
  }
  return "unknown";
}

void ParametricProblem::validate() const {
  const auto n = H.rows();
  const auto q = C.cols();
  auto fail = [](const std::string& what) { throw std::invalid_argument("ParametricProblem: " + what); };
  if (H.cols() != n) fail("H must be square");
  if (C.rows() != n) fail("C must have n rows");
  if (d.size() != n) fail("d must have length n");
  if (A.cols() != n && A.rows() > 0) fail("A must have n columns");
  if (E.rows() != A.rows() || (E.cols() != q && E.rows() > 0)) fail("E must be m_i x q");
  if (b.size() != A.rows()) fail("b must have length m_i");
  if (B.cols() != n && B.rows() > 0) fail("B must have n columns");
  if (F.rows() != B.rows() || (F.cols() != q && F.rows() > 0)) fail("F must be m_e x q");
  if (y.size() != B.rows()) fail("y must have length m_e");
  if (!labels.empty() && static_cast<Eigen::Index>(labels.size()) != A.rows() + B.rows()) {
    fail("labels must name every row");
  }
  if ((H - H.transpose()).cwiseAbs().maxCoeff() > 1e-12 * std::max(1.0, H.cwiseAbs().maxCoeff())) {
    fail("H must be symmetric");
  }
}

double KktResiduals::max() const {
  return std::max({stationarity, primal_feas, dual_feas, comp_slack});
}

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double inf_norm(const Vec& v) { return v.size() ? v.cwiseAbs().maxCoeff() : 0.0; }

// Incremental orthonormal basis used to pick linearly independent rows.
class RowBasis {
 public:
  explicit RowBasis(Eigen::Index n) : Q_(n, 0) {}

  bool try_add(const Vec& a) {
    const double na = a.norm();
    if (na == 0.0) return false;
    Vec r = a;
    for (int pass = 0; pass < 2; ++pass) {
      if (Q_.cols() > 0) r -= Q_ * (Q_.transpose() * r);
    }
    const double nr = r.norm();
    if (nr <= 1e-10 * na) return false;
    Q_.conservativeResize(Eigen::NoChange, Q_.cols() + 1);
    Q_.col(Q_.cols() - 1) = r / nr;
    return true;
  }

 private:
  Mat Q_;
};

enum class CoreExit { Optimal, Unbounded, Stalled };

// Primal active-set iteration for a convex QP whose constraints are the rows
// of G: rows [0, mi) are inequalities G_j p <= h_j, the rest equalities.
// p must be feasible on entry and W must hold independent rows that are
// tight at p (equalities included).
class ActiveSetCore {
 public:
  ActiveSetCore(const Mat& H, const Vec& g, const Mat& G, const Vec& h, int mi, int max_iter)
      : H_(H), g_(g), G_(G), h_(h), mi_(mi), max_iter_(max_iter) {
    row_norm_.resize(G.rows());
    for (Eigen::Index j = 0; j < G.rows(); ++j) row_norm_[j] = std::max(G.row(j).norm(), 1e-300);
    h_zero_ = H.size() == 0 || H.cwiseAbs().maxCoeff() == 0.0;
  }

  CoreExit run(Vec& p, std::vector<int>& W, Vec& nu, int& iters) {
    const Eigen::Index n = p.size();
    std::vector<char> in_w(G_.rows(), 0);
    for (int j : W) in_w[j] = 1;
    bool stationary = false;
    bool bland = false;
    int zero_steps = 0;

    for (;;) {
      if (++iters > max_iter_) return CoreExit::Stalled;
      const Vec gr = H_ * p + g_;
      const double gscale = std::max(1.0, inf_norm(gr));
      Mat Kt(n, static_cast<Eigen::Index>(W.size()));
      for (std::size_t k = 0; k < W.size(); ++k) Kt.col(k) = G_.row(W[k]).transpose();
      Eigen::HouseholderQR<Mat> qr(Kt);
      Mat Z;
      if (W.empty()) {
        Z = Mat::Identity(n, n);
      } else {
        Mat Q = qr.householderQ() * Mat::Identity(n, n);
        Z = Q.rightCols(n - static_cast<Eigen::Index>(W.size()));
      }

      Vec zg = Z.transpose() * gr;
      if (!stationary && Z.cols() > 0 && inf_norm(zg) > 1e-12 * gscale) {
        Vec d;
        bool zero_curvature = false;
        Mat Hz = Z.transpose() * H_ * Z;
        if (h_zero_) {
          d = -(Z * zg);
          zero_curvature = true;
        } else {
          Eigen::SelfAdjointEigenSolver<Mat> es(Hz);
          const Vec& ev = es.eigenvalues();
          const Mat& V = es.eigenvectors();
          const double thr = 1e-10 * std::max(1.0, ev.cwiseAbs().maxCoeff());
          Vec c = V.transpose() * zg;
          Vec c0 = Vec::Zero(c.size());
          Vec dz = Vec::Zero(c.size());
          for (Eigen::Index k = 0; k < ev.size(); ++k) {
            if (ev[k] <= thr) {
              c0[k] = c[k];
            } else {
              dz[k] = -c[k] / ev[k];
            }
          }
          if (inf_norm(c0) > 1e-12 * gscale) {
            d = -(Z * (V * c0));
            zero_curvature = true;
          } else {
            d = Z * (V * dz);
          }
        }

        int block = -1;
        double alpha_block = kInf;
        const double dn = d.norm();
        for (int j = 0; j < mi_; ++j) {
          if (in_w[j]) continue;
          const double ad = G_.row(j).dot(d);
          if (ad <= 1e-12 * row_norm_[j] * dn) continue;
          const double slack = std::max(0.0, h_[j] - G_.row(j).dot(p));
          const double a = slack / ad;
          bool better = a < alpha_block;
          if (!better && block >= 0 && a == alpha_block && !bland) {
            better = ad / row_norm_[j] > G_.row(block).dot(d) / row_norm_[block];
          }
          if (better) {
            alpha_block = a;
            block = j;
          }
        }

        double alpha;
        if (zero_curvature) {
          if (block < 0) return CoreExit::Unbounded;
          alpha = alpha_block;
        } else {
          alpha = std::min(1.0, alpha_block);
        }
        p += alpha * d;
        if (alpha * inf_norm(d) <= 1e-15 * std::max(1.0, inf_norm(p))) {
          if (++zero_steps > 50) bland = true;
        } else {
          zero_steps = 0;
          bland = false;
        }
        if (block >= 0 && (zero_curvature || alpha_block < 1.0)) {
          W.push_back(block);
          in_w[block] = 1;
        } else {
          stationary = true;
        }
        continue;
      }

      // Stationary on the current face: check multiplier signs.
      nu = W.empty() ? Vec() : Vec(qr.solve(-gr));
      const double dual_tol = 1e-9 * gscale;
      int drop = -1;
      double worst = 0.0;
      for (std::size_t k = 0; k < W.size(); ++k) {
        const int j = W[k];
        if (j >= mi_) continue;
        const double v = nu[k] * row_norm_[j];
        if (v < -dual_tol) {
          if (bland) {
            if (drop < 0 || j < W[drop]) drop = static_cast<int>(k);
          } else if (v < worst) {
            worst = v;
            drop = static_cast<int>(k);
          }
        }
      }
      if (drop < 0) return CoreExit::Optimal;
      in_w[W[drop]] = 0;
      W.erase(W.begin() + drop);
      stationary = false;
    }
  }

  // For H = 0: slide along the optimal face (objective constant) until the
  // working set pins a vertex or the face turns out to be unbounded.
  void complete_vertex(Vec& p, std::vector<int>& W) {
    const Eigen::Index n = p.size();
    std::vector<char> in_w(G_.rows(), 0);
    for (int j : W) in_w[j] = 1;
    while (static_cast<Eigen::Index>(W.size()) < n) {
      Mat Kt(n, static_cast<Eigen::Index>(W.size()));
      for (std::size_t k = 0; k < W.size(); ++k) Kt.col(k) = G_.row(W[k]).transpose();
      Mat Z;
      if (W.empty()) {
        Z = Mat::Identity(n, n);
      } else {
        Eigen::HouseholderQR<Mat> qr(Kt);
        Mat Q = qr.householderQ() * Mat::Identity(n, n);
        Z = Q.rightCols(n - static_cast<Eigen::Index>(W.size()));
      }
      bool moved = false;
      for (Eigen::Index c = 0; c < Z.cols() && !moved; ++c) {
        for (double sgn : {1.0, -1.0}) {
          const Vec d = sgn * Z.col(c);
          int block = -1;
          double alpha_block = kInf;
          for (int j = 0; j < mi_; ++j) {
            if (in_w[j]) continue;
            const double ad = G_.row(j).dot(d);
            if (ad <= 1e-12 * row_norm_[j]) continue;
            const double a = std::max(0.0, h_[j] - G_.row(j).dot(p)) / ad;
            if (a < alpha_block) {
              alpha_block = a;
              block = j;
            }
          }
          if (block >= 0) {
            p += alpha_block * d;
            W.push_back(block);
            in_w[block] = 1;
            moved = true;
            break;
          }
        }
      }
      if (!moved) return;
    }
  }

 private:
  const Mat& H_;
  const Vec& g_;
  const Mat& G_;
  const Vec& h_;
  int mi_;
  int max_iter_;
  bool h_zero_ = false;
  std::vector<double> row_norm_;
};

struct BlockSolve {
  bool ok = false;
  Vec p;
  Vec nu;
};

// [H K'; K 0] [p; nu] = [-g; hW]
BlockSolve solve_block(const Mat& H, const Vec& g, const Mat& K, const Vec& hW) {
  const Eigen::Index n = H.rows(), w = K.rows();
  Mat M = Mat::Zero(n + w, n + w);
  M.topLeftCorner(n, n) = H;
  M.topRightCorner(n, w) = K.transpose();
  M.bottomLeftCorner(w, n) = K;
  Vec rhs(n + w);
  rhs << -g, hW;
  Eigen::FullPivLU<Mat> lu(M);
  lu.setThreshold(1e-11);
  BlockSolve out;
  if (!lu.isInvertible()) return out;
  Vec z = lu.solve(rhs);
  out.ok = true;
  out.p = z.head(n);
  out.nu = z.tail(w);
  return out;
}

Mat rows_of(const Mat& G, const std::vector<int>& idx) {
  Mat K(static_cast<Eigen::Index>(idx.size()), G.cols());
  for (std::size_t k = 0; k < idx.size(); ++k) K.row(k) = G.row(idx[k]);
  return K;
}

Vec entries_of(const Vec& h, const std::vector<int>& idx) {
  Vec v(static_cast<Eigen::Index>(idx.size()));
  for (std::size_t k = 0; k < idx.size(); ++k) v[k] = h[idx[k]];
  return v;
}

PrimalDualSolution package(const Mat& H, const Vec& g, const Mat& A, const Vec& b, const Mat& B,
                           const Vec& p, const std::vector<int>& W, const Vec& nu, int mi,
                           SolveStatus status, int iters, double act_tol) {
  PrimalDualSolution s;
  s.p = p;
  s.ineq_duals = Vec::Zero(mi);
  s.eq_duals = Vec::Zero(B.rows());
  for (std::size_t k = 0; k < W.size(); ++k) {
    if (W[k] < mi) {
      s.ineq_duals[W[k]] = nu[k];
      s.active_set.push_back(W[k]);
    } else {
      s.eq_duals[W[k] - mi] = nu[k];
    }
  }
  std::sort(s.active_set.begin(), s.active_set.end());
  std::vector<char> in_w(mi, 0);
  for (int j : s.active_set) in_w[j] = 1;
  for (int j = 0; j < mi; ++j) {
    if (!in_w[j] && std::abs(b[j] - A.row(j).dot(p)) <= act_tol) s.weakly_active.push_back(j);
  }
  s.objective = 0.5 * p.dot(H * p) + g.dot(p);
  s.status = status;
  s.iterations = iters;
  return s;
}

PrimalDualSolution failed(SolveStatus status, Eigen::Index n, int mi, Eigen::Index me, int iters) {
  PrimalDualSolution s;
  s.p = Vec::Zero(n);
  s.ineq_duals = Vec::Zero(mi);
  s.eq_duals = Vec::Zero(me);
  s.status = status;
  s.iterations = iters;
  s.objective = status == SolveStatus::Unbounded ? -kInf : kInf;
  return s;
}

bool feasible(const Mat& G, const Vec& h, int mi, const Vec& p, double tol) {
  for (Eigen::Index j = 0; j < G.rows(); ++j) {
    const double r = G.row(j).dot(p) - h[j];
    if (j < mi ? r > tol : std::abs(r) > tol) return false;
  }
  return true;
}

}  // namespace

PrimalDualSolution solve_qp(const Mat& H, const Vec& g, const Mat& A, const Vec& b, const Mat& B,
                            const Vec& y, const SolverOptions& options,
                            const std::vector<int>* warm_start) {
  const Eigen::Index n = H.rows();
  const int mi = static_cast<int>(A.rows());
  const Eigen::Index me = B.rows();
  const int m = mi + static_cast<int>(me);
  const int max_iter =
      options.max_iterations > 0 ? options.max_iterations : 50 * (static_cast<int>(n) + m) + 1000;

  Mat G(m, n);
  if (mi) G.topRows(mi) = A;
  if (me) G.bottomRows(me) = B;
  Vec h(m);
  h << b, y;
  const double scale = std::max({1.0, inf_norm(h), inf_norm(g)});
  const double dual_tol = options.kkt_tol * scale;

  // Warm start: accept the guessed working set only if its KKT point checks out.
  if (warm_start) {
    RowBasis basis(n);
    std::vector<int> W;
    for (int e = mi; e < m; ++e) {
      if (basis.try_add(G.row(e).transpose())) W.push_back(e);
    }
    bool ok = true;
    for (int j : *warm_start) {
      if (j < 0 || j >= mi || !basis.try_add(G.row(j).transpose())) {
        ok = false;
        break;
      }
      W.push_back(j);
    }
    if (ok) {
      BlockSolve bs = solve_block(H, g, rows_of(G, W), entries_of(h, W));
      if (bs.ok && feasible(G, h, mi, bs.p, options.act_tol * 1e-2)) {
        bool signs = true;
        for (std::size_t k = 0; k < W.size(); ++k) {
          if (W[k] < mi && bs.nu[k] < -dual_tol) signs = false;
        }
        Vec r = H * bs.p + g + rows_of(G, W).transpose() * bs.nu;
        if (signs && inf_norm(r) <= options.kkt_tol * scale) {
          return package(H, g, A, b, B, bs.p, W, bs.nu, mi, SolveStatus::Optimal, 0,
                         options.act_tol);
        }
      }
    }
  }

  int iters = 0;
  Vec p = Vec::Zero(n);

  // Phase 1: elastic slacks on the rows violated at the origin.
  std::vector<int> viol;
  {
    const Vec r = G * p - h;
    for (int j = 0; j < m; ++j) {
      if (j < mi ? r[j] > 0.0 : r[j] != 0.0) viol.push_back(j);
    }
    if (!viol.empty()) {
      const Eigen::Index ns = static_cast<Eigen::Index>(viol.size());
      const Eigen::Index n1 = n + ns;
      const int mi1 = mi + static_cast<int>(ns);
      Mat G1 = Mat::Zero(m + ns, n1);
      Vec h1 = Vec::Zero(m + ns);
      G1.topLeftCorner(mi, n) = G.topRows(mi);
      h1.head(mi) = h.head(mi);
      for (Eigen::Index k = 0; k < ns; ++k) G1(mi + k, n + k) = -1.0;
      G1.bottomLeftCorner(me, n) = G.bottomRows(me);
      h1.tail(me) = h.tail(me);
      Vec x = Vec::Zero(n1);
      for (Eigen::Index k = 0; k < ns; ++k) {
        const int j = viol[k];
        if (j < mi) {
          G1(j, n + k) = -1.0;
          x[n + k] = r[j];
        } else {
          const double sgn = r[j] > 0 ? 1.0 : -1.0;
          G1(ns + j, n + k) = -sgn;
          x[n + k] = std::abs(r[j]);
        }
      }
      Vec g1 = Vec::Zero(n1);
      g1.tail(ns).setOnes();
      Mat H1 = Mat::Zero(n1, n1);

      RowBasis basis(n1);
      std::vector<int> W1;
      for (int e = mi1; e < mi1 + static_cast<int>(me); ++e) {
        if (basis.try_add(G1.row(e).transpose())) W1.push_back(e);
      }
      for (int j = 0; j < mi; ++j) {
        if (std::abs(h1[j] - G1.row(j).dot(x)) <= 0.0 && basis.try_add(G1.row(j).transpose())) {
          W1.push_back(j);
        }
      }
      ActiveSetCore core(H1, g1, G1, h1, mi1, max_iter);
      Vec nu1;
      CoreExit ex = core.run(x, W1, nu1, iters);
      if (ex == CoreExit::Stalled) throw std::runtime_error("active-set phase 1 did not converge");
      const double infeas = x.tail(ns).sum();
      if (infeas > 1e-9 * std::max(1.0, inf_norm(h))) {
        return failed(SolveStatus::Infeasible, n, mi, me, iters);
      }
      p = x.head(n);
    }
  }

  // Phase 2 from the feasible point.
  RowBasis basis(n);
  std::vector<int> W;
  for (int e = mi; e < m; ++e) {
    if (basis.try_add(G.row(e).transpose())) {
      W.push_back(e);
    } else if (std::abs(G.row(e).dot(p) - h[e]) > 1e-9 * scale) {
      return failed(SolveStatus::Infeasible, n, mi, me, iters);
    }
  }
  const double snap = 1e-9 * scale;
  for (int j = 0; j < mi; ++j) {
    if (std::abs(h[j] - G.row(j).dot(p)) <= snap && basis.try_add(G.row(j).transpose())) {
      W.push_back(j);
    }
  }
  ActiveSetCore core(H, g, G, h, mi, max_iter);
  Vec nu;
  CoreExit ex = core.run(p, W, nu, iters);
  if (ex == CoreExit::Stalled) throw std::runtime_error("active-set phase 2 did not converge");
  if (ex == CoreExit::Unbounded) return failed(SolveStatus::Unbounded, n, mi, me, iters);

  const bool h_zero = n == 0 || H.cwiseAbs().maxCoeff() == 0.0;
  if (h_zero && options.vertex_for_lp && static_cast<Eigen::Index>(W.size()) < n) {
    core.complete_vertex(p, W);
  }

  SolveStatus status = SolveStatus::Degenerate;
  Mat K = rows_of(G, W);
  BlockSolve bs = solve_block(H, g, K, entries_of(h, W));
  if (bs.ok) {
    status = SolveStatus::Optimal;
    if (feasible(G, h, mi, bs.p, options.act_tol)) p = bs.p;
    nu = bs.nu;
  } else {
    const Vec gr = H * p + g;
    nu = W.empty() ? Vec() : Vec(K.transpose().colPivHouseholderQr().solve(-gr));
  }
  return package(H, g, A, b, B, p, W, nu, mi, status, iters, options.act_tol);
}

PrimalDualSolution solve(const ParametricProblem& problem, const Vec& theta,
                         const SolverOptions& options, const std::vector<int>* warm_start) {
  if (theta.size() != problem.num_params()) {
    throw std::invalid_argument("theta has length " + std::to_string(theta.size()) +
                                ", expected " + std::to_string(problem.num_params()));
  }
  return solve_qp(problem.H, problem.linear_term(theta), problem.A, problem.ineq_rhs(theta),
                  problem.B, problem.eq_rhs(theta), options, warm_start);
}

KktResiduals kkt_residuals(const ParametricProblem& problem, const Vec& theta,
                           const PrimalDualSolution& s) {
  KktResiduals r;
  const Vec& p = s.p;
  Vec stat = problem.H * p + problem.linear_term(theta);
  if (problem.num_ineq()) stat += problem.A.transpose() * s.ineq_duals;
  if (problem.num_eq()) stat += problem.B.transpose() * s.eq_duals;
  r.stationarity = inf_norm(stat);
  const Vec slack = problem.ineq_rhs(theta) - problem.A * p;
  for (Eigen::Index j = 0; j < slack.size(); ++j) {
    r.primal_feas = std::max(r.primal_feas, -slack[j]);
    r.dual_feas = std::max(r.dual_feas, -s.ineq_duals[j]);
    r.comp_slack = std::max(r.comp_slack, std::abs(s.ineq_duals[j] * slack[j]));
  }
  if (problem.num_eq()) {
    r.primal_feas = std::max(r.primal_feas, inf_norm(problem.B * p - problem.eq_rhs(theta)));
  }
  return r;
}

PrimalDualSolution brute_force_solve(const ParametricProblem& problem, const Vec& theta,
                                     const SolverOptions& options) {
  const Mat& H = problem.H;
  const Vec g = problem.linear_term(theta);
  const Mat& A = problem.A;
  const Vec b = problem.ineq_rhs(theta);
  const Mat& B = problem.B;
  const Vec y = problem.eq_rhs(theta);
  const Eigen::Index n = H.rows();
  const int mi = problem.num_ineq();
  const Eigen::Index me = B.rows();
  const double scale = std::max({1.0, inf_norm(b), inf_norm(y), inf_norm(g)});
  const double tol = 1e-9 * scale;

  // independent equality rows; the rest must hold automatically
  RowBasis basis(n);
  std::vector<int> eq_rows;
  for (Eigen::Index e = 0; e < me; ++e) {
    if (basis.try_add(B.row(e).transpose())) eq_rows.push_back(static_cast<int>(e));
  }
  const int max_size = static_cast<int>(n) - static_cast<int>(eq_rows.size());

  PrimalDualSolution best = failed(SolveStatus::Infeasible, n, mi, me, 0);
  bool found = false;
  bool any_feasible = false;
  int examined = 0;

  std::vector<int> S;
  auto visit = [&]() {
    ++examined;
    const Eigen::Index w = static_cast<Eigen::Index>(S.size() + eq_rows.size());
    Mat K(w, n);
    Vec hW(w);
    for (std::size_t k = 0; k < S.size(); ++k) {
      K.row(k) = A.row(S[k]);
      hW[k] = b[S[k]];
    }
    for (std::size_t k = 0; k < eq_rows.size(); ++k) {
      K.row(S.size() + k) = B.row(eq_rows[k]);
      hW[S.size() + k] = y[eq_rows[k]];
    }
    Mat M = Mat::Zero(n + w, n + w);
    M.topLeftCorner(n, n) = H;
    M.topRightCorner(n, w) = K.transpose();
    M.bottomLeftCorner(w, n) = K;
    Vec rhs(n + w);
    rhs << -g, hW;
    Eigen::FullPivLU<Mat> lu(M);
    lu.setThreshold(1e-11);
    Vec z;
    if (lu.isInvertible()) {
      z = lu.solve(rhs);
    } else {
      if (w > 0) {
        Eigen::FullPivLU<Mat> klu(K);
        klu.setThreshold(1e-10);
        if (klu.rank() < w) return;
      }
      z = M.completeOrthogonalDecomposition().solve(rhs);
    }
    if (inf_norm(M * z - rhs) > tol) return;
    const Vec p = z.head(n);
    const Vec nu = z.tail(w);
    if (mi && (A * p - b).maxCoeff() > tol) return;
    if (me && inf_norm(B * p - y) > tol) return;
    any_feasible = true;
    for (std::size_t k = 0; k < S.size(); ++k) {
      if (nu[k] < -tol) return;
    }
    const double obj = 0.5 * p.dot(H * p) + g.dot(p);
    if (found && obj >= best.objective - 1e-12 * std::max(1.0, std::abs(obj))) return;
    found = true;
    PrimalDualSolution s;
    s.p = p;
    s.ineq_duals = Vec::Zero(mi);
    s.eq_duals = Vec::Zero(me);
    for (std::size_t k = 0; k < S.size(); ++k) s.ineq_duals[S[k]] = nu[k];
    for (std::size_t k = 0; k < eq_rows.size(); ++k) s.eq_duals[eq_rows[k]] = nu[S.size() + k];
    s.active_set = S;
    s.objective = obj;
    s.status = SolveStatus::Optimal;
    best = std::move(s);
  };

  // subsets in order of size, lexicographic within a size
  for (int size = 0; size <= std::min(max_size, mi); ++size) {
    S.assign(size, 0);
    for (int k = 0; k < size; ++k) S[k] = k;
    for (;;) {
      visit();
      int k = size - 1;
      while (k >= 0 && S[k] == mi - size + k) --k;
      if (k < 0) break;
      ++S[k];
      for (int t = k + 1; t < size; ++t) S[t] = S[t - 1] + 1;
    }
  }

  if (!found) {
    best.status = any_feasible ? SolveStatus::Unbounded : SolveStatus::Infeasible;
    best.objective = any_feasible ? -kInf : kInf;
  } else {
    for (int j = 0; j < mi; ++j) {
      if (std::abs(b[j] - A.row(j).dot(best.p)) <= options.act_tol &&
          !std::binary_search(best.active_set.begin(), best.active_set.end(), j)) {
        best.weakly_active.push_back(j);
      }
    }
  }
  best.iterations = examined;
  return best;
}

}  // namespace mppinvest
