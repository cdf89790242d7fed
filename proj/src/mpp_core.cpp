#include "mppinvest/mpp_core.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <mutex>
#include <sstream>

#include <Eigen/LU>
#include <Eigen/QR>

namespace mppinvest {

ActiveSetSignature::ActiveSetSignature(std::vector<int> r) : rows(std::move(r)) {
  std::sort(rows.begin(), rows.end());
  rows.erase(std::unique(rows.begin(), rows.end()), rows.end());
}

std::uint64_t ActiveSetSignature::hash() const {
  std::uint64_t h = 1469598103934665603ull;  // FNV-1a
  for (int v : rows) {
    auto u = static_cast<std::uint32_t>(v);
    for (int k = 0; k < 4; ++k) {
      h ^= (u >> (8 * k)) & 0xffu;
      h *= 1099511628211ull;
    }
  }
  return h;
}

std::string ActiveSetSignature::str() const {
  std::ostringstream os;
  os << '{';
  for (std::size_t k = 0; k < rows.size(); ++k) os << (k ? "," : "") << rows[k];
  os << '}';
  return os.str();
}

Mat CriticalRegion::ineq_dual_M() const {
  Mat out = Mat::Zero(num_ineq, M.cols());
  for (int k = 0; k < num_active(); ++k) out.row(signature.rows[k]) = M.row(num_vars + k);
  return out;
}

Vec CriticalRegion::ineq_dual_r() const {
  Vec out = Vec::Zero(num_ineq);
  for (int k = 0; k < num_active(); ++k) out[signature.rows[k]] = r[num_vars + k];
  return out;
}

Mat build_K(const ParametricProblem& problem, const ActiveSetSignature& signature) {
  const int n = problem.num_vars();
  const int w = static_cast<int>(signature.rows.size());
  Mat K(w + problem.num_eq(), n);
  for (int k = 0; k < w; ++k) {
    const int j = signature.rows[k];
    if (j < 0 || j >= problem.num_ineq()) {
      throw std::out_of_range("signature row " + std::to_string(j) + " out of range");
    }
    K.row(k) = problem.A.row(j);
  }
  if (problem.num_eq()) K.bottomRows(problem.num_eq()) = problem.B;
  return K;
}

bool licq_holds(const Mat& K) {
  if (K.rows() == 0) return true;
  if (K.rows() > K.cols()) return false;
  Eigen::ColPivHouseholderQR<Mat> qr(K.transpose());
  const double norm = K.norm();
  if (norm == 0.0) return false;
  const auto& R = qr.matrixR();
  int rank = 0;
  for (Eigen::Index i = 0; i < std::min(R.rows(), R.cols()); ++i) {
    if (std::abs(R(i, i)) > 1e-9 * norm) ++rank;
  }
  return rank == K.rows();
}

CriticalRegion region_from_solution(const ParametricProblem& problem,
                                    const PrimalDualSolution& solution) {
  if (solution.status != SolveStatus::Optimal) {
    throw RegionUnavailable("solution status is " + to_string(solution.status));
  }
  CriticalRegion reg;
  reg.signature = ActiveSetSignature(solution.active_set);
  const int n = problem.num_vars();
  const int mi = problem.num_ineq();
  const int me = problem.num_eq();
  const int q = problem.num_params();
  const int w = reg.num_active();
  const int wk = w + me;
  reg.num_vars = n;
  reg.num_ineq = mi;
  reg.num_eq = me;

  const Mat K = build_K(problem, reg.signature);
  if (!licq_holds(K)) throw RegionUnavailable("LICQ fails for active set " + reg.signature.str());

  reg.E_w.resize(wk, q);
  reg.h_w.resize(wk);
  for (int k = 0; k < w; ++k) {
    reg.E_w.row(k) = problem.E.row(reg.signature.rows[k]);
    reg.h_w[k] = problem.b[reg.signature.rows[k]];
  }
  if (me) {
    reg.E_w.bottomRows(me) = problem.F;
    reg.h_w.tail(me) = problem.y;
  }
  reg.H = problem.H;

  const bool lp = problem.H.size() == 0 || problem.H.cwiseAbs().maxCoeff() == 0.0;
  reg.M.resize(n + wk, q);
  reg.r.resize(n + wk);
  if (lp) {
    if (wk != n) {
      throw RegionUnavailable("linear case needs a square K, got " + std::to_string(wk) + "x" +
                              std::to_string(n));
    }
    reg.kind = RegionKind::MPLP;
    Eigen::PartialPivLU<Mat> lu(K);
    reg.M.topRows(n) = lu.solve(reg.E_w);
    reg.r.head(n) = lu.solve(reg.h_w);
    const Mat Kt = K.transpose();
    Eigen::PartialPivLU<Mat> lut(Kt);
    reg.M.bottomRows(wk) = -lut.solve(problem.C);
    reg.r.tail(wk) = -lut.solve(problem.d);
  } else {
    reg.kind = RegionKind::MPQP;
    Mat blk = Mat::Zero(n + wk, n + wk);
    blk.topLeftCorner(n, n) = problem.H;
    blk.topRightCorner(n, wk) = K.transpose();
    blk.bottomLeftCorner(wk, n) = K;
    Eigen::FullPivLU<Mat> lu(blk);
    lu.setThreshold(1e-11);
    if (!lu.isInvertible()) {
      throw RegionUnavailable("KKT block matrix is singular for active set " + reg.signature.str());
    }
    Mat rhsM(n + wk, q);
    rhsM << -problem.C, reg.E_w;
    Vec rhsr(n + wk);
    rhsr << -problem.d, reg.h_w;
    reg.M = lu.solve(rhsM);
    reg.r = lu.solve(rhsr);
  }

  // Polytope: primal feasibility of the inactive rows, dual feasibility of the active ones.
  std::vector<char> active(mi, 0);
  for (int j : reg.signature.rows) active[j] = 1;
  const auto M1 = reg.M.topRows(n);
  const auto r1 = reg.r.head(n);
  Mat PA(mi, q);
  Vec Pb(mi);
  int rows = 0;
  auto push = [&](const Vec& a, double rhs) {
    const double s = a.cwiseAbs().maxCoeff();
    if (s <= 1e-14) {
      if (rhs >= -kMembershipTol) return;  // 0 <= rhs holds everywhere
      PA.row(rows) = a.transpose();
      Pb[rows++] = rhs;
      return;
    }
    PA.row(rows) = a.transpose() / s;
    Pb[rows++] = rhs / s;
  };
  for (int j = 0; j < mi; ++j) {
    if (active[j]) continue;
    Vec a = (problem.A.row(j) * M1 - problem.E.row(j)).transpose();
    push(a, problem.b[j] - problem.A.row(j).dot(r1));
  }
  for (int k = 0; k < w; ++k) {
    push(-reg.M.row(n + k).transpose(), reg.r[n + k]);
  }
  reg.poly_A = PA.topRows(rows);
  reg.poly_b = Pb.head(rows);
  return reg;
}

double max_violation(const CriticalRegion& region, const Vec& theta) {
  if (region.poly_A.rows() == 0) return -std::numeric_limits<double>::infinity();
  return (region.poly_A * theta - region.poly_b).maxCoeff();
}

bool contains(const CriticalRegion& region, const Vec& theta, double tol) {
  if (theta.size() != region.M.cols()) return false;
  for (Eigen::Index i = 0; i < region.poly_A.rows(); ++i) {
    if (region.poly_A.row(i).dot(theta) > region.poly_b[i] + tol) return false;
  }
  return true;
}

PrimalDualSolution evaluate(const CriticalRegion& region, const Vec& theta) {
  if (!contains(region, theta)) {
    throw ContractViolation("theta lies outside region " + region.signature.str() +
                            " (violation " + std::to_string(max_violation(region, theta)) + ")");
  }
  const int n = region.num_vars;
  const int w = region.num_active();
  const Vec z = region.M * theta + region.r;
  PrimalDualSolution s;
  s.p = z.head(n);
  s.ineq_duals = Vec::Zero(region.num_ineq);
  for (int k = 0; k < w; ++k) s.ineq_duals[region.signature.rows[k]] = z[n + k];
  s.eq_duals = z.tail(region.num_eq);
  s.active_set = region.signature.rows;
  const Vec nu = z.tail(w + region.num_eq);
  s.objective = -0.5 * s.p.dot(region.H * s.p) - nu.dot(region.h_w + region.E_w * theta);
  s.status = SolveStatus::Optimal;
  return s;
}

const CriticalRegion* RegionCache::find(const Vec& theta, double tol) const {
  std::shared_lock lock(mutex_);
  for (const auto& reg : regions_) {
    if (contains(reg, theta, tol)) return &reg;
  }
  return nullptr;
}

const CriticalRegion* RegionCache::get(const ActiveSetSignature& signature) const {
  std::shared_lock lock(mutex_);
  auto it = index_.find(signature);
  return it == index_.end() ? nullptr : &regions_[it->second];
}

std::pair<const CriticalRegion*, bool> RegionCache::insert(CriticalRegion region) {
  std::unique_lock lock(mutex_);
  auto it = index_.find(region.signature);
  if (it != index_.end()) return {&regions_[it->second], false};
  index_.emplace(region.signature, regions_.size());
  regions_.push_back(std::move(region));
  return {&regions_.back(), true};
}

std::size_t RegionCache::size() const {
  std::shared_lock lock(mutex_);
  return regions_.size();
}

const CriticalRegion& RegionCache::at(std::size_t i) const {
  std::shared_lock lock(mutex_);
  return regions_.at(i);
}

void RegionCache::clear() {
  std::unique_lock lock(mutex_);
  regions_.clear();
  index_.clear();
}

namespace {

nlohmann::json matrix_json(const Mat& m) {
  nlohmann::json j = nlohmann::json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    nlohmann::json row = nlohmann::json::array();
    for (Eigen::Index k = 0; k < m.cols(); ++k) row.push_back(m(i, k));
    j.push_back(std::move(row));
  }
  return j;
}

nlohmann::json vector_json(const Vec& v) {
  nlohmann::json j = nlohmann::json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) j.push_back(v[i]);
  return j;
}

}  // namespace

nlohmann::json region_to_json(const CriticalRegion& region) {
  return {{"signature", region.signature.rows},
          {"kind", region.kind == RegionKind::MPQP ? "mpqp" : "mplp"},
          {"M", matrix_json(region.M)},
          {"r", vector_json(region.r)},
          {"poly_A", matrix_json(region.poly_A)},
          {"poly_b", vector_json(region.poly_b)}};
}

void write_region_dump(const RegionCache& cache, const std::filesystem::path& path) {
  nlohmann::json j = nlohmann::json::array();
  for (std::size_t i = 0; i < cache.size(); ++i) j.push_back(region_to_json(cache.at(i)));
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write region dump '" + path.string() + "'");
  out << j.dump(1) << '\n';
}

}  // namespace mppinvest
