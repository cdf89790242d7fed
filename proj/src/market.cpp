#include "mppinvest/market.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

namespace mppinvest {

MarketModel assemble(const Network& network) {
  MarketModel m{network, {}, {}};
  MarketIndex& ix = m.index;
  ix.N = network.num_buses();
  ix.L = network.num_lines();
  const int N = ix.N, L = ix.L;
  const int n = ix.num_vars(), mi = ix.num_ineq(), q = ix.num_params();
  const Mat& S = network.ptdf();
  ParametricProblem& P = m.problem;

  P.H = Mat::Zero(n, n);
  for (int c = 0; c < kNumOwnerClasses; ++c) {
    for (int i = 0; i < N; ++i) {
      const auto oc = static_cast<OwnerClass>(c);
      P.H(ix.var(oc, i), ix.var(oc, i)) = network.unit(oc, i).quad_cost;
    }
  }
  P.C = Mat::Zero(n, q);
  P.C.leftCols(n) = Mat::Identity(n, n);
  P.d = Vec::Zero(n);

  P.A = Mat::Zero(mi, n);
  P.E = Mat::Zero(mi, q);
  P.b = Vec::Zero(mi);
  const Vec fbar = network.flow_limits();
  for (int c = 0; c < kNumOwnerClasses; ++c) {
    if (L) {
      P.A.block(0, c * N, L, N) = S;
      P.A.block(L, c * N, L, N) = -S;
    }
  }
  if (L) {
    P.E.block(0, ix.theta_load(0), L, N) = S;
    P.E.block(L, ix.theta_load(0), L, N) = -S;
    P.b.head(L) = fbar;
    P.b.segment(L, L) = fbar;
  }
  P.A.block(2 * L, 0, n, n) = Mat::Identity(n, n);
  P.E.block(2 * L, ix.theta_cap(OwnerClass::Rival, 0), n, n) = Mat::Identity(n, n);
  P.A.block(2 * L + n, 0, n, n) = -Mat::Identity(n, n);

  P.B = Mat::Ones(1, n);
  P.F = Mat::Zero(1, q);
  P.F.block(0, ix.theta_load(0), 1, N).setOnes();
  P.y = Vec::Zero(1);

  P.labels.reserve(mi + 1);
  for (int l = 0; l < L; ++l) P.labels.push_back("flow_max[" + std::to_string(l) + "]");
  for (int l = 0; l < L; ++l) P.labels.push_back("flow_min[" + std::to_string(l) + "]");
  for (const char* kind : {"cap_max", "cap_min"}) {
    for (int c = 0; c < kNumOwnerClasses; ++c) {
      for (int i = 0; i < N; ++i) {
        P.labels.push_back(std::string(kind) + "[" +
                           std::string(to_string(static_cast<OwnerClass>(c))) + "," +
                           std::to_string(i) + "]");
      }
    }
  }
  P.labels.push_back("balance");
  P.validate();
  return m;
}

Vec lmp(const MarketModel& model, const PrimalDualSolution& solution) {
  const MarketIndex& ix = model.index;
  const double lambda0 = solution.eq_duals[ix.balance_row()];
  Vec pi = Vec::Constant(ix.N, -lambda0);
  if (ix.L) {
    const Vec mu_max = solution.ineq_duals.head(ix.L);
    const Vec mu_min = solution.ineq_duals.segment(ix.L, ix.L);
    pi += model.network.ptdf().transpose() * (mu_min - mu_max);
  }
  return pi;
}

RegionMarketMap region_market_map(const MarketModel& model, const CriticalRegion& region) {
  const MarketIndex& ix = model.index;
  RegionMarketMap out;
  const Mat dM = region.ineq_dual_M();
  const Vec dr = region.ineq_dual_r();
  out.Pi = -Mat::Ones(ix.N, 1) * region.eq_dual_M().row(ix.balance_row());
  out.pi0 = Vec::Constant(ix.N, -region.eq_dual_r()[ix.balance_row()]);
  if (ix.L) {
    const Mat& S = model.network.ptdf();
    out.Pi += S.transpose() * (dM.middleRows(ix.L, ix.L) - dM.topRows(ix.L));
    out.pi0 += S.transpose() * (dr.segment(ix.L, ix.L) - dr.head(ix.L));
  }
  out.P = region.primal_M();
  out.p0 = region.primal_r();
  return out;
}

Vec own_dispatch(const MarketModel& model, const Vec& p) {
  const int N = model.index.N;
  return p.segment(model.index.var(OwnerClass::Existing, 0), N) +
         p.segment(model.index.var(OwnerClass::New, 0), N);
}

double revenue_identity_gap(const MarketModel& model, const PrimalDualSolution& solution,
                            const Vec& theta) {
  const MarketIndex& ix = model.index;
  const int N = ix.N, L = ix.L;
  const Vec& p = solution.p;
  const Vec pi = lmp(model, solution);
  const double lhs = pi.dot(own_dispatch(model, p));

  const int r0 = ix.var(OwnerClass::Rival, 0);
  const Vec p_r = p.segment(r0, N);
  const Vec c_r = theta.segment(ix.theta_cost(OwnerClass::Rival, 0), N);
  const Vec load = theta.segment(ix.theta_load(0), N);
  const Vec pbar_r = theta.segment(ix.theta_cap(OwnerClass::Rival, 0), N);
  const Vec h_r = model.problem.H.diagonal().segment(r0, N);
  const Vec gamma_max_r = solution.ineq_duals.segment(ix.cap_max_row(OwnerClass::Rival, 0), N);
  const double lambda0 = solution.eq_duals[ix.balance_row()];

  double rhs = -p_r.dot(h_r.cwiseProduct(p_r)) - c_r.dot(p_r) - gamma_max_r.dot(pbar_r) -
               lambda0 * load.sum();
  if (L) {
    const Vec mu_max = solution.ineq_duals.head(L);
    const Vec mu_min = solution.ineq_duals.segment(L, L);
    const Vec fbar = model.network.flow_limits();
    rhs -= (mu_max + mu_min).dot(fbar);
    rhs -= (mu_max - mu_min).dot(model.network.ptdf() * load);
  }
  return std::abs(lhs - rhs) / std::max(1.0, std::abs(lhs));
}

bool InvestmentSpec::contains(const Vec& x, double tol) const {
  if (x.size() != k.size()) return false;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    if (x[i] < x_min[i] - tol || x[i] > x_max[i] + tol) return false;
  }
  if (delta.rows()) {
    const Vec r = delta * x - delta_rhs;
    if (r.maxCoeff() > tol) return false;
  }
  return true;
}

void InvestmentSpec::validate() const {
  const auto N = k.size();
  auto fail = [](const std::string& what) { throw std::invalid_argument("investment spec: " + what); };
  if (x_min.size() != N || x_max.size() != N) fail("bounds must have one entry per bus");
  if (delta.rows() && delta.cols() != N) fail("delta matrix must have one column per bus");
  if (delta_rhs.size() != delta.rows()) fail("delta_rhs must match delta rows");
  if (g_e.quad.size() != N || g_e.lin.size() != N || g_n.quad.size() != N || g_n.lin.size() != N) {
    fail("true-cost coefficients must have one entry per bus");
  }
  for (Eigen::Index i = 0; i < N; ++i) {
    if (x_min[i] > x_max[i]) fail("x_min > x_max at bus " + std::to_string(i));
  }
  for (int b : buses) {
    if (b < 0 || b >= N) fail("investable bus " + std::to_string(b) + " out of range");
  }
  if (delta.rows()) {
    // X nonempty: minimum-norm point of X must exist
    Mat A(delta.rows() + 2 * N, N);
    A << delta, Mat::Identity(N, N), -Mat::Identity(N, N);
    Vec b(A.rows());
    b << delta_rhs, x_max, -x_min;
    auto s = solve_qp(Mat::Identity(N, N), Vec::Zero(N), A, b, Mat(0, N), Vec(0));
    if (!s.has_solution()) fail("feasible set X is empty");
  }
}

InvestmentSpec make_investment_spec(const Network& network, std::vector<int> buses, double k,
                                    double x_max) {
  const int N = network.num_buses();
  InvestmentSpec s;
  s.buses = std::move(buses);
  std::sort(s.buses.begin(), s.buses.end());
  s.k = Vec::Zero(N);
  s.x_min = Vec::Zero(N);
  s.x_max = Vec::Zero(N);
  for (int b : s.buses) {
    s.k[b] = k;
    s.x_max[b] = x_max;
  }
  s.delta = Mat(0, N);
  s.delta_rhs = Vec(0);
  for (auto [cls, g] : {std::pair{OwnerClass::Existing, &s.g_e}, std::pair{OwnerClass::New, &s.g_n}}) {
    g->quad.resize(N);
    g->lin.resize(N);
    for (int i = 0; i < N; ++i) {
      g->quad[i] = network.unit(cls, i).quad_cost;
      g->lin[i] = network.unit(cls, i).lin_cost;
    }
  }
  return s;
}

namespace {

Vec per_bus(const nlohmann::json& j, const std::vector<int>& buses, int N, const char* name) {
  Vec v = Vec::Zero(N);
  if (j.is_number()) {
    for (int b : buses) v[b] = j.get<double>();
    return v;
  }
  if (!j.is_array() || j.size() != buses.size()) {
    throw std::invalid_argument(std::string("investment spec: '") + name +
                                "' must be a number or one value per investable bus");
  }
  for (std::size_t k = 0; k < buses.size(); ++k) v[buses[k]] = j[k].get<double>();
  return v;
}

}  // namespace

InvestmentSpec investment_spec_from_json(const nlohmann::json& j, const Network& network) {
  const int N = network.num_buses();
  std::vector<int> buses;
  if (j.contains("buses")) {
    buses = j.at("buses").get<std::vector<int>>();
  } else {
    for (int i = 0; i < N; ++i) buses.push_back(i);
  }
  for (int b : buses) {
    if (b < 0 || b >= N) throw std::invalid_argument("investment spec: unknown bus " + std::to_string(b));
  }
  // per-bus arrays follow the caller's bus order; s.buses is sorted
  InvestmentSpec s = make_investment_spec(network, buses, 0.0, 0.0);
  s.k = per_bus(j.at("k"), buses, N, "k");
  s.x_min = j.contains("x_min") ? per_bus(j.at("x_min"), buses, N, "x_min") : Vec::Zero(N);
  s.x_max = per_bus(j.at("x_max"), buses, N, "x_max");
  if (j.contains("delta_matrix")) {
    const auto& dm = j.at("delta_matrix");
    s.delta = Mat::Zero(static_cast<Eigen::Index>(dm.size()), N);
    for (std::size_t r = 0; r < dm.size(); ++r) {
      if (dm[r].size() != buses.size()) {
        throw std::invalid_argument("investment spec: delta_matrix rows need one entry per investable bus");
      }
      for (std::size_t c = 0; c < buses.size(); ++c) s.delta(r, buses[c]) = dm[r][c].get<double>();
    }
    const auto rhs = j.at("delta_rhs").get<std::vector<double>>();
    s.delta_rhs = Eigen::Map<const Vec>(rhs.data(), static_cast<Eigen::Index>(rhs.size()));
  }
  for (auto [key, g] : {std::pair{"g_e", &s.g_e}, std::pair{"g_n", &s.g_n}}) {
    if (!j.contains(key)) continue;
    const auto quad = j.at(key).at("quad").get<std::vector<double>>();
    const auto lin = j.at(key).at("lin").get<std::vector<double>>();
    if (static_cast<int>(quad.size()) != N || static_cast<int>(lin.size()) != N) {
      throw std::invalid_argument(std::string("investment spec: '") + key + "' needs one entry per bus");
    }
    g->quad = Eigen::Map<const Vec>(quad.data(), N);
    g->lin = Eigen::Map<const Vec>(lin.data(), N);
  }
  s.validate();
  return s;
}

InvestmentSpec load_investment_spec(const std::filesystem::path& path, const Network& network) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open investment spec '" + path.string() + "'");
  nlohmann::json j;
  try {
    in >> j;
    return investment_spec_from_json(j, network);
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument("investment spec '" + path.string() + "': " + e.what());
  }
}

nlohmann::json investment_spec_to_json(const InvestmentSpec& s) {
  auto pick = [&](const Vec& v) {
    std::vector<double> out;
    for (int b : s.buses) out.push_back(v[b]);
    return out;
  };
  nlohmann::json j{{"buses", s.buses}, {"k", pick(s.k)}, {"x_min", pick(s.x_min)}, {"x_max", pick(s.x_max)}};
  if (s.delta.rows()) {
    nlohmann::json dm = nlohmann::json::array();
    for (Eigen::Index r = 0; r < s.delta.rows(); ++r) dm.push_back(pick(s.delta.row(r).transpose()));
    j["delta_matrix"] = dm;
    j["delta_rhs"] = std::vector<double>(s.delta_rhs.data(), s.delta_rhs.data() + s.delta_rhs.size());
  }
  for (auto [key, g] : {std::pair{"g_e", &s.g_e}, std::pair{"g_n", &s.g_n}}) {
    j[key] = {{"quad", std::vector<double>(g->quad.data(), g->quad.data() + g->quad.size())},
              {"lin", std::vector<double>(g->lin.data(), g->lin.data() + g->lin.size())}};
  }
  return j;
}

double scenario_profit(const MarketModel& model, const InvestmentSpec& spec,
                       const PrimalDualSolution& solution, const Vec& x) {
  const int N = model.index.N;
  const Vec pi = lmp(model, solution);
  const Vec p_e = solution.p.segment(model.index.var(OwnerClass::Existing, 0), N);
  const Vec p_n = solution.p.segment(model.index.var(OwnerClass::New, 0), N);
  return spec.k.dot(x) - pi.dot(p_e + p_n) + spec.g_e.value(p_e) + spec.g_n.value(p_n);
}

}  // namespace mppinvest
