#pragma once

#include <filesystem>
#include <vector>

#include "json.hpp"
#include "mppinvest/grid_model.hpp"
#include "mppinvest/mpp_core.hpp"
#include "mppinvest/parametric_qp.hpp"

namespace mppinvest {

/// Positions of market quantities inside the canonical problem.
///   p      = [p_r; p_e; p_n]                       (3N)
///   rows   = [flow max (L); flow min (L); cap max (3N); cap min (3N)]
///   theta  = [c_r; c_e; c_n; load; pbar_r; pbar_e; pbar_n]   (7N)
struct MarketIndex {
  int N = 0;
  int L = 0;

  int num_vars() const { return 3 * N; }
  int num_ineq() const { return 2 * L + 6 * N; }
  int num_params() const { return 7 * N; }

  int var(OwnerClass c, int bus) const { return static_cast<int>(c) * N + bus; }
  int flow_max_row(int line) const { return line; }
  int flow_min_row(int line) const { return L + line; }
  int cap_max_row(OwnerClass c, int bus) const { return 2 * L + var(c, bus); }
  int cap_min_row(OwnerClass c, int bus) const { return 2 * L + 3 * N + var(c, bus); }
  int balance_row() const { return 0; }

  int theta_cost(OwnerClass c, int bus) const { return var(c, bus); }
  int theta_load(int bus) const { return 3 * N + bus; }
  int theta_cap(OwnerClass c, int bus) const { return 4 * N + var(c, bus); }
};

struct MarketModel {
  Network network;
  MarketIndex index;
  ParametricProblem problem;
};

/// DC-OPF in canonical parametric form. The quadratic bid curvature comes from
/// the network; linear bids, loads and available capacities ride in theta.
MarketModel assemble(const Network& network);

/// pi = -lambda0 * 1 + S'(mu_min - mu_max)
Vec lmp(const MarketModel& model, const PrimalDualSolution& solution);

/// p_e + p_n per bus.
Vec own_dispatch(const MarketModel& model, const Vec& p);

/// Affine price and dispatch maps of one region: pi = Pi theta + pi0 and
/// p = P theta + p0 for every theta inside it.
struct RegionMarketMap {
  Mat Pi;
  Vec pi0;
  Mat P;
  Vec p0;
};

RegionMarketMap region_market_map(const MarketModel& model, const CriticalRegion& region);

/// Relative gap of the strong-duality expression for the investor's revenue.
double revenue_identity_gap(const MarketModel& model, const PrimalDualSolution& solution,
                            const Vec& theta);

/// g(p) = sum_m 1/2 quad_m p_m^2 + lin_m p_m
struct TrueCost {
  Vec quad;
  Vec lin;

  double value(const Vec& p) const { return 0.5 * p.dot(quad.cwiseProduct(p)) + lin.dot(p); }
  Vec gradient(const Vec& p) const { return quad.cwiseProduct(p) + lin; }
};

/// Investment options: x lives in R^N and is pinned to zero off the
/// investable buses. X = { x_min <= x <= x_max, delta * x <= delta_rhs }.
struct InvestmentSpec {
  std::vector<int> buses;
  Vec k;
  Vec x_min;
  Vec x_max;
  Mat delta;
  Vec delta_rhs;
  TrueCost g_e;
  TrueCost g_n;

  int num_buses() const { return static_cast<int>(k.size()); }
  bool box_only() const { return delta.rows() == 0; }
  bool contains(const Vec& x, double tol = 1e-9) const;
  /// Throws std::invalid_argument if dimensions are off or X is empty.
  void validate() const;
};

/// Spec with zero cost, box [0, x_max] on `buses` and truthful true costs.
InvestmentSpec make_investment_spec(const Network& network, std::vector<int> buses, double k,
                                    double x_max);

/// JSON fields: buses, k, x_min, x_max (per listed bus, or scalars),
/// delta_matrix (columns per listed bus), delta_rhs, and optional g_e / g_n
/// objects {quad, lin} with one entry per network bus. Omitted true costs
/// default to the units' bid functions.
InvestmentSpec investment_spec_from_json(const nlohmann::json& j, const Network& network);
InvestmentSpec load_investment_spec(const std::filesystem::path& path, const Network& network);
nlohmann::json investment_spec_to_json(const InvestmentSpec& spec);

/// f_t(x) = k'x - pi'(p_e + p_n) + g_e(p_e) + g_n(p_n)
double scenario_profit(const MarketModel& model, const InvestmentSpec& spec,
                       const PrimalDualSolution& solution, const Vec& x);

}  // namespace mppinvest
