#pragma once

#include <functional>
#include <vector>

#include "mppinvest/grid_model.hpp"
#include "mppinvest/market.hpp"
#include "mppinvest/parametric_qp.hpp"
#include "mppinvest/scenario.hpp"

namespace oracle {

using mppinvest::Mat;
using mppinvest::Vec;

/// Radial 3-bus system: new unit at bus 0 (cost p^2 + p), rival at bus 1
/// (cost p^2 + 3p, capacity 10), load at bus 2; line a = (0, 2) with limit
/// fa, line b = (1, 2) with limit fb.
mppinvest::Network three_bus(double fa, double fb = 10.0);
/// k = 1, x in [0, 10] at bus 0, true cost equal to the bid.
mppinvest::InvestmentSpec three_bus_spec(const mppinvest::Network& net);

/// Closed-form investor cost f(x, l) for the 3-bus system, from the
/// hand-solved dispatch: unconstrained p1 = l (l <= 1) or (l + 1) / 2, then
/// clipped by min(x, fa).
double three_bus_cost(double x, double load, double fa);

/// E[f(x, l)] for l ~ U(lo, hi), integrated exactly piece by piece.
double three_bus_expected_cost(double x, double fa, double lo = 0.0, double hi = 10.0);

/// Minimizer of three_bus_expected_cost on [0, 10] by dense scan plus golden
/// section refinement.
std::pair<double, double> three_bus_optimum(double fa);

/// Line flows from nodal injections via the pseudo-inverse of the weighted
/// Laplacian (no PTDF involved). Injections must sum to zero.
Vec dc_flows(const mppinvest::Network& net, const Vec& injections);

struct RandomNetworkOptions {
  int buses = 5;
  int extra_lines = 2;
  double min_limit = 2.0;
  double max_limit = 8.0;
  /// Fraction of buses with an existing unit and with a new-unit slot.
  double existing_share = 0.4;
  double new_share = 0.5;
};

/// Connected random network with a rival unit at every bus whose capacity
/// exceeds `max_load`, so any load vector in [0, max_load]^N is servable
/// without using the lines.
mppinvest::Network random_network(mppinvest::PortableRng& rng, const RandomNetworkOptions& opt,
                                  double max_load = 5.0);

/// Scenario with loads U(0, max_load) at every bus and bids from the network.
mppinvest::Scenario random_scenario(mppinvest::PortableRng& rng, const mppinvest::Network& net,
                                    double max_load = 5.0);

/// Central differences with step h per coordinate.
Vec central_difference(const std::function<double(const Vec&)>& f, const Vec& x, double h);

/// Direct per-scenario cost: one OPF solve, then k'x - pi'(p_e + p_n) + g.
double direct_cost(const mppinvest::MarketModel& model, const mppinvest::InvestmentSpec& spec,
                   const mppinvest::Scenario& s, const Vec& x);

/// max |a - b| / max(|b|, 1) over entries.
double rel_err(const Vec& a, const Vec& b);

}  // namespace oracle
