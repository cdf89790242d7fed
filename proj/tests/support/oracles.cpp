#include "oracles.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace oracle {

using namespace mppinvest;

Network three_bus(double fa, double fb) {
  return Network::build({{0}, {1}, {2}}, {{0, 2, 1.0, fa}, {1, 2, 1.0, fb}},
                        {{0, OwnerClass::New, 2.0, 1.0, 0.0}, {1, OwnerClass::Rival, 2.0, 3.0, 10.0}});
}

InvestmentSpec three_bus_spec(const Network& net) { return make_investment_spec(net, {0}, 1.0, 10.0); }

double three_bus_cost(double x, double load, double fa) {
  const double phi = load <= 1.0 ? load : 0.5 * (load + 1.0);
  const double cap = std::min(x, fa);
  double margin;  // revenue minus true cost
  if (phi <= cap) {
    margin = phi * phi;  // price 2 phi + 1 on every bus
  } else if (x < fa) {
    margin = (2.0 * load + 2.0) * x - 3.0 * x * x;  // rival sets price 2 (l - x) + 3
  } else {
    margin = fa * fa;  // congested: bus-0 price is 2 fa + 1
  }
  return x - margin;
}

double three_bus_expected_cost(double x, double fa, double lo, double hi) {
  const double cap = std::min(x, fa);
  std::vector<double> cuts{lo, hi, 1.0, cap, 2.0 * cap - 1.0};
  std::erase_if(cuts, [&](double c) { return c < lo || c > hi; });
  std::sort(cuts.begin(), cuts.end());
  // Three-point Gauss-Legendre is exact for the quadratic pieces.
  static const double node[3] = {-std::sqrt(0.6), 0.0, std::sqrt(0.6)};
  static const double weight[3] = {5.0 / 9.0, 8.0 / 9.0, 5.0 / 9.0};
  double total = 0.0;
  for (std::size_t k = 0; k + 1 < cuts.size(); ++k) {
    const double a = cuts[k], b = cuts[k + 1];
    if (b <= a) continue;
    const double mid = 0.5 * (a + b), half = 0.5 * (b - a);
    for (int q = 0; q < 3; ++q) total += half * weight[q] * three_bus_cost(x, mid + half * node[q], fa);
  }
  return total / (hi - lo);
}

std::pair<double, double> three_bus_optimum(double fa) {
  double best_x = 0.0, best = std::numeric_limits<double>::infinity();
  for (int k = 0; k <= 100000; ++k) {
    const double x = 1e-4 * k;
    const double v = three_bus_expected_cost(x, fa);
    if (v < best) {
      best = v;
      best_x = x;
    }
  }
  double a = std::max(0.0, best_x - 1e-4), b = std::min(10.0, best_x + 1e-4);
  const double g = 0.5 * (std::sqrt(5.0) - 1.0);
  for (int it = 0; it < 60; ++it) {
    const double c = b - g * (b - a), d = a + g * (b - a);
    if (three_bus_expected_cost(c, fa) < three_bus_expected_cost(d, fa)) {
      b = d;
    } else {
      a = c;
    }
  }
  const double x = 0.5 * (a + b);
  return {x, three_bus_expected_cost(x, fa)};
}

Vec dc_flows(const Network& net, const Vec& inj) {
  const int N = net.num_buses();
  Mat lap = Mat::Zero(N, N);
  for (const Line& l : net.lines()) {
    lap(l.from_bus, l.from_bus) += l.susceptance;
    lap(l.to_bus, l.to_bus) += l.susceptance;
    lap(l.from_bus, l.to_bus) -= l.susceptance;
    lap(l.to_bus, l.from_bus) -= l.susceptance;
  }
  const Vec angle = lap.completeOrthogonalDecomposition().solve(inj);
  Vec f(net.num_lines());
  for (int k = 0; k < net.num_lines(); ++k) {
    const Line& l = net.lines()[k];
    f[k] = l.susceptance * (angle[l.from_bus] - angle[l.to_bus]);
  }
  return f;
}

Network random_network(PortableRng& rng, const RandomNetworkOptions& opt, double max_load) {
  const int N = opt.buses;
  std::vector<Bus> buses;
  for (int i = 0; i < N; ++i) buses.push_back({i, std::nullopt});
  std::vector<Line> lines;
  auto limit = [&] { return rng.uniform(opt.min_limit, opt.max_limit); };
  for (int i = 1; i < N; ++i) {
    lines.push_back({static_cast<int>(rng.below(i)), i, rng.uniform(0.5, 2.0), limit()});
  }
  for (int e = 0; e < opt.extra_lines && N > 2; ++e) {
    const int a = static_cast<int>(rng.below(N));
    int b = static_cast<int>(rng.below(N - 1));
    if (b >= a) ++b;
    lines.push_back({a, b, rng.uniform(0.5, 2.0), limit()});
  }
  std::vector<Generator> gens;
  for (int i = 0; i < N; ++i) {
    gens.push_back({i, OwnerClass::Rival, rng.uniform(0.5, 2.0), rng.uniform(1.0, 6.0),
                    max_load + rng.uniform(1.0, 5.0), std::nullopt});
    if (rng.uniform01() < opt.existing_share) {
      gens.push_back({i, OwnerClass::Existing, rng.uniform(0.5, 2.0), rng.uniform(1.0, 6.0),
                      rng.uniform(1.0, 5.0), std::nullopt});
    }
    if (rng.uniform01() < opt.new_share || i == 0) {
      gens.push_back({i, OwnerClass::New, rng.uniform(0.5, 2.0), rng.uniform(1.0, 6.0), 0.0, std::nullopt});
    }
  }
  return Network::build(std::move(buses), std::move(lines), std::move(gens), 0);
}

Scenario random_scenario(PortableRng& rng, const Network& net, double max_load) {
  Scenario s = base_scenario(net);
  for (int i = 0; i < net.num_buses(); ++i) {
    s.load[i] = rng.uniform(0.0, max_load);
    s.alpha_n[i] = rng.uniform(0.5, 1.0);
  }
  return s;
}

Vec central_difference(const std::function<double(const Vec&)>& f, const Vec& x, double h) {
  Vec g(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    Vec a = x, b = x;
    a[i] += h;
    b[i] -= h;
    g[i] = (f(a) - f(b)) / (2.0 * h);
  }
  return g;
}

double direct_cost(const MarketModel& model, const InvestmentSpec& spec, const Scenario& s, const Vec& x) {
  const PrimalDualSolution sol = solve(model.problem, theta_map(model.index, s, x));
  if (!sol.has_solution()) return std::numeric_limits<double>::quiet_NaN();
  return scenario_profit(model, spec, sol, x);
}

double rel_err(const Vec& a, const Vec& b) {
  double e = 0.0;
  for (Eigen::Index i = 0; i < a.size(); ++i) e = std::max(e, std::abs(a[i] - b[i]) / std::max(1.0, std::abs(b[i])));
  return e;
}

}  // namespace oracle
