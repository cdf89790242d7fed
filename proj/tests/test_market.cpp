#include <cmath>

#include "doctest.h"
#include "oracles.hpp"

using namespace mppinvest;

namespace {

Vec x_at0(double v) {
  Vec x = Vec::Zero(3);
  x[0] = v;
  return x;
}

PrimalDualSolution solve_three_bus(const MarketModel& m, double load, double x) {
  Scenario s = base_scenario(m.network);
  s.load[2] = load;
  return solve(m.problem, theta_map(m.index, s, x_at0(x)));
}

double objective_at(const MarketModel& m, const Vec& theta) { return solve(m.problem, theta).objective; }

}  // namespace

TEST_CASE("dimensions") {
  const Network one = Network::build({{0}}, {}, {{0, OwnerClass::Rival, 1.0, 1.0, 5.0}}, 0);
  const MarketModel m1 = assemble(one);
  CHECK(m1.problem.num_vars() == 3);
  CHECK(m1.problem.num_eq() == 1);
  CHECK(m1.problem.num_ineq() == 6);
  const MarketModel m3 = assemble(oracle::three_bus(4.0));
  CHECK(m3.problem.num_ineq() == 22);
  CHECK(m3.problem.num_params() == 21);
}

TEST_CASE("solutions balance and respect limits") {
  PortableRng rng(40);
  for (int trial = 0; trial < 50; ++trial) {
    const Network net = oracle::random_network(rng, {.buses = 6, .extra_lines = 2, .min_limit = 0.5, .max_limit = 3});
    const MarketModel m = assemble(net);
    const Scenario s = oracle::random_scenario(rng, net);
    Vec x(6);
    for (int i = 0; i < 6; ++i) x[i] = rng.uniform(0, 4);
    const PrimalDualSolution sol = solve(m.problem, theta_map(m.index, s, x));
    REQUIRE(sol.has_solution());
    Vec inj = -s.load;
    for (int c = 0; c < kNumOwnerClasses; ++c) inj += sol.p.segment(c * 6, 6);
    CHECK(std::abs(inj.sum()) < 1e-9);
    const Vec flows = oracle::dc_flows(net, inj);
    CHECK((flows.cwiseAbs() - net.flow_limits()).maxCoeff() < 1e-7);
  }
}

TEST_CASE("uncongested three-bus prices") {
  const MarketModel m = assemble(oracle::three_bus(10.0));
  const PrimalDualSolution sol = solve_three_bus(m, 5.0, 10.0);
  const Vec pi = lmp(m, sol);
  for (int i = 0; i < 3; ++i) CHECK(pi[i] == doctest::Approx(7.0));
  CHECK(own_dispatch(m, sol.p)[0] == doctest::Approx(3.0));
}

TEST_CASE("zero load clears at zero output") {
  const MarketModel m = assemble(oracle::three_bus(10.0));
  const PrimalDualSolution sol = solve_three_bus(m, 0.0, 10.0);
  REQUIRE(sol.has_solution());
  CHECK(sol.p.cwiseAbs().maxCoeff() < 1e-12);
  const Vec pi = lmp(m, sol);
  CHECK(pi.maxCoeff() - pi.minCoeff() < 1e-9);
  CHECK(pi[0] == doctest::Approx(1.0));  // the new unit's marginal cost at zero output
}

TEST_CASE("congested prices split and match finite differences") {
  const MarketModel m = assemble(oracle::three_bus(4.0));
  Scenario s = base_scenario(m.network);
  s.load[2] = 9.0;
  const Vec x = x_at0(10.0);
  const PrimalDualSolution sol = solve(m.problem, theta_map(m.index, s, x));
  const Vec pi = lmp(m, sol);
  CHECK(pi[0] == doctest::Approx(9.0));   // 2 * 4 + 1
  CHECK(pi[2] == doctest::Approx(13.0));  // rival at 5: 2 * 5 + 3
  const double h = 1e-5;
  Scenario up = s, dn = s;
  up.load[2] += h;
  dn.load[2] -= h;
  const double fd = (objective_at(m, theta_map(m.index, up, x)) - objective_at(m, theta_map(m.index, dn, x))) / (2 * h);
  CHECK(std::abs(fd - pi[2]) <= 1e-4 * std::abs(pi[2]));
}

TEST_CASE("prices are marginal costs of load on random networks") {
  PortableRng rng(41);
  int checked = 0;
  for (int trial = 0; trial < 60; ++trial) {
    const Network net = oracle::random_network(rng, {.buses = 5, .extra_lines = 2, .min_limit = 0.5, .max_limit = 3});
    const MarketModel m = assemble(net);
    const Scenario s = oracle::random_scenario(rng, net);
    Vec x(5);
    for (int i = 0; i < 5; ++i) x[i] = rng.uniform(0, 3);
    const PrimalDualSolution sol = solve(m.problem, theta_map(m.index, s, x));
    REQUIRE(sol.has_solution());
    const Vec pi = lmp(m, sol);
    const double h = 1e-5;
    for (int bus = 0; bus < 5; ++bus) {
      Scenario up = s, dn = s;
      up.load[bus] += h;
      dn.load[bus] -= h;
      if (dn.load[bus] < 0) continue;
      const PrimalDualSolution su = solve(m.problem, theta_map(m.index, up, x));
      const PrimalDualSolution sd = solve(m.problem, theta_map(m.index, dn, x));
      if (su.active_set != sol.active_set || sd.active_set != sol.active_set) continue;
      const double fd = (su.objective - sd.objective) / (2 * h);
      CHECK(std::abs(fd - pi[bus]) <= 1e-4 * std::max(1.0, std::abs(pi[bus])));
      ++checked;
    }
  }
  CHECK(checked > 100);
}

TEST_CASE("uniform prices without congestion") {
  PortableRng rng(42);
  for (int trial = 0; trial < 100; ++trial) {
    const Network net = oracle::random_network(rng, {.buses = 5, .extra_lines = 1});
    const MarketModel m = assemble(net);
    const Scenario s = oracle::random_scenario(rng, net);
    const PrimalDualSolution sol = solve(m.problem, theta_map(m.index, s, Vec::Zero(5)));
    REQUIRE(sol.has_solution());
    const double flow_duals = sol.ineq_duals.head(2 * m.index.L).cwiseAbs().maxCoeff();
    if (flow_duals > 1e-9) continue;
    const Vec pi = lmp(m, sol);
    CHECK(pi.maxCoeff() - pi.minCoeff() <= 1e-6);
  }
}

TEST_CASE("revenue identity") {
  const MarketModel m3 = assemble(oracle::three_bus(4.0));
  PortableRng rng(43);
  for (int trial = 0; trial < 50; ++trial) {
    Scenario s = base_scenario(m3.network);
    s.load[2] = rng.uniform(0, 10);
    const Vec th = theta_map(m3.index, s, x_at0(rng.uniform(0, 10)));
    const PrimalDualSolution sol = solve(m3.problem, th);
    CHECK(revenue_identity_gap(m3, sol, th) <= 1e-6);
  }
  {
    const Vec th = theta_map(m3.index, base_scenario(m3.network), x_at0(3.0));
    CHECK(revenue_identity_gap(m3, solve(m3.problem, th), th) <= 1e-12);
  }
  const Network net = oracle::random_network(rng, {.buses = 10, .extra_lines = 4, .min_limit = 0.5, .max_limit = 3});
  const MarketModel m = assemble(net);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const Scenario s = oracle::random_scenario(rng, net);
    Vec x(10);
    for (int i = 0; i < 10; ++i) x[i] = rng.uniform(0, 3);
    const Vec th = theta_map(m.index, s, x);
    const PrimalDualSolution sol = solve(m.problem, th);
    REQUIRE(sol.has_solution());
    worst = std::max(worst, revenue_identity_gap(m, sol, th));
  }
  CHECK(worst <= 1e-6);
}

TEST_CASE("scenario profit") {
  const MarketModel m = assemble(oracle::three_bus(4.0));
  const InvestmentSpec spec = oracle::three_bus_spec(m.network);
  SUBCASE("no investment, no profit") {
    const PrimalDualSolution sol = solve_three_bus(m, 6.0, 0.0);
    CHECK(scenario_profit(m, spec, sol, x_at0(0.0)) == doctest::Approx(0.0));
  }
  SUBCASE("capacity-binding region closed form") {
    const PrimalDualSolution sol = solve_three_bus(m, 4.0, 1.0);
    CHECK(scenario_profit(m, spec, sol, x_at0(1.0)) == doctest::Approx(3.0 - 9.0));
  }
  SUBCASE("matches the hand-solved dispatch") {
    PortableRng rng(44);
    for (int trial = 0; trial < 200; ++trial) {
      const double l = rng.uniform(0, 10), x = rng.uniform(0, 10);
      const PrimalDualSolution sol = solve_three_bus(m, l, x);
      CHECK(scenario_profit(m, spec, sol, x_at0(x)) == doctest::Approx(oracle::three_bus_cost(x, l, 4.0)).epsilon(1e-9));
    }
  }
  SUBCASE("zero true costs leave price times quantity") {
    InvestmentSpec z = spec;
    z.g_n.quad.setZero();
    z.g_n.lin.setZero();
    const PrimalDualSolution sol = solve_three_bus(m, 5.0, 2.0);
    const double expect = 2.0 - lmp(m, sol).dot(own_dispatch(m, sol.p));
    CHECK(scenario_profit(m, z, sol, x_at0(2.0)) == doctest::Approx(expect));
  }
}

TEST_CASE("investment spec parsing") {
  const Network net = oracle::three_bus(4.0);
  nlohmann::json j = {{"buses", {0, 2}}, {"k", {1.0, 2.0}}, {"x_max", 10.0}, {"delta_matrix", {{1.0, 1.0}}},
                      {"delta_rhs", {12.0}}};
  const InvestmentSpec s = investment_spec_from_json(j, net);
  CHECK(s.k[0] == 1.0);
  CHECK(s.k[1] == 0.0);
  CHECK(s.k[2] == 2.0);
  CHECK(s.x_max[2] == 10.0);
  CHECK(s.x_max[1] == 0.0);
  CHECK(s.g_n.quad[0] == doctest::Approx(2.0));  // truthful default
  Vec x = Vec::Zero(3);
  x << 6, 0, 6;
  CHECK(s.contains(x));
  x[2] = 6.5;
  CHECK_FALSE(s.contains(x));
  x[1] = 0.5;
  x[2] = 1;
  CHECK_FALSE(s.contains(x));  // bus 1 is not investable
  const InvestmentSpec back = investment_spec_from_json(investment_spec_to_json(s), net);
  CHECK(back.k == s.k);
  CHECK(back.delta == s.delta);

  nlohmann::json bad = {{"buses", {5}}, {"k", 1.0}, {"x_max", 1.0}};
  CHECK_THROWS_AS(investment_spec_from_json(bad, net), std::invalid_argument);
  nlohmann::json empty = {{"buses", {0}}, {"k", 1.0}, {"x_min", 2.0}, {"x_max", 1.0}};
  CHECK_THROWS_AS(investment_spec_from_json(empty, net), std::invalid_argument);
}
