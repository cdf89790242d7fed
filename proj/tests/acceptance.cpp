// Acceptance checks AC1-AC9. One PASS/FAIL line per criterion; exit status 1
// if any criterion fails.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <string>
#include <vector>

#include "mppinvest/grid_search.hpp"
#include "mppinvest/mpec.hpp"
#include "mppinvest/sgd.hpp"
#include "oracles.hpp"

using namespace mppinvest;

namespace {

// Pinned tolerances.
constexpr double kAc1SigmaBand = 3.0;
constexpr double kAc1Landmark = 0.05;
constexpr double kAc1TimeLimit = 60.0;
constexpr double kAc4PrimalTol = 1e-7;
constexpr double kAc4PriceTol = 1e-6;
constexpr double kAc5RelTol = 1e-5;
constexpr double kAc6SpreadTol = 0.005;
constexpr double kAc6OptimumTol = 0.01;
constexpr double kAc7GapTol = 1e-6;
constexpr double kAc8RelTol = 1e-4;
constexpr double kAc9ScanTol = 1e-3;
constexpr double kAc9BigM = 1e4;

int failures = 0;

void report(const char* id, bool pass, const std::string& detail) {
  std::printf("%s %s  %s\n", id, pass ? "PASS" : "FAIL", detail.c_str());
  std::fflush(stdout);
  if (!pass) ++failures;
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

struct ThreeBus {
  Network net;
  MarketModel model;
  InvestmentSpec spec;
  explicit ThreeBus(double fa) : net(oracle::three_bus(fa)), model(assemble(net)), spec(oracle::three_bus_spec(net)) {}
  ScenarioSet loads(int T, std::uint64_t seed) const {
    return sample_uniform_load(base_scenario(net), 2, 0.0, 10.0, T, seed);
  }
};

Network network_with(PortableRng& rng, int buses) {
  oracle::RandomNetworkOptions opt;
  opt.buses = buses;
  opt.extra_lines = std::max(1, buses / 3);
  opt.new_share = 0.5;
  return oracle::random_network(rng, opt);
}

ScenarioSet random_scenarios(PortableRng& rng, const Network& net, int T) {
  ScenarioSet s;
  for (int t = 0; t < T; ++t) s.scenarios.push_back(oracle::random_scenario(rng, net));
  return s;
}

// The minimum found by criterion 1, reused by criterion 6.
double ac1_grid_min = std::nan("");
double ac1_fa = 3.0;

void ac1() {
  // Which line limit gives a continuous optimum of -11.28?
  double fa_hit = -1.0;
  std::string sweep;
  for (int fa = 1; fa <= 10; ++fa) {
    const auto [x, f] = oracle::three_bus_optimum(fa);
    sweep += fmt(" %d:%.4f", fa, f);
    if (fa_hit < 0 && std::abs(f - (-11.28)) <= kAc1Landmark) fa_hit = fa;
  }
  std::printf("AC1 oracle sweep f_a:min E[f] =%s\n", sweep.c_str());
  if (fa_hit < 0) {
    report("AC1", false, "no line limit in 1..10 reproduces the -11.28 optimum");
    return;
  }
  ac1_fa = fa_hit;

  bool ok = true;
  std::string detail;
  for (double fa : {fa_hit, 4.0}) {
    const ThreeBus tb(fa);
    const int T = 50000;
    const ScenarioSet sc = tb.loads(T, 1);
    const SearchGrid grid = build_grid(tb.spec, {0}, 1000);
    const auto t0 = std::chrono::steady_clock::now();
    const GsResult r = run_grid_search(tb.model, tb.spec, grid, sc);
    const double secs = seconds_since(t0);

    double worst_z = 0.0;
    for (int k = 0; k < grid.size(); ++k) {
      const double x = grid.points[k][0];
      double s = 0.0, s2 = 0.0;
      for (int t = 0; t < T; ++t) {
        const double f = oracle::three_bus_cost(x, sc[t].load[2], fa);
        s += f;
        s2 += f * f;
      }
      const double mean = s / T;
      const double se = std::sqrt(std::max(0.0, s2 / T - mean * mean) / (T - 1));
      const double dev = std::abs(r.fhat[k] - oracle::three_bus_expected_cost(x, fa));
      worst_z = std::max(worst_z, se > 0.0 ? dev / se : (dev > 1e-12 ? 1e300 : 0.0));
    }
    const double gmin = r.fhat[r.argmin];
    const auto [xo, fo] = oracle::three_bus_optimum(fa);
    const bool pass_fa = worst_z <= kAc1SigmaBand && secs <= kAc1TimeLimit &&
                         std::abs(fo - (-11.28)) <= kAc1Landmark && std::abs(gmin - (-11.31)) <= kAc1Landmark;
    ok = ok && pass_fa;
    detail += fmt("[f_a=%g: max |fhat-E f|/se=%.2f, grid min %.4f at x=%.3f, oracle min %.4f at x=%.3f, %.1fs] ",
                  fa, worst_z, gmin, grid.points[r.argmin][0], fo, xo, secs);
    if (fa == fa_hit) ac1_grid_min = gmin;
  }
  report("AC1", ok, detail);
}

void ac2() {
  const ThreeBus tb(4.0);
  const GsResult r = run_grid_search(tb.model, tb.spec, build_grid(tb.spec, {0}, 1000), tb.loads(50000, 1));
  report("AC2", r.stats.distinct_signatures == 4,
         fmt("distinct signatures %lld, degenerate %lld", r.stats.distinct_signatures, r.stats.degenerate_count));
}

void ac3() {
  const ThreeBus tb(4.0);
  const GsResult r = run_grid_search(tb.model, tb.spec, build_grid(tb.spec, {0}, 100), tb.loads(100, 2));
  const bool small_ok = r.stats.qp_solves <= 10 && r.stats.closed_form_hits >= 9990;

  PortableRng rng(300);
  const Network net = network_with(rng, 30);
  const MarketModel model = assemble(net);
  std::vector<int> inv;
  for (int b = 0; b < net.num_buses() && inv.size() < 2; ++b) {
    if (net.has_unit(OwnerClass::New, b)) inv.push_back(b);
  }
  const InvestmentSpec spec = make_investment_spec(net, inv, 0.5, 8.0);
  const ScenarioSet sc = random_scenarios(rng, net, 200);
  const GsResult big = run_grid_search(model, spec, build_grid(spec, inv, 10), sc);
  const long long rhs = big.stats.distinct_signatures + big.stats.degenerate_count;
  const bool big_ok = big.stats.qp_solves == rhs && big.errors.empty();
  report("AC3", small_ok && big_ok,
         fmt("3-bus: %lld solves, %lld closed-form hits; 30-bus (%d pairs): %lld solves vs %lld signatures + %lld "
             "degenerate, %lld infeasible",
             r.stats.qp_solves, r.stats.closed_form_hits, big.num_points * big.num_scenarios, big.stats.qp_solves,
             big.stats.distinct_signatures, big.stats.degenerate_count, big.stats.infeasible_count));
}

void ac4() {
  PortableRng rng(400);
  struct Case {
    Network net;
    std::vector<int> inv;
    int steps;
    int T;
  };
  std::vector<Case> cases;
  cases.push_back({oracle::three_bus(4.0), {0}, 40, 50});
  for (int n : {6, 12, 30}) {
    Network net = network_with(rng, n);
    std::vector<int> inv;
    for (int b = 0; b < n && inv.size() < 2; ++b) {
      if (net.has_unit(OwnerClass::New, b)) inv.push_back(b);
    }
    cases.push_back({std::move(net), inv, inv.size() == 1 ? 20 : 6, 50});
  }
  long long pairs = 0, bad = 0;
  double worst_p = 0.0, worst_pi = 0.0;
  for (const Case& c : cases) {
    const MarketModel model = assemble(c.net);
    const InvestmentSpec spec = make_investment_spec(c.net, c.inv, 0.5, 8.0);
    const SearchGrid grid = build_grid(spec, c.inv, c.steps);
    const ScenarioSet sc = c.net.num_buses() == 3 ? sample_uniform_load(base_scenario(c.net), 2, 0, 10, c.T, 4)
                                                  : random_scenarios(rng, c.net, c.T);
    GsOptions opt;
    opt.keep_records = true;
    const GsResult r = run_grid_search(model, spec, grid, sc, opt);
    for (int k = 0; k < grid.size(); ++k) {
      for (int t = 0; t < sc.size(); ++t) {
        const auto d = solve(model.problem, theta_map(model.index, sc[t], grid.points[k]));
        const PointRecord& rec = r.record(k, t);
        const double ep = oracle::rel_err(rec.p, d.p);
        const double epi = oracle::rel_err(rec.pi, lmp(model, d));
        worst_p = std::max(worst_p, ep);
        worst_pi = std::max(worst_pi, epi);
        bad += ep > kAc4PrimalTol || epi > kAc4PriceTol;
        ++pairs;
      }
    }
  }
  report("AC4", bad == 0,
         fmt("%lld (x, scenario) pairs over 4 networks, %lld discrepancies, worst p %.2e, worst pi %.2e", pairs, bad,
             worst_p, worst_pi));
}

void ac5() {
  PortableRng rng(500);
  int checked = 0, bad = 0;
  double worst = 0.0;
  int net_count = 0;
  for (int n : {3, 5, 8, 12}) {
    const Network net = n == 3 ? oracle::three_bus(4.0) : network_with(rng, n);
    ++net_count;
    const MarketModel model = assemble(net);
    std::vector<int> inv;
    for (int b = 0; b < n && inv.size() < 2; ++b) {
      if (net.has_unit(OwnerClass::New, b)) inv.push_back(b);
    }
    const InvestmentSpec spec = make_investment_spec(net, inv, 0.5, 8.0);
    int here = 0;
    for (int trial = 0; trial < 400 && here < 40; ++trial) {
      const Scenario s = n == 3 ? sample_uniform_load(base_scenario(net), 2, 0, 10, 1, rng.next())[0]
                                : oracle::random_scenario(rng, net);
      Vec x = Vec::Zero(n);
      for (int b : inv) x[b] = rng.uniform(0.1, 7.9);
      const Vec theta = theta_map(model.index, s, x);
      const auto sol = solve(model.problem, theta);
      if (sol.status != SolveStatus::Optimal) continue;
      CriticalRegion region;
      try {
        region = region_from_solution(model.problem, sol);
      } catch (const RegionUnavailable&) {
        continue;
      }
      // region-interior along x: the whole difference stencil shares the affine map
      bool stable = true;
      for (int b : inv) {
        for (double step : {-1e-4, 1e-4}) {
          stable = stable && contains(region, theta_map(model.index, s, x + step * Vec::Unit(n, b)));
        }
      }
      if (!stable) continue;
      const Vec g = scenario_gradient(gradient_coefficients(model, region, spec), model, s, x, spec);
      const Vec fd =
          oracle::central_difference([&](const Vec& z) { return oracle::direct_cost(model, spec, s, z); }, x, 1e-5);
      double err = 0.0;
      for (int b : inv) err = std::max(err, std::abs(g[b] - fd[b]) / std::max(1.0, std::abs(fd[b])));
      worst = std::max(worst, err);
      bad += err > kAc5RelTol;
      ++checked;
      ++here;
    }
  }
  report("AC5", checked >= 100 && bad == 0 && net_count >= 3,
         fmt("%d interior points on %d networks, %d above tolerance, worst relative error %.2e", checked, net_count,
             bad, worst));
}

void ac6() {
  const ThreeBus tb(ac1_fa);
  const ScenarioSet train = tb.loads(8760, 6);
  const ScenarioSet eval = tb.loads(50000, 1);
  RegionCache cache;
  PortableRng init(6);
  std::vector<double> costs;
  bool all_converged = true;
  std::string xs;
  for (int r = 0; r < 5; ++r) {
    SgdOptions opt;
    opt.tau = 1e-4;
    opt.max_iterations = 5000;
    opt.seed = 600 + r;
    opt.cache = &cache;
    const Vec x0 = Vec::Unit(3, 0) * init.uniform(0.0, 10.0);
    const SgdResult res = run_sgd(tb.model, train, tb.spec, x0, opt);
    all_converged = all_converged && res.converged;
    GsOptions gopt;
    gopt.cache = &cache;
    const SearchGrid one = build_grid(tb.spec, {0}, std::vector<std::vector<double>>{{res.x_star[0]}});
    costs.push_back(run_grid_search(tb.model, tb.spec, one, eval, gopt).fhat[0]);
    xs += fmt(" %.3f->%.4f(%d)", x0[0], res.x_star[0], res.iterations);
  }
  const auto [lo, hi] = std::minmax_element(costs.begin(), costs.end());
  const double spread = (*hi - *lo) / std::abs(*lo);
  double off = 0.0;
  for (double c : costs) off = std::max(off, std::abs(c - ac1_grid_min) / std::abs(ac1_grid_min));
  report("AC6", all_converged && spread <= kAc6SpreadTol && off <= kAc6OptimumTol,
         fmt("x0->x*(iters):%s; costs in [%.4f, %.4f], spread %.3f%%, max gap to grid optimum %.4f: %.3f%%",
             xs.c_str(), *lo, *hi, 100 * spread, ac1_grid_min, 100 * off));
}

void ac7() {
  PortableRng rng(700);
  int optimal = 0;
  double worst = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const Network net = network_with(rng, 2 + static_cast<int>(rng.below(9)));
    const MarketModel model = assemble(net);
    const Scenario s = oracle::random_scenario(rng, net);
    Vec x = Vec::Zero(net.num_buses());
    for (int b = 0; b < net.num_buses(); ++b) {
      if (net.has_unit(OwnerClass::New, b)) x[b] = rng.uniform(0.0, 8.0);
    }
    const Vec theta = theta_map(model.index, s, x);
    const auto sol = solve(model.problem, theta);
    if (sol.status != SolveStatus::Optimal) continue;
    ++optimal;
    worst = std::max(worst, revenue_identity_gap(model, sol, theta));
  }
  report("AC7", optimal >= 990 && worst <= kAc7GapTol,
         fmt("%d optimal instances of 1000, worst relative gap %.2e", optimal, worst));
}

void ac8() {
  PortableRng rng(800);
  int trials = 0, bad = 0, unstable = 0;
  double worst = 0.0;
  while (trials < 200) {
    const Network net = network_with(rng, 3 + static_cast<int>(rng.below(8)));
    const MarketModel model = assemble(net);
    Scenario s = oracle::random_scenario(rng, net);
    Vec x = Vec::Zero(net.num_buses());
    for (int b = 0; b < net.num_buses(); ++b) {
      if (net.has_unit(OwnerClass::New, b)) x[b] = rng.uniform(0.0, 8.0);
    }
    const int m = static_cast<int>(rng.below(static_cast<std::uint64_t>(net.num_buses())));
    const double h = 1e-5;
    const auto at = [&](double dl) {
      Scenario sd = s;
      sd.load[m] += dl;
      return solve(model.problem, theta_map(model.index, sd, x));
    };
    const auto mid = at(0.0), up = at(h), dn = at(-h);
    if (mid.status != SolveStatus::Optimal || up.status != SolveStatus::Optimal ||
        dn.status != SolveStatus::Optimal) {
      continue;
    }
    if (up.active_set != mid.active_set || dn.active_set != mid.active_set || s.load[m] < h) {
      ++unstable;
      continue;
    }
    const double fd = (up.objective - dn.objective) / (2 * h);
    const double pi = lmp(model, mid)[m];
    const double err = std::abs(pi - fd) / std::max(1.0, std::abs(fd));
    worst = std::max(worst, err);
    bad += err > kAc8RelTol;
    ++trials;
  }
  report("AC8", bad == 0,
         fmt("%d trials (%d unstable draws skipped), %d above tolerance, worst relative error %.2e", trials, unstable,
             bad, worst));
}

void ac9() {
  const ThreeBus tb(4.0);
  bool ok = true;
  std::string detail;
  for (double load : {6.0, 8.5}) {
    Mat l = Mat::Zero(1, 3);
    l(0, 2) = load;
    const ScenarioSet sc = scenarios_from_loads(base_scenario(tb.net), l);
    const MilpModel milp = parse_lp(format_lp(build_milp(tb.model, tb.spec, sc, kAc9BigM)));
    const auto t0 = std::chrono::steady_clock::now();
    const EnumerationResult en = enumerate_solve(milp);
    const double secs = seconds_since(t0);

    double best_x = 0.0, best_f = 1e300;
    for (int i = 0; i <= 10000; ++i) {
      const double x = i * 1e-3;
      const double f = oracle::direct_cost(tb.model, tb.spec, sc[0], Vec::Unit(3, 0) * x);
      if (f < best_f) best_f = f, best_x = x;
    }
    const bool match = en.feasible && std::abs(en.objective - best_f) <= kAc9ScanTol &&
                       std::abs(en.x[0] - best_x) <= kAc9ScanTol * 10 && milp.num_binaries() <= 22;

    int embedded = 0, feasible = 0;
    for (int i = 0; i <= 20; ++i) {
      const Vec x = Vec::Unit(3, 0) * (0.5 * i);
      const FeasibilityReport rep = check_feasibility(milp, embed_direct_solutions(milp, tb.model, tb.spec, sc, x));
      ++embedded;
      feasible += rep.feasible && rep.big_m_hits.empty();
    }
    ok = ok && match && feasible == embedded;
    detail += fmt("[load %.1f: %d binaries, enumeration %.6f at x=%.4f (%lld leaves, %.1fs), scan %.6f at x=%.3f, "
                  "%d/%d embeddings feasible] ",
                  load, milp.num_binaries(), en.objective, en.feasible ? en.x[0] : -1.0, en.leaves, secs, best_f,
                  best_x, feasible, embedded);
  }
  report("AC9", ok, detail);
}

}  // namespace

int main() {
  const auto t0 = std::chrono::steady_clock::now();
  const std::vector<std::pair<const char*, std::function<void()>>> checks{
      {"AC1", ac1}, {"AC2", ac2}, {"AC3", ac3}, {"AC4", ac4}, {"AC5", ac5},
      {"AC6", ac6}, {"AC7", ac7}, {"AC8", ac8}, {"AC9", ac9}};
  for (const auto& [id, fn] : checks) {
    try {
      fn();
    } catch (const std::exception& e) {
      report(id, false, std::string("exception: ") + e.what());
    }
  }
  std::printf("%d of %zu criteria failed (%.1fs)\n", failures, checks.size(), seconds_since(t0));
  return failures == 0 ? 0 : 1;
}
