#include "cli.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "mppinvest/grid_search.hpp"
#include "mppinvest/market.hpp"
#include "mppinvest/mpec.hpp"
#include "mppinvest/scenario.hpp"
#include "mppinvest/sgd.hpp"

namespace mppinvest::cli {

namespace fs = std::filesystem;
using nlohmann::json;

std::uint64_t fnv1a(std::string_view data, std::uint64_t h) {
  for (unsigned char c : data) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

namespace {

/// Bad flags, missing or unreadable inputs.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// The computation ran but produced no usable answer.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct RunConfig {
  std::string network;
  std::string scenarios;
  std::string spec;
  std::string out = "out";
  std::uint64_t seed = 0;
  int workers = 0;

  // Inline scenario generation.
  std::vector<double> uniform_load;  // bus, lo, hi
  std::string profiles;
  int count = 0;
  std::uint64_t scenario_seed = 0;
  std::optional<double> peak;

  // solve-opf
  std::vector<double> load;
  std::vector<double> x;
  int index = 0;

  // grid-search
  int steps = 1000;

  // sgd
  double eta = 1.0;
  double tau = 1e-4;
  int inits = 5;
  int max_iter = 5000;

  // export-mpec
  double big_m = 1e4;
  bool enumerate = false;

  // gen-scenarios
  std::string format = "csv";
};

std::string read_file(const std::string& path, const char* what) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw UsageError(std::string("cannot open ") + what + " '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string hex(std::uint64_t h) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

/// Hash of the given settings plus the bytes of every referenced input file.
std::string config_hash(const json& settings, const RunConfig& c) {
  std::uint64_t h = fnv1a(settings.dump());
  for (const auto& [path, what] : {std::pair{c.network, "network"}, std::pair{c.spec, "investment spec"},
                                   std::pair{c.scenarios, "scenario file"}, std::pair{c.profiles, "profiles"}}) {
    if (!path.empty()) h = fnv1a(read_file(path, what), h);
  }
  return hex(h);
}

json scenario_source_json(const RunConfig& c) {
  json j;
  if (!c.scenarios.empty()) {
    j["scenarios"] = c.scenarios;
  } else {
    j["uniform_load"] = c.uniform_load;
    j["profiles"] = c.profiles;
    j["count"] = c.count;
    j["scenario_seed"] = c.scenario_seed;
    j["peak"] = c.peak ? json(*c.peak) : json(nullptr);
  }
  return j;
}

Network load_net(const RunConfig& c) {
  if (c.network.empty()) throw UsageError("--network is required");
  if (!fs::exists(c.network)) throw UsageError("network file not found: '" + c.network + "'");
  return load_network(c.network);
}

InvestmentSpec load_spec(const RunConfig& c, const Network& net) {
  if (c.spec.empty()) throw UsageError("--spec is required");
  if (!fs::exists(c.spec)) throw UsageError("investment spec not found: '" + c.spec + "'");
  return load_investment_spec(c.spec, net);
}

ScenarioSet generate(const RunConfig& c, const Network& net) {
  if (c.count < 1) throw UsageError("--count must be at least 1 (got " + std::to_string(c.count) + ")");
  const Scenario base = base_scenario(net);
  if (!c.uniform_load.empty()) {
    if (c.uniform_load.size() != 3) throw UsageError("--uniform-load expects BUS,LO,HI");
    const int bus = static_cast<int>(c.uniform_load[0]);
    if (bus < 0 || bus >= net.num_buses() || bus != c.uniform_load[0]) {
      throw UsageError("--uniform-load: bus " + format_double(c.uniform_load[0]) + " is not a bus index");
    }
    if (!(c.uniform_load[1] <= c.uniform_load[2])) throw UsageError("--uniform-load: LO must not exceed HI");
    return sample_uniform_load(base, bus, c.uniform_load[1], c.uniform_load[2], c.count, c.scenario_seed);
  }
  if (!c.profiles.empty()) {
    if (!fs::exists(c.profiles)) throw UsageError("profile file not found: '" + c.profiles + "'");
    return generate_synthetic(base, load_wide_matrix(c.profiles), c.count, c.scenario_seed, c.peak);
  }
  throw UsageError("no scenario source: give --scenarios, --uniform-load or --profiles");
}

ScenarioSet load_scenario_source(const RunConfig& c, const Network& net) {
  ScenarioSet set;
  if (!c.scenarios.empty()) {
    if (!fs::exists(c.scenarios)) throw UsageError("scenario file not found: '" + c.scenarios + "'");
    set = load_scenarios(c.scenarios);
  } else {
    set = generate(c, net);
  }
  set.validate(net.num_buses());
  return set;
}

fs::path out_dir(const RunConfig& c) {
  std::error_code ec;
  fs::create_directories(c.out, ec);
  if (ec) throw UsageError("cannot create output directory '" + c.out + "': " + ec.message());
  return c.out;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path);
  if (!f) throw UsageError("cannot write '" + path.string() + "'");
  f << text;
}

Vec full_vector(const std::vector<double>& v, int N, const char* flag) {
  if (v.empty()) return Vec::Zero(N);
  if (static_cast<int>(v.size()) != N) {
    throw UsageError(std::string(flag) + " needs " + std::to_string(N) + " values, got " +
                     std::to_string(v.size()));
  }
  return Eigen::Map<const Vec>(v.data(), N);
}

std::vector<double> to_std(const Vec& v) { return {v.data(), v.data() + v.size()}; }

int resolved_workers(int w) {
  if (w > 0) return w;
  return std::max(1u, std::thread::hardware_concurrency());
}

// ---------------------------------------------------------------------------

int cmd_solve_opf(const RunConfig& c, std::ostream& out) {
  const Network net = load_net(c);
  const MarketModel model = assemble(net);
  const int N = net.num_buses();
  Scenario s = base_scenario(net);
  if (!c.scenarios.empty() || !c.uniform_load.empty() || !c.profiles.empty()) {
    const ScenarioSet set = load_scenario_source(c, net);
    if (c.index < 0 || c.index >= set.size()) {
      throw UsageError("--index " + std::to_string(c.index) + " outside [0, " + std::to_string(set.size()) + ")");
    }
    s = set[c.index];
  }
  if (!c.load.empty()) s.load = full_vector(c.load, N, "--load");
  const Vec x = full_vector(c.x, N, "--x");
  s.validate(N);

  const json settings{{"command", "solve-opf"}, {"source", scenario_source_json(c)}, {"index", c.index},
                      {"load", c.load}, {"x", c.x}};
  const std::string hash = config_hash(settings, c);
  const Vec theta = theta_map(model.index, s, x);
  const PrimalDualSolution sol = solve(model.problem, theta);
  if (!sol.has_solution()) {
    throw NumericalError("market clearing failed: " + std::string(to_string(sol.status)));
  }
  const Vec pi = lmp(model, sol);
  const MarketIndex& ix = model.index;

  auto row = [&](const char* label, const Vec& v) {
    out << std::left << std::setw(10) << label;
    for (Eigen::Index i = 0; i < v.size(); ++i) out << ' ' << std::setw(12) << v[i];
    out << '\n';
  };
  out << "status " << to_string(sol.status) << (sol.status == SolveStatus::Degenerate ? " (solution kept)" : "")
      << "\nobjective " << sol.objective << "\n";
  json pj;
  for (int cl = 0; cl < kNumOwnerClasses; ++cl) {
    const auto oc = static_cast<OwnerClass>(cl);
    const Vec p = sol.p.segment(ix.var(oc, 0), N);
    row(std::string("p_" + std::string(to_string(oc))).c_str(), p);
    pj[std::string(to_string(oc))] = to_std(p);
  }
  row("lmp", pi);
  out << "balance dual " << sol.eq_duals[ix.balance_row()] << '\n';
  if (ix.L) {
    row("mu_max", sol.ineq_duals.head(ix.L));
    row("mu_min", sol.ineq_duals.segment(ix.L, ix.L));
  }
  std::vector<std::string> active;
  for (int r : sol.active_set) active.push_back(model.problem.labels.at(r));
  out << "active";
  for (const auto& a : active) out << ' ' << a;
  out << '\n';

  json j{{"header", {{"config_hash", hash}}},
         {"status", std::string(to_string(sol.status))},
         {"objective", sol.objective},
         {"dispatch", pj},
         {"lmp", to_std(pi)},
         {"ineq_duals", to_std(sol.ineq_duals)},
         {"eq_duals", to_std(sol.eq_duals)},
         {"active_set", active},
         {"x", to_std(x)},
         {"load", to_std(s.load)}};
  write_text(out_dir(c) / "opf.json", j.dump(2) + "\n");
  return 0;
}

int cmd_grid_search(const RunConfig& c, std::ostream& out) {
  if (c.steps < 1) throw UsageError("--steps must be at least 1");
  const Network net = load_net(c);
  const InvestmentSpec spec = load_spec(c, net);
  const ScenarioSet set = load_scenario_source(c, net);
  const MarketModel model = assemble(net);
  const SearchGrid grid = build_grid(spec, spec.buses, c.steps);

  // The traversal seed and worker count do not change f-hat, so they stay out
  // of the hash that goes into fhat.csv.
  const json settings{{"command", "grid-search"}, {"source", scenario_source_json(c)}, {"steps", c.steps}};
  const std::string hash = config_hash(settings, c);

  GsOptions opt;
  opt.seed = c.seed;
  opt.workers = resolved_workers(c.workers);
  const GsResult res = run_grid_search(model, spec, grid, set, opt);

  std::ostringstream csv;
  csv << "# config_hash=" << hash << "\n# scenario_seed=" << set.rng_seed << "\n";
  for (int b : grid.buses) csv << "x_" << b << ',';
  csv << "fhat\n";
  for (int k = 0; k < grid.size(); ++k) {
    for (int b : grid.buses) csv << format_double(grid.points[k][b]) << ',';
    csv << format_double(res.fhat[k]) << '\n';
  }
  const fs::path dir = out_dir(c);
  write_text(dir / "fhat.csv", csv.str());

  const GsStats& st = res.stats;
  json stats{{"header", {{"config_hash", hash}, {"seed", c.seed}, {"scenario_seed", set.rng_seed},
                         {"workers", opt.workers}}},
             {"grid_points", res.num_points},
             {"scenarios", res.num_scenarios},
             {"qp_solves", st.qp_solves},
             {"regions_built", st.regions_built},
             {"closed_form_hits", st.closed_form_hits},
             {"degenerate_count", st.degenerate_count},
             {"infeasible_count", st.infeasible_count},
             {"distinct_signatures", st.distinct_signatures},
             {"cache_hits", st.cache_hits},
             {"wall_time", st.wall_time},
             {"errors", res.errors.size()}};
  if (res.argmin >= 0) {
    stats["argmin"] = to_std(grid.points[res.argmin]);
    stats["fhat_min"] = res.fhat[res.argmin];
  }
  write_text(dir / "stats.json", stats.dump(2) + "\n");

  out << "grid points " << res.num_points << ", scenarios " << res.num_scenarios << '\n';
  out << "critical regions " << st.distinct_signatures << ", qp solves " << st.qp_solves << ", closed-form hits "
      << st.closed_form_hits << ", degenerate " << st.degenerate_count << ", infeasible " << st.infeasible_count
      << '\n';
  out << "time " << std::fixed << std::setprecision(3) << st.wall_time << " s\n" << std::defaultfloat;
  if (res.argmin < 0) throw NumericalError("no grid point has a finite sample-average cost");
  out << "argmin";
  for (int b : grid.buses) out << " x_" << b << '=' << grid.points[res.argmin][b];
  out << "\noptimal cost " << std::setprecision(10) << res.fhat[res.argmin] << '\n';
  return 0;
}

/// Sample-average cost at one point, through the region maps.
double fhat_at(const MarketModel& model, const InvestmentSpec& spec, const ScenarioSet& set, const Vec& x,
               RegionCache& cache) {
  std::vector<std::vector<double>> values;
  for (int b : spec.buses) values.push_back({x[b]});
  const SearchGrid grid = build_grid(spec, spec.buses, values);
  GsOptions opt;
  opt.cache = &cache;
  return run_grid_search(model, spec, grid, set, opt).fhat.at(0);
}

int cmd_sgd(const RunConfig& c, std::ostream& out) {
  if (c.inits < 1) throw UsageError("--inits must be at least 1");
  if (c.eta < 0.0) throw UsageError("--eta must be nonnegative");
  if (c.tau < 0.0) throw UsageError("--tau must be nonnegative");
  if (c.max_iter < 1) throw UsageError("--max-iter must be at least 1");
  const Network net = load_net(c);
  const InvestmentSpec spec = load_spec(c, net);
  const ScenarioSet set = load_scenario_source(c, net);
  const MarketModel model = assemble(net);

  const json settings{{"command", "sgd"}, {"source", scenario_source_json(c)}, {"eta", c.eta}, {"tau", c.tau},
                      {"inits", c.inits}, {"max_iter", c.max_iter}, {"seed", c.seed}};
  const std::string hash = config_hash(settings, c);
  const std::vector<std::string> header{"config_hash=" + hash, "seed=" + std::to_string(c.seed),
                                        "scenario_seed=" + std::to_string(set.rng_seed)};
  const fs::path dir = out_dir(c);

  RegionCache cache;
  PortableRng init_rng(c.seed);
  std::ostringstream summary;
  for (const auto& h : header) summary << "# " << h << '\n';
  summary << "init";
  for (int b : spec.buses) summary << ",x0_" << b;
  for (int b : spec.buses) summary << ",xstar_" << b;
  summary << ",iterations,converged,epsilon,fhat,qp_solves,wall_time\n";

  std::vector<double> costs;
  out << std::left << std::setw(6) << "init" << std::setw(28) << "x*" << std::setw(8) << "iters" << std::setw(6)
      << "conv" << std::setw(16) << "cost" << "time\n";
  for (int r = 0; r < c.inits; ++r) {
    Vec x0 = Vec::Zero(net.num_buses());
    for (int b : spec.buses) x0[b] = init_rng.uniform(spec.x_min[b], spec.x_max[b]);
    x0 = project(x0, spec);
    SgdOptions opt;
    opt.eta = c.eta;
    opt.tau = c.tau;
    opt.max_iterations = c.max_iter;
    opt.seed = c.seed * 1000003ull + static_cast<std::uint64_t>(r) + 1;
    opt.cache = &cache;
    const SgdResult res = run_sgd(model, set, spec, x0, opt);
    write_trace_csv(res, spec, dir / ("trace_" + std::to_string(r) + ".csv"), header);
    const double cost = fhat_at(model, spec, set, res.x_star, cache);
    costs.push_back(cost);

    summary << r;
    for (int b : spec.buses) summary << ',' << format_double(x0[b]);
    for (int b : spec.buses) summary << ',' << format_double(res.x_star[b]);
    summary << ',' << res.iterations << ',' << (res.converged ? 1 : 0) << ',' << format_double(res.epsilon) << ','
            << format_double(cost) << ',' << res.stats.qp_solves << ',' << res.stats.wall_time << '\n';

    std::ostringstream xs;
    for (int b : spec.buses) xs << res.x_star[b] << ' ';
    out << std::setw(6) << r << std::setw(28) << xs.str() << std::setw(8) << res.iterations << std::setw(6)
        << (res.converged ? "yes" : "no") << std::setw(16) << std::setprecision(8) << cost << std::setprecision(3)
        << res.stats.wall_time << " s\n"
        << std::setprecision(6);
  }
  write_text(dir / "summary.csv", summary.str());

  const auto [lo, hi] = std::minmax_element(costs.begin(), costs.end());
  if (!std::isfinite(*lo) || !std::isfinite(*hi)) throw NumericalError("cost evaluation failed at some x*");
  const double spread = (*hi - *lo) / std::max(1e-12, std::abs(*lo));
  out << "cost spread " << std::setprecision(4) << 100.0 * spread << "%\n" << std::setprecision(6);
  return 0;
}

int cmd_export_mpec(const RunConfig& c, std::ostream& out, std::ostream& err) {
  if (!(c.big_m > 0.0)) throw UsageError("--big-m must be positive");
  const Network net = load_net(c);
  const InvestmentSpec spec = load_spec(c, net);
  const ScenarioSet set = load_scenario_source(c, net);
  const MarketModel model = assemble(net);
  const MilpModel milp = build_milp(model, spec, set, c.big_m);
  const json settings{{"command", "export-mpec"}, {"source", scenario_source_json(c)}, {"big_m", c.big_m}};
  const std::string hash = config_hash(settings, c);

  const fs::path dir = out_dir(c);
  std::string text = format_lp(milp);
  text.insert(text.find('\n') + 1, "\\ config_hash = " + hash + "\n");
  write_text(dir / "model.lp", text);
  out << "wrote " << (dir / "model.lp").string() << ": " << milp.num_vars() << " variables, "
      << milp.num_binaries() << " binaries, " << milp.rows.size() << " rows\n";

  std::vector<Vec> samples{spec.x_min, spec.x_max, 0.5 * (spec.x_min + spec.x_max)};
  for (Vec& s : samples) s = project(s, spec);
  const BigMReport pre = big_m_preflight(model, set, samples, c.big_m);
  out << "largest dual " << pre.max_dual << ", largest slack " << pre.max_slack << " (big-M " << c.big_m << ")\n";
  if (!pre.adequate) err << "warning: big-M " << c.big_m << " is not above the magnitudes seen in direct solves\n";

  if (c.enumerate) {
    const int nb = milp.num_binaries();
    if (nb > 22) throw UsageError("refusing to enumerate " + std::to_string(nb) + " binaries (limit 22)");
    const EnumerationResult r = enumerate_solve(milp);
    if (!r.feasible) throw NumericalError("the MILP has no feasible binary assignment");
    out << "enumeration: " << r.leaves << " leaves, optimum " << std::setprecision(10) << r.objective << " at";
    for (int b : milp.x_buses) out << " x_" << b << '=' << r.x[b];
    out << '\n' << std::setprecision(6);
    json j{{"header", {{"config_hash", hash}}}, {"objective", r.objective}, {"x", to_std(r.x)},
           {"leaves", r.leaves}, {"nodes", r.nodes}};
    write_text(dir / "enumeration.json", j.dump(2) + "\n");
  }
  return 0;
}

int cmd_gen_scenarios(const RunConfig& c, std::ostream& out) {
  if (c.format != "csv" && c.format != "json") throw UsageError("--format must be csv or json");
  const Network net = load_net(c);
  RunConfig g = c;
  g.scenario_seed = c.seed;
  const ScenarioSet set = generate(g, net);
  const json settings{{"command", "gen-scenarios"}, {"source", scenario_source_json(g)}};
  const fs::path path = out_dir(c) / ("scenarios." + c.format);
  save_scenarios(set, path, {"config_hash=" + config_hash(settings, g)});
  out << "wrote " << set.size() << " scenarios to " << path.string() << '\n';
  return 0;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Generation investment planning with region-reusing market clearing"};
  app.set_config("--config", "", "TOML file with option values; command-line flags take precedence");
  app.require_subcommand(1);
  app.fallthrough();
  RunConfig c;

  app.add_option("--network", c.network, "Network JSON file");
  app.add_option("--scenarios", c.scenarios, "Scenario file (.csv or .json)");
  app.add_option("--spec", c.spec, "Investment spec JSON file");
  app.add_option("--out", c.out, "Output directory")->capture_default_str();
  app.add_option("--seed", c.seed, "Random seed")->capture_default_str();
  app.add_option("--workers", c.workers, "Worker threads (0: all cores)")->capture_default_str();
  app.add_option("--uniform-load", c.uniform_load, "Generate loads at BUS from U(LO, HI)")
      ->delimiter(',')
      ->expected(3);
  app.add_option("--profiles", c.profiles, "Base load profile matrix (hours x buses)");
  app.add_option("--count", c.count, "Number of scenarios to generate");
  app.add_option("--scenario-seed", c.scenario_seed, "Seed for inline scenario generation");
  app.add_option("--peak", c.peak, "Rescale generated loads to this peak total");

  auto* opf = app.add_subcommand("solve-opf", "Clear the market once and report dispatch, duals and prices");
  opf->add_option("--load", c.load, "Load per bus (overrides the scenario)")->delimiter(',');
  opf->add_option("--x", c.x, "New capacity per bus")->delimiter(',');
  opf->add_option("--index", c.index, "Scenario index in the scenario source")->capture_default_str();

  auto* gs = app.add_subcommand("grid-search", "Exhaustive grid search over investment levels");
  gs->add_option("--steps", c.steps, "Grid values per investable bus")->capture_default_str();

  auto* sg = app.add_subcommand("sgd", "Projected stochastic gradient descent from random starts");
  sg->add_option("--eta", c.eta, "Step size")->capture_default_str();
  sg->add_option("--tau", c.tau, "Stopping tolerance")->capture_default_str();
  sg->add_option("--inits", c.inits, "Number of random initializations")->capture_default_str();
  sg->add_option("--max-iter", c.max_iter, "Iteration cap per run")->capture_default_str();

  auto* mp = app.add_subcommand("export-mpec", "Write the big-M single-level model in LP format");
  mp->add_option("--big-m", c.big_m, "Big-M constant")->capture_default_str();
  mp->add_flag("--enumerate", c.enumerate, "Also solve the model by binary enumeration (<= 22 binaries)");

  auto* gen = app.add_subcommand("gen-scenarios", "Generate a seeded scenario file");
  gen->add_option("--format", c.format, "csv or json")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 2;
  }

  try {
    if (opf->parsed()) return cmd_solve_opf(c, out);
    if (gs->parsed()) return cmd_grid_search(c, out);
    if (sg->parsed()) return cmd_sgd(c, out);
    if (mp->parsed()) return cmd_export_mpec(c, out, err);
    if (gen->parsed()) return cmd_gen_scenarios(c, out);
  } catch (const UsageError& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  } catch (const NumericalError& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  } catch (const ModelError& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  } catch (const ScenarioError& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::invalid_argument& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
  return 2;
}

}  // namespace mppinvest::cli
