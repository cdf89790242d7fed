#pragma once

#include <filesystem>
#include <string>
#include <unordered_map>
#include <vector>

#include "mppinvest/market.hpp"
#include "mppinvest/scenario.hpp"

namespace mppinvest {

enum class VarType { Continuous, Binary };

struct MilpVar {
  std::string name;
  double lb = 0.0;
  double ub = 0.0;
  VarType type = VarType::Continuous;
  bool operator==(const MilpVar&) const = default;
};

struct MilpRow {
  std::string name;
  std::vector<std::pair<int, double>> coefs;
  char sense = '<';  // '<', '>' or '='
  double rhs = 0.0;
  bool operator==(const MilpRow&) const = default;
};

/// Objective quadratic part is 1/2 * sum coef * z_i * z_j.
struct QuadTerm {
  int i = 0;
  int j = 0;
  double coef = 0.0;
  bool operator==(const QuadTerm&) const = default;
};

/// phi = 0 forces the primal row tight, phi = 1 forces the dual to zero.
struct ComplementarityPair {
  int binary = 0;
  int primal_row = 0;  // index into rows of the "prim_" constraint
  int dual_var = 0;
  int scenario = 0;
  int ineq_row = 0;    // row index of the market problem
  bool operator==(const ComplementarityPair&) const = default;
};

/// Single-level KKT reformulation of the investment problem with big-M
/// complementarity. Variable names: x_<bus>, p_<class>_<bus>_<t>,
/// lam_<row>_<t>, mu_<row>_<t>, phi_<row>_<t>.
struct MilpModel {
  std::vector<MilpVar> vars;
  std::vector<MilpRow> rows;
  std::vector<double> obj_lin;
  double obj_const = 0.0;
  std::vector<QuadTerm> obj_quad;
  double big_m = 1e4;
  int num_scenarios = 0;
  int num_buses = 0;
  std::vector<int> x_buses;  // bus of each x_ variable, in order
  std::vector<ComplementarityPair> pairs;

  int num_vars() const { return static_cast<int>(vars.size()); }
  int num_binaries() const;
  int var_index(const std::string& name) const;  // -1 if absent
  double objective(const Vec& z) const;

  /// Recovers x_buses and pairs from the variable and row names.
  void rebuild_metadata();
  bool operator==(const MilpModel& o) const;
};

MilpModel build_milp(const MarketModel& model, const InvestmentSpec& spec, const ScenarioSet& scenarios,
                     double big_m = 1e4);

/// CPLEX-style LP text; the quadratic objective goes in a "[ ... ] / 2" block.
void write_lp_file(const MilpModel& milp, const std::filesystem::path& path);
std::string format_lp(const MilpModel& milp);
MilpModel read_lp_file(const std::filesystem::path& path);
MilpModel parse_lp(const std::string& text);

struct FeasibilityReport {
  bool feasible = false;
  double max_violation = 0.0;
  std::string worst_row;
  /// Primal slacks or duals whose magnitude reaches big-M.
  std::vector<std::string> big_m_hits;
};

/// Variable values for a given x from direct OPF solves, with binaries set
/// from the active pattern (phi = 0 where the row is tight).
Vec embed_direct_solutions(const MilpModel& milp, const MarketModel& model, const InvestmentSpec& spec,
                           const ScenarioSet& scenarios, const Vec& x, const SolverOptions& solver = {});

FeasibilityReport check_feasibility(const MilpModel& milp, const Vec& z, double tol = 1e-6);

struct EnumerationResult {
  bool feasible = false;
  Vec x;  // one entry per network bus
  double objective = 0.0;
  Vec z;
  long long leaves = 0;
  long long nodes = 0;
};

/// Exhaustive search over the binaries: depth first, dropping subtrees whose
/// fixed equalities or fully determined rows are already inconsistent, and
/// solving the continuous QP at every surviving leaf.
EnumerationResult enumerate_solve(const MilpModel& milp, int max_binaries = 22);

struct BigMReport {
  double max_dual = 0.0;
  double max_slack = 0.0;
  bool adequate = true;
};

/// Largest dual and primal slack magnitudes seen in direct solves at the
/// given investment points, compared against big_m.
BigMReport big_m_preflight(const MarketModel& model, const ScenarioSet& scenarios,
                           const std::vector<Vec>& x_samples, double big_m,
                           const SolverOptions& solver = {});

}  // namespace mppinvest
