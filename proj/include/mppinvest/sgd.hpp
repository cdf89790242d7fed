#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "mppinvest/market.hpp"
#include "mppinvest/mpp_core.hpp"
#include "mppinvest/scenario.hpp"

namespace mppinvest {

/// Region-constant pieces of the per-scenario gradient. Inside the region
///   pi(theta)         = Pi theta + pi0
///   p_e + p_n         = P theta + p0
///   grad_theta R      = (Pi'P + P'Pi) theta + Pi'p0 + P'pi0,   R = pi'(p_e + p_n)
/// Only the rows of the theta-gradients at the new-capacity entries matter,
/// since d theta / d x is zero elsewhere; those rows are stored here.
struct GradientCoefficients {
  ActiveSetSignature signature;
  Mat Pi;
  Vec pi0;
  Mat P;
  Vec p0;
  Mat Pe, Pn;  // p_e and p_n maps
  Vec pe0, pn0;
  Mat R_rows;  // N x q rows of (Pi'P + P'Pi)
  Vec r_rows;
  Mat G_rows;  // N x q rows of the full theta-gradient of -R + g_e + g_n
  Vec g_rows;
};

GradientCoefficients gradient_coefficients(const MarketModel& model, const CriticalRegion& region,
                                           const InvestmentSpec& spec);

/// grad_x [pi'(p_e + p_n)] at theta_map(scenario, x).
Vec revenue_gradient(const GradientCoefficients& coeffs, const MarketModel& model,
                     const Scenario& scenario, const Vec& x);

/// grad_x f_t = k - grad_x R + grad_x [g_e + g_n].
Vec scenario_gradient(const GradientCoefficients& coeffs, const MarketModel& model,
                      const Scenario& scenario, const Vec& x, const InvestmentSpec& spec);

/// Euclidean projection onto X.
Vec project(const Vec& x, const InvestmentSpec& spec);

struct SgdOptions {
  double eta = 1.0;
  double tau = 1e-4;
  int max_iterations = 5000;
  std::uint64_t seed = 0;
  /// Average with weights 1/sqrt(i) over sum sqrt(i), unnormalized,
  /// instead of the normalized average.
  bool literal_average = false;
  SolverOptions solver;
  RegionCache* cache = nullptr;
  std::size_t membership_cache_bytes = std::size_t{256} << 20;
};

struct SgdIteration {
  int k = 0;
  Vec x;
  Vec x_avg;
  double fhat_estimate = 0.0;  // mean f_t over the in-region scenarios
  double grad_norm = 0.0;      // norm of g^k / c^k
  int batch = 0;               // c^k
  std::uint64_t signature_hash = 0;
  double epsilon = 0.0;
  bool boundary_draw = false;
};

struct SgdStats {
  long long qp_solves = 0;
  long long cache_hits = 0;
  long long regions_built = 0;
  long long degenerate_count = 0;
  long long skipped_updates = 0;
  double wall_time = 0.0;
};

struct SgdResult {
  Vec x_star;  // moving average at termination
  Vec x_last;
  int iterations = 0;
  double epsilon = 0.0;
  bool converged = false;
  std::vector<SgdIteration> trace;
  SgdStats stats;
};

/// Projected mini-batch SGD where each step averages the gradients of all
/// scenarios that share the critical region of one randomly drawn scenario.
SgdResult run_sgd(const MarketModel& model, const ScenarioSet& scenarios, const InvestmentSpec& spec,
                  const Vec& x0, const SgdOptions& options = {});

/// k, x_<bus>..., fhat_estimate, grad_norm, c_k, region_signature_hash, epsilon
void write_trace_csv(const SgdResult& result, const InvestmentSpec& spec,
                     const std::filesystem::path& path, const std::vector<std::string>& header_comments = {});

}  // namespace mppinvest
