#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mppinvest/market.hpp"
#include "mppinvest/mpp_core.hpp"
#include "mppinvest/scenario.hpp"

namespace mppinvest {

/// Cartesian grid over the investable buses; points are full N-vectors with
/// zeros elsewhere, ordered with the first bus varying slowest.
struct SearchGrid {
  std::vector<int> buses;
  std::vector<std::vector<double>> values;
  std::vector<Vec> points;

  int size() const { return static_cast<int>(points.size()); }
};

/// `steps` uniformly spaced values over [x_min_m, x_max_m] per bus; points
/// outside X are dropped. Throws std::invalid_argument if nothing is left.
SearchGrid build_grid(const InvestmentSpec& spec, const std::vector<int>& buses, int steps);
SearchGrid build_grid(const InvestmentSpec& spec, const std::vector<int>& buses,
                      const std::vector<std::vector<double>>& values);

struct GsOptions {
  std::uint64_t seed = 0;
  int workers = 1;  // 0: hardware concurrency
  bool keep_records = false;
  SolverOptions solver;
  /// Regions already in the cache are tried first; new regions are added.
  RegionCache* cache = nullptr;
};

struct GsStats {
  long long qp_solves = 0;
  long long regions_built = 0;
  long long closed_form_hits = 0;
  long long degenerate_count = 0;
  long long infeasible_count = 0;
  long long distinct_signatures = 0;
  long long cache_hits = 0;
  double wall_time = 0.0;
};

/// Solution at one (x, t) pair.
struct PointRecord {
  Vec p;
  Vec pi;
  double f = 0.0;
  bool direct = false;
};

struct GsError {
  int x_index = 0;
  int t = 0;
  std::string message;
};

struct GsResult {
  int num_points = 0;     // K
  int num_scenarios = 0;  // T
  /// f_hat per grid point; NaN where any scenario failed.
  std::vector<double> fhat;
  int argmin = -1;
  GsStats stats;
  std::vector<GsError> errors;
  std::vector<ActiveSetSignature> signatures;  // distinct, in discovery order
  /// K x T records, row-major by grid point, when keep_records is set.
  std::vector<PointRecord> records;

  const PointRecord& record(int x_index, int t) const {
    return records.at(static_cast<std::size_t>(x_index) * num_scenarios + t);
  }
};

/// Grid search that solves one QP per visited critical region and evaluates
/// every other (x, t) pair in that region from its affine map.
GsResult run_grid_search(const MarketModel& model, const InvestmentSpec& spec, const SearchGrid& grid,
                         const ScenarioSet& scenarios, const GsOptions& options = {});

/// (x, f_hat(x)) per grid point.
std::vector<std::pair<Vec, double>> objective_curve(const GsResult& result, const SearchGrid& grid);

}  // namespace mppinvest
