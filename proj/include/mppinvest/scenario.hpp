#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "mppinvest/grid_model.hpp"
#include "mppinvest/market.hpp"

namespace mppinvest {

class ScenarioError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed scenario file; the message carries "line L, column C".
class ParseError : public ScenarioError {
 public:
  ParseError(const std::string& what, int line, int column);
  int line() const { return line_; }
  int column() const { return column_; }

 private:
  int line_;
  int column_;
};

/// One joint draw of bids, loads, available capacities and capacity factors.
/// Every field has one entry per bus.
struct Scenario {
  Vec c_r, c_e, c_n;
  Vec load;
  Vec pbar_r, pbar_e;
  Vec alpha_r, alpha_e, alpha_n;

  int num_buses() const { return static_cast<int>(load.size()); }
  /// Throws ScenarioError naming the offending field and bus.
  void validate(int num_buses) const;
  bool operator==(const Scenario& o) const;
};

/// Field names in file order, and accessors by name.
const std::vector<std::string>& scenario_fields();
Vec& scenario_field(Scenario& s, const std::string& name);
const Vec& scenario_field(const Scenario& s, const std::string& name);

struct ScenarioSet {
  std::vector<Scenario> scenarios;
  std::uint64_t rng_seed = 0;

  int size() const { return static_cast<int>(scenarios.size()); }
  const Scenario& operator[](int t) const { return scenarios[t]; }
  void validate(int num_buses) const;
  bool operator==(const ScenarioSet& o) const = default;
};

/// Seeded generator with a platform-independent output sequence.
class PortableRng {
 public:
  explicit PortableRng(std::uint64_t seed) : engine_(seed) {}
  std::uint64_t next() { return engine_(); }
  /// Uniform on [0, 1) with 53 random bits.
  double uniform01() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }
  /// Unbiased integer in [0, n).
  std::uint64_t below(std::uint64_t n);

 private:
  std::mt19937_64 engine_;
};

/// Scenario carrying the network's own bids, installed capacities, unit
/// capacity factors and zero load.
Scenario base_scenario(const Network& network);

/// theta = [c; load; pbar_r; pbar_e; alpha_n .* x]
Vec theta_map(const MarketIndex& index, const Scenario& scenario, const Vec& x);

/// d theta / d x: diag(alpha_n) in the new-capacity block, zero elsewhere.
Mat jacobian_theta_x(const MarketIndex& index, const Scenario& scenario);

/// Loads base_profiles(t mod rows, :) * (1 + u), u ~ U(-0.05, 0.05) per bus
/// and hour; optionally rescaled so the peak total load equals peak_target.
/// Non-load fields are copied from `base`.
ScenarioSet generate_synthetic(const Scenario& base, const Mat& base_profiles, int T,
                               std::uint64_t seed, std::optional<double> peak_target = std::nullopt);

/// Loads at `bus` drawn i.i.d. from U(lo, hi); all other fields from `base`.
ScenarioSet sample_uniform_load(const Scenario& base, int bus, double lo, double hi, int T,
                                std::uint64_t seed);

/// One scenario per row of a T x N load matrix.
ScenarioSet scenarios_from_loads(const Scenario& base, const Mat& loads);

/// Long-form CSV (scenario_id,field,bus,value) or JSON, chosen by extension.
ScenarioSet load_scenarios(const std::filesystem::path& path);
void save_scenarios(const ScenarioSet& set, const std::filesystem::path& path,
                    const std::vector<std::string>& header_comments = {});

ScenarioSet parse_scenarios_csv(const std::string& text);
std::string format_scenarios_csv(const ScenarioSet& set,
                                 const std::vector<std::string>& header_comments = {});
ScenarioSet scenarios_from_json(const nlohmann::json& j);
nlohmann::json scenarios_to_json(const ScenarioSet& set);

/// Plain numeric matrix, one row per hour and one column per bus; an optional
/// non-numeric header row is skipped.
Mat load_wide_matrix(const std::filesystem::path& path);

/// 17 significant digits, enough to round-trip any double exactly.
std::string format_double(double v);

}  // namespace mppinvest
