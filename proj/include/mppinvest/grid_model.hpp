#pragma once

#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "mppinvest/linalg.hpp"

namespace mppinvest {

/// Raised for structurally invalid networks (bad ids, disconnected graph, ...).
class ModelError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Ownership class of a generating unit from the investor's point of view.
enum class OwnerClass { Rival = 0, Existing = 1, New = 2 };

inline constexpr int kNumOwnerClasses = 3;

std::string_view to_string(OwnerClass c);
OwnerClass owner_class_from_string(std::string_view s);

struct Bus {
  int id = 0;
  std::optional<std::string> load_profile_ref;
};

struct Line {
  int from_bus = 0;
  int to_bus = 0;
  double susceptance = 1.0;
  double flow_limit = 0.0;
};

struct Generator {
  int bus = 0;
  OwnerClass owner_class = OwnerClass::Rival;
  double quad_cost = 0.0;  // diagonal entry of H, so cost is 1/2 q p^2 + c p
  double lin_cost = 0.0;
  double installed_capacity = 0.0;  // kept at 0 for class New; x is the decision
  std::optional<std::string> capacity_factor_profile_ref;
};

/// Immutable transmission network with a cached PTDF matrix.
///
/// Generators are merged so that there is at most one unit per (bus, class);
/// every (bus, class) slot exists, with zero cost and capacity when absent.
class Network {
 public:
  static Network build(std::vector<Bus> buses, std::vector<Line> lines,
                       std::vector<Generator> generators, int slack_bus = 0,
                       double base_mva = 100.0);

  int num_buses() const { return static_cast<int>(buses_.size()); }
  int num_lines() const { return static_cast<int>(lines_.size()); }
  int slack_bus() const { return slack_bus_; }
  double base_mva() const { return base_mva_; }

  const std::vector<Bus>& buses() const { return buses_; }
  const std::vector<Line>& lines() const { return lines_; }
  /// One merged entry per (class, bus), ordered class-major.
  const std::vector<Generator>& generators() const { return units_; }
  const Generator& unit(OwnerClass c, int bus) const;
  /// True when the input listed at least one generator for this slot.
  bool has_unit(OwnerClass c, int bus) const;

  /// L x N line flow sensitivities to nodal injections.
  const Mat& ptdf() const { return ptdf_; }

  /// Flow limits as a vector (length L).
  Vec flow_limits() const;

 private:
  std::vector<Bus> buses_;
  std::vector<Line> lines_;
  std::vector<Generator> units_;
  std::vector<bool> present_;
  int slack_bus_ = 0;
  double base_mva_ = 100.0;
  Mat ptdf_;
};

/// PTDF with the given slack: S = diag(b) A_inc Bred^{-1}, slack column zero.
/// Flow on a line is positive in the from -> to direction.
Mat compute_ptdf(const std::vector<Line>& lines, int num_buses, int slack_bus);
Mat compute_ptdf(const Network& network, int slack_bus);

/// Upper bound on useful new capacity at `bus`: incident line limits plus the
/// peak load seen at the bus. `load_history` is T x N.
double max_investment_bound(const Network& network, const Mat& load_history, int bus);

Network network_from_json(const nlohmann::json& j);
nlohmann::json network_to_json(const Network& network);
Network load_network(const std::filesystem::path& path);

}  // namespace mppinvest
