#pragma once

#include <compare>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <functional>
#include <shared_mutex>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "json.hpp"
#include "mppinvest/parametric_qp.hpp"

namespace mppinvest {

inline constexpr double kMembershipTol = 1e-8;

/// Sorted inequality-row indices of an active set.
struct ActiveSetSignature {
  std::vector<int> rows;

  ActiveSetSignature() = default;
  explicit ActiveSetSignature(std::vector<int> r);

  auto operator<=>(const ActiveSetSignature&) const = default;
  bool operator==(const ActiveSetSignature&) const = default;

  std::uint64_t hash() const;
  std::string str() const;  // "{1,4,7}"
};

struct SignatureHash {
  std::size_t operator()(const ActiveSetSignature& s) const { return static_cast<std::size_t>(s.hash()); }
};

/// Raised when the active set at a solution does not yield an affine map
/// (LICQ fails, or the H = 0 case has a non-square K).
class RegionUnavailable : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised when a region is evaluated outside its polytope.
class ContractViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

enum class RegionKind { MPQP, MPLP };

/// Parameter polytope on which one active set stays optimal, with the affine
/// primal/dual map z(theta) = M theta + r, where z stacks p (n entries), the
/// duals of the active inequality rows (in signature order) and the equality
/// duals.
struct CriticalRegion {
  ActiveSetSignature signature;
  RegionKind kind = RegionKind::MPQP;
  int num_vars = 0;
  int num_ineq = 0;
  int num_eq = 0;
  Mat M;
  Vec r;
  Mat poly_A;  // rows scaled to unit infinity norm
  Vec poly_b;

  // Objective at theta via strong duality: -1/2 p'Hp - nu'(h_W + E_W theta).
  Mat H;
  Mat E_w;
  Vec h_w;

  int num_active() const { return static_cast<int>(signature.rows.size()); }
  auto primal_M() const { return M.topRows(num_vars); }
  auto primal_r() const { return r.head(num_vars); }
  /// Affine map of the full inequality-dual vector (zeros for inactive rows).
  Mat ineq_dual_M() const;
  Vec ineq_dual_r() const;
  auto eq_dual_M() const { return M.bottomRows(num_eq); }
  auto eq_dual_r() const { return r.tail(num_eq); }
};

/// Stacks the signature's inequality rows of A over all rows of B.
Mat build_K(const ParametricProblem& problem, const ActiveSetSignature& signature);

/// Full row rank test with a pivoted QR and threshold 1e-9 * ||K||.
bool licq_holds(const Mat& K);

CriticalRegion region_from_solution(const ParametricProblem& problem,
                                    const PrimalDualSolution& solution);

bool contains(const CriticalRegion& region, const Vec& theta, double tol = kMembershipTol);

/// Largest halfspace violation (negative when strictly inside).
double max_violation(const CriticalRegion& region, const Vec& theta);

PrimalDualSolution evaluate(const CriticalRegion& region, const Vec& theta);

/// Signature-keyed region store shared by the investment solvers.
/// Lookups may run concurrently with one writer; references stay valid.
class RegionCache {
 public:
  /// First region in insertion order that contains theta, or nullptr.
  const CriticalRegion* find(const Vec& theta, double tol = kMembershipTol) const;
  const CriticalRegion* get(const ActiveSetSignature& signature) const;
  /// Inserts unless the signature is present; returns the stored region and
  /// whether it was newly inserted.
  std::pair<const CriticalRegion*, bool> insert(CriticalRegion region);

  std::size_t size() const;
  const CriticalRegion& at(std::size_t i) const;
  void clear();

 private:
  mutable std::shared_mutex mutex_;
  std::deque<CriticalRegion> regions_;
  std::unordered_map<ActiveSetSignature, std::size_t, SignatureHash> index_;
};

nlohmann::json region_to_json(const CriticalRegion& region);
void write_region_dump(const RegionCache& cache, const std::filesystem::path& path);

}  // namespace mppinvest
