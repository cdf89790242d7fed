#include "mppinvest/grid_search.hpp"

#include <algorithm>
#include <bit>
#include <chrono>
#include <cmath>
#include <limits>
#include <set>
#include <stdexcept>
#include <thread>

namespace mppinvest {

SearchGrid build_grid(const InvestmentSpec& spec, const std::vector<int>& buses, int steps) {
  if (steps < 2) throw std::invalid_argument("build_grid: need at least 2 steps per bus");
  std::vector<std::vector<double>> values;
  for (int b : buses) {
    if (b < 0 || b >= spec.num_buses()) throw std::invalid_argument("build_grid: unknown bus " + std::to_string(b));
    std::vector<double> v(steps);
    const double lo = spec.x_min[b], hi = spec.x_max[b];
    for (int s = 0; s < steps; ++s) v[s] = lo + (hi - lo) * s / (steps - 1);
    values.push_back(std::move(v));
  }
  return build_grid(spec, buses, values);
}

SearchGrid build_grid(const InvestmentSpec& spec, const std::vector<int>& buses,
                      const std::vector<std::vector<double>>& values) {
  if (buses.empty()) throw std::invalid_argument("build_grid: no investable buses");
  if (values.size() != buses.size()) throw std::invalid_argument("build_grid: one value list per bus required");
  SearchGrid g;
  g.buses = buses;
  g.values = values;
  const int N = spec.num_buses();
  std::vector<std::size_t> idx(buses.size(), 0);
  for (const auto& v : values) {
    if (v.empty()) throw std::invalid_argument("build_grid: empty value list");
  }
  for (;;) {
    Vec x = Vec::Zero(N);
    for (std::size_t k = 0; k < buses.size(); ++k) x[buses[k]] = values[k][idx[k]];
    if (spec.contains(x)) g.points.push_back(std::move(x));
    int k = static_cast<int>(buses.size()) - 1;
    while (k >= 0 && ++idx[k] == values[k].size()) idx[k--] = 0;
    if (k < 0) break;
  }
  if (g.points.empty()) throw std::invalid_argument("build_grid: no grid point lies in X");
  return g;
}

namespace {

using Clock = std::chrono::steady_clock;

// Order-independent exact accumulation: every term is rounded once to a
// multiple of 2^-52 and summed in 128-bit integers.
class ExactSum {
 public:
  void add(double v) {
    if (!std::isfinite(v) || std::abs(v) > 1e15) {
      finite_ = false;
      return;
    }
    acc_ += static_cast<__int128>(std::nearbyint(std::ldexp(v, 52)));
  }
  bool finite() const { return finite_; }
  double value() const { return std::ldexp(static_cast<double>(acc_), -52); }

 private:
  __int128 acc_ = 0;
  bool finite_ = true;
};

template <class Fn>
void parallel_ranges(int workers, int n, Fn&& fn) {
  if (workers <= 1 || n < 2) {
    fn(0, 0, n);
    return;
  }
  workers = std::min(workers, n);
  std::vector<std::thread> pool;
  for (int w = 0; w < workers; ++w) {
    const int lo = static_cast<int>(static_cast<long long>(n) * w / workers);
    const int hi = static_cast<int>(static_cast<long long>(n) * (w + 1) / workers);
    pool.emplace_back([&fn, w, lo, hi] { fn(w, lo, hi); });
  }
  for (auto& t : pool) t.join();
}

class GridSearch {
 public:
  GridSearch(const MarketModel& model, const InvestmentSpec& spec, const SearchGrid& grid,
             const ScenarioSet& scenarios, const GsOptions& options)
      : model_(model), spec_(spec), grid_(grid), sc_(scenarios), opt_(options) {
    K_ = grid.size();
    T_ = scenarios.size();
    N_ = model.index.N;
    q_ = model.index.num_params();
    workers_ = options.workers > 0 ? options.workers
                                   : std::max(1, static_cast<int>(std::thread::hardware_concurrency()));
    for (int b : grid.buses) capcol_.push_back(model.index.theta_cap(OwnerClass::New, b));
    B_ = static_cast<int>(grid.buses.size());

    xg_.resize(K_, B_);
    for (int k = 0; k < K_; ++k) {
      for (int b = 0; b < B_; ++b) xg_(k, b) = grid.points[k][grid.buses[b]];
    }
    alpha_.resize(T_, B_);
    theta0_.resize(q_, T_);
    const Vec zero = Vec::Zero(N_);
    for (int t = 0; t < T_; ++t) {
      theta0_.col(t) = theta_map(model.index, scenarios[t], zero);
      for (int b = 0; b < B_; ++b) alpha_(t, b) = scenarios[t].alpha_n[grid.buses[b]];
    }
    kx_.resize(K_);
    for (int k = 0; k < K_; ++k) kx_[k] = spec.k.dot(grid.points[k]);

    words_ = (T_ + 63) / 64;
    bits_.assign(static_cast<std::size_t>(K_) * words_, ~std::uint64_t{0});
    if (T_ % 64) {
      const std::uint64_t tail = (std::uint64_t{1} << (T_ % 64)) - 1;
      for (int k = 0; k < K_; ++k) bits_[static_cast<std::size_t>(k) * words_ + words_ - 1] = tail;
    }
    rem_x_.assign(K_, T_);
    rem_t_.assign(T_, K_);
    total_ = static_cast<long long>(K_) * T_;
    acc_.resize(K_);
    bad_.assign(K_, 0);
    if (opt_.keep_records) records_.resize(static_cast<std::size_t>(K_) * T_);
  }

  GsResult run() {
    const auto start = Clock::now();
    RegionCache local;
    RegionCache& cache = opt_.cache ? *opt_.cache : local;
    const std::size_t cached = cache.size();
    for (std::size_t i = 0; i < cached && total_ > 0; ++i) {
      stats_.cache_hits += scan(cache.at(i));
    }

    PortableRng rng(opt_.seed);
    std::set<ActiveSetSignature> seen;
    while (total_ > 0) {
      const auto [k, t] = draw(rng);
      take(k, t);
      const Vec theta = theta_map(model_.index, sc_[t], grid_.points[k]);
      const PrimalDualSolution sol = solve(model_.problem, theta, opt_.solver);
      ++stats_.qp_solves;
      if (!sol.has_solution()) {
        ++stats_.infeasible_count;
        bad_[k] = 1;
        errors_.push_back({k, t, "OPF " + to_string(sol.status)});
        continue;
      }
      const CriticalRegion* region = nullptr;
      if (sol.status == SolveStatus::Optimal) {
        try {
          const ActiveSetSignature sig(sol.active_set);
          region = cache.get(sig);
          if (!region) {
            auto [ptr, inserted] = cache.insert(region_from_solution(model_.problem, sol));
            region = ptr;
            stats_.regions_built += inserted;
          }
          if (seen.insert(sig).second) {
            ++stats_.distinct_signatures;
            signatures_.push_back(sig);
          }
        } catch (const RegionUnavailable&) {
          region = nullptr;
        }
      }
      if (!region) {
        ++stats_.degenerate_count;
        record_direct(k, t, sol);
        continue;
      }
      // The drawn point goes through the same affine map as its neighbours,
      // so its value does not depend on which point happened to be drawn.
      if (contains(*region, theta)) {
        const RegionMarketMap mm = region_market_map(model_, *region);
        const Vec z_pi = mm.Pi * theta + mm.pi0;
        const Vec z_p = mm.P * theta + mm.p0;
        store(k, t, z_pi, z_p, true);
      } else {
        record_direct(k, t, sol);
      }
      const long long hits = scan(*region);
      if (region_from_cache(cache, cached, *region)) stats_.cache_hits += hits;
    }
    stats_.wall_time = std::chrono::duration<double>(Clock::now() - start).count();

    GsResult res;
    res.num_points = K_;
    res.num_scenarios = T_;
    res.fhat.assign(K_, std::numeric_limits<double>::quiet_NaN());
    for (int k = 0; k < K_; ++k) {
      if (bad_[k] || !acc_[k].finite()) continue;
      res.fhat[k] = kx_[k] + acc_[k].value() / T_;
    }
    for (int k = 0; k < K_; ++k) {
      if (std::isnan(res.fhat[k])) continue;
      if (res.argmin < 0 || res.fhat[k] < res.fhat[res.argmin] ||
          (res.fhat[k] == res.fhat[res.argmin] &&
           grid_.points[k].lpNorm<1>() < grid_.points[res.argmin].lpNorm<1>())) {
        res.argmin = k;
      }
    }
    res.stats = stats_;
    res.errors = std::move(errors_);
    res.signatures = std::move(signatures_);
    res.records = std::move(records_);
    return res;
  }

 private:
  static bool region_from_cache(const RegionCache& cache, std::size_t cached, const CriticalRegion& r) {
    for (std::size_t i = 0; i < cached; ++i) {
      if (&cache.at(i) == &r) return true;
    }
    return false;
  }

  std::pair<int, int> draw(PortableRng& rng) const {
    long long r = static_cast<long long>(rng.below(static_cast<std::uint64_t>(total_)));
    int k = 0;
    while (r >= rem_x_[k]) r -= rem_x_[k++];
    const std::uint64_t* row = &bits_[static_cast<std::size_t>(k) * words_];
    for (int w = 0;; ++w) {
      const int c = std::popcount(row[w]);
      if (r < c) {
        std::uint64_t word = row[w];
        for (long long s = 0; s < r; ++s) word &= word - 1;
        return {k, w * 64 + std::countr_zero(word)};
      }
      r -= c;
    }
  }

  void take(int k, int t) {
    bits_[static_cast<std::size_t>(k) * words_ + t / 64] &= ~(std::uint64_t{1} << (t % 64));
    --rem_x_[k];
    --rem_t_[t];
    --total_;
  }

  void store(int k, int t, const Vec& pi, const Vec& p, bool direct) {
    const Vec p_e = p.segment(model_.index.var(OwnerClass::Existing, 0), N_);
    const Vec p_n = p.segment(model_.index.var(OwnerClass::New, 0), N_);
    const double m = -pi.dot(p_e + p_n) + spec_.g_e.value(p_e) + spec_.g_n.value(p_n);
    acc_[k].add(m);
    if (opt_.keep_records) {
      auto& rec = records_[static_cast<std::size_t>(k) * T_ + t];
      rec.p = p;
      rec.pi = pi;
      rec.f = kx_[k] + m;
      rec.direct = direct;
    }
  }

  void record_direct(int k, int t, const PrimalDualSolution& sol) {
    store(k, t, lmp(model_, sol), sol.p, true);
  }

  // Claims every remaining point inside `region`; returns the number claimed.
  long long scan(const CriticalRegion& region) {
    const Mat& PA = region.poly_A;
    const int rows = static_cast<int>(PA.rows());
    std::vector<int> cols;
    std::vector<int> colpos(T_, -1);
    for (int t = 0; t < T_; ++t) {
      if (rem_t_[t] > 0) {
        colpos[t] = static_cast<int>(cols.size());
        cols.push_back(t);
      }
    }
    if (cols.empty()) return 0;
    Mat sub(q_, static_cast<Eigen::Index>(cols.size()));
    for (std::size_t c = 0; c < cols.size(); ++c) sub.col(c) = theta0_.col(cols[c]);
    const Mat A0 = PA * sub;
    Mat Acap(rows, B_);
    for (int b = 0; b < B_; ++b) Acap.col(b) = PA.col(capcol_[b]);
    const Vec bound = region.poly_b.array() + kMembershipTol;

    std::vector<std::vector<std::pair<int, int>>> found(workers_);
    parallel_ranges(workers_, K_, [&](int w, int lo, int hi) {
      Vec wx(B_);
      for (int k = lo; k < hi; ++k) {
        if (rem_x_[k] == 0) continue;
        std::uint64_t* row = &bits_[static_cast<std::size_t>(k) * words_];
        for (int wd = 0; wd < words_; ++wd) {
          std::uint64_t word = row[wd];
          while (word) {
            const int t = wd * 64 + std::countr_zero(word);
            word &= word - 1;
            for (int b = 0; b < B_; ++b) wx[b] = alpha_(t, b) * xg_(k, b);
            const double* a0 = A0.col(colpos[t]).data();
            bool inside = true;
            for (int i = 0; i < rows && inside; ++i) {
              double v = a0[i];
              for (int b = 0; b < B_; ++b) v += Acap(i, b) * wx[b];
              inside = v <= bound[i];
            }
            if (inside) {
              row[wd] &= ~(std::uint64_t{1} << (t % 64));
              found[w].emplace_back(k, t);
            }
          }
        }
      }
    });

    long long hits = 0;
    std::vector<char> need(T_, 0);
    for (const auto& f : found) {
      for (auto [k, t] : f) {
        need[t] = 1;
        --rem_x_[k];
        --rem_t_[t];
        ++hits;
      }
    }
    if (hits == 0) return 0;
    total_ -= hits;
    stats_.closed_form_hits += hits;

    const RegionMarketMap mm = region_market_map(model_, region);
    Mat U(4 * N_, q_);
    U << mm.Pi, mm.P;
    Vec u0(4 * N_);
    u0 << mm.pi0, mm.p0;
    std::vector<int> ucol(T_, -1);
    std::vector<int> ts;
    for (int t = 0; t < T_; ++t) {
      if (need[t]) {
        ucol[t] = static_cast<int>(ts.size());
        ts.push_back(t);
      }
    }
    Mat th(q_, static_cast<Eigen::Index>(ts.size()));
    for (std::size_t c = 0; c < ts.size(); ++c) th.col(c) = theta0_.col(ts[c]);
    Mat Z = U * th;
    Z.colwise() += u0;
    Mat Ucap(4 * N_, B_);
    for (int b = 0; b < B_; ++b) Ucap.col(b) = U.col(capcol_[b]);

    parallel_ranges(workers_, workers_, [&](int, int lo, int hi) {
      Vec wx(B_);
      for (int w = lo; w < hi; ++w) {
        for (auto [k, t] : found[w]) {
          for (int b = 0; b < B_; ++b) wx[b] = alpha_(t, b) * xg_(k, b);
          const Vec z = Z.col(ucol[t]) + Ucap * wx;
          store(k, t, z.head(N_), z.tail(3 * N_), false);
        }
      }
    });
    return hits;
  }

  const MarketModel& model_;
  const InvestmentSpec& spec_;
  const SearchGrid& grid_;
  const ScenarioSet& sc_;
  GsOptions opt_;
  int K_ = 0, T_ = 0, N_ = 0, q_ = 0, B_ = 0, workers_ = 1, words_ = 0;
  std::vector<int> capcol_;
  Mat xg_, alpha_, theta0_;
  std::vector<double> kx_;
  std::vector<std::uint64_t> bits_;
  std::vector<int> rem_x_, rem_t_;
  long long total_ = 0;
  std::vector<ExactSum> acc_;
  std::vector<char> bad_;
  std::vector<PointRecord> records_;
  std::vector<GsError> errors_;
  std::vector<ActiveSetSignature> signatures_;
  GsStats stats_;
};

}  // namespace

GsResult run_grid_search(const MarketModel& model, const InvestmentSpec& spec, const SearchGrid& grid,
                         const ScenarioSet& scenarios, const GsOptions& options) {
  if (scenarios.size() < 1) throw std::invalid_argument("grid search: no scenarios");
  if (grid.size() < 1) throw std::invalid_argument("grid search: empty grid");
  GridSearch gs(model, spec, grid, scenarios, options);
  return gs.run();
}

std::vector<std::pair<Vec, double>> objective_curve(const GsResult& result, const SearchGrid& grid) {
  std::vector<std::pair<Vec, double>> out;
  out.reserve(grid.points.size());
  for (int k = 0; k < grid.size(); ++k) out.emplace_back(grid.points[k], result.fhat[k]);
  return out;
}

}  // namespace mppinvest
