#include "mppinvest/sgd.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <stdexcept>
#include <unordered_map>

namespace mppinvest {

namespace {

Mat rows_at(const Mat& m, const std::vector<int>& idx) {
  Mat out(static_cast<Eigen::Index>(idx.size()), m.cols());
  for (std::size_t i = 0; i < idx.size(); ++i) out.row(i) = m.row(idx[i]);
  return out;
}

std::vector<int> cap_columns(const MarketIndex& ix) {
  std::vector<int> c(ix.N);
  for (int i = 0; i < ix.N; ++i) c[i] = ix.theta_cap(OwnerClass::New, i);
  return c;
}

}  // namespace

GradientCoefficients gradient_coefficients(const MarketModel& model, const CriticalRegion& region,
                                           const InvestmentSpec& spec) {
  const MarketIndex& ix = model.index;
  const int N = ix.N;
  const RegionMarketMap mm = region_market_map(model, region);
  GradientCoefficients gc;
  gc.signature = region.signature;
  gc.Pi = mm.Pi;
  gc.pi0 = mm.pi0;
  gc.Pe = mm.P.middleRows(ix.var(OwnerClass::Existing, 0), N);
  gc.Pn = mm.P.middleRows(ix.var(OwnerClass::New, 0), N);
  gc.pe0 = mm.p0.segment(ix.var(OwnerClass::Existing, 0), N);
  gc.pn0 = mm.p0.segment(ix.var(OwnerClass::New, 0), N);
  gc.P = gc.Pe + gc.Pn;
  gc.p0 = gc.pe0 + gc.pn0;

  const std::vector<int> cap = cap_columns(ix);
  const Mat PiT = rows_at(gc.Pi.transpose(), cap);  // N x N: column c of Pi, as rows
  const Mat PT = rows_at(gc.P.transpose(), cap);
  gc.R_rows = PiT * gc.P + PT * gc.Pi;
  gc.r_rows = PiT * gc.p0 + PT * gc.pi0;

  const Mat PeT = rows_at(gc.Pe.transpose(), cap);
  const Mat PnT = rows_at(gc.Pn.transpose(), cap);
  const auto De = spec.g_e.quad.asDiagonal();
  const auto Dn = spec.g_n.quad.asDiagonal();
  gc.G_rows = -gc.R_rows + PeT * (De * gc.Pe) + PnT * (Dn * gc.Pn);
  gc.g_rows = -gc.r_rows + PeT * (De * gc.pe0 + spec.g_e.lin) + PnT * (Dn * gc.pn0 + spec.g_n.lin);
  return gc;
}

Vec revenue_gradient(const GradientCoefficients& gc, const MarketModel& model, const Scenario& scenario,
                     const Vec& x) {
  const Vec theta = theta_map(model.index, scenario, x);
  return scenario.alpha_n.cwiseProduct(gc.R_rows * theta + gc.r_rows);
}

Vec scenario_gradient(const GradientCoefficients& gc, const MarketModel& model, const Scenario& scenario,
                      const Vec& x, const InvestmentSpec& spec) {
  const Vec theta = theta_map(model.index, scenario, x);
  return spec.k + scenario.alpha_n.cwiseProduct(gc.G_rows * theta + gc.g_rows);
}

Vec project(const Vec& x, const InvestmentSpec& spec) {
  const auto N = spec.num_buses();
  if (x.size() != N) throw std::invalid_argument("project: dimension mismatch");
  if (spec.box_only()) return x.cwiseMax(spec.x_min).cwiseMin(spec.x_max);
  if (spec.contains(x, 0.0)) return x;
  Mat A(spec.delta.rows() + 2 * N, N);
  A << spec.delta, Mat::Identity(N, N), -Mat::Identity(N, N);
  Vec b(A.rows());
  b << spec.delta_rhs, spec.x_max, -spec.x_min;
  const auto s = solve_qp(Mat::Identity(N, N), -x, A, b, Mat(0, N), Vec(0));
  if (!s.has_solution()) throw std::invalid_argument("project: feasible set X is empty");
  return s.p;
}

SgdResult run_sgd(const MarketModel& model, const ScenarioSet& scenarios, const InvestmentSpec& spec,
                  const Vec& x0, const SgdOptions& opt) {
  const auto start = std::chrono::steady_clock::now();
  const int T = scenarios.size();
  const MarketIndex& ix = model.index;
  const int N = ix.N;
  const int q = ix.num_params();
  if (T < 1) throw std::invalid_argument("sgd: no scenarios");
  if (x0.size() != N) throw std::invalid_argument("sgd: x0 must have one entry per bus");
  if (opt.max_iterations < 1) throw std::invalid_argument("sgd: iteration cap must be >= 1");

  RegionCache local;
  RegionCache& cache = opt.cache ? *opt.cache : local;
  const std::vector<int>& inv = spec.buses;
  const int B = static_cast<int>(inv.size());
  Mat theta0(q, T);
  Mat alpha(T, B);
  for (int t = 0; t < T; ++t) {
    theta0.col(t) = theta_map(ix, scenarios[t], Vec::Zero(N));
    for (int b = 0; b < B; ++b) alpha(t, b) = scenarios[t].alpha_n[inv[b]];
  }

  std::unordered_map<const CriticalRegion*, Mat> a0_memo;
  std::size_t a0_bytes = 0;
  std::unordered_map<const CriticalRegion*, GradientCoefficients> coeff_memo;

  SgdResult res;
  PortableRng rng(opt.seed);
  std::vector<Vec> xs;  // xs[i - 1] = x^i
  Vec x = project(x0, spec);
  Vec avg_prev;
  int infeasible_run = 0;

  for (int k = 1; k <= opt.max_iterations; ++k) {
    xs.push_back(x);
    const int t_o = static_cast<int>(rng.below(static_cast<std::uint64_t>(T)));
    const Vec theta_o = theta_map(ix, scenarios[t_o], x);

    const CriticalRegion* region = cache.find(theta_o);
    if (region) {
      ++res.stats.cache_hits;
    } else {
      const PrimalDualSolution sol = solve(model.problem, theta_o, opt.solver);
      ++res.stats.qp_solves;
      if (!sol.has_solution()) {
        if (++infeasible_run >= 20) {
          throw std::runtime_error("sgd: market clearing " + to_string(sol.status) + " for scenario " +
                                   std::to_string(t_o) + " at iteration " + std::to_string(k) +
                                   " (20 consecutive failures)");
        }
      } else {
        infeasible_run = 0;
        if (sol.status == SolveStatus::Optimal) {
          try {
            auto [ptr, inserted] = cache.insert(region_from_solution(model.problem, sol));
            region = ptr;
            res.stats.regions_built += inserted;
          } catch (const RegionUnavailable&) {
            ++res.stats.degenerate_count;
          }
        } else {
          ++res.stats.degenerate_count;
        }
      }
    }

    SgdIteration it;
    it.k = k;
    it.x = x;
    Vec g = Vec::Zero(N);
    int c = 0;
    double fsum = 0.0;
    if (region) {
      it.signature_hash = region->signature.hash();
      it.boundary_draw = max_violation(*region, theta_o) > -kMembershipTol;
      auto memo = a0_memo.find(region);
      if (memo == a0_memo.end()) {
        const std::size_t bytes = static_cast<std::size_t>(region->poly_A.rows()) * T * sizeof(double);
        if (a0_bytes + bytes > opt.membership_cache_bytes) {
          a0_memo.clear();
          a0_bytes = 0;
        }
        memo = a0_memo.emplace(region, region->poly_A * theta0).first;
        a0_bytes += bytes;
      }
      const Mat& A0 = memo->second;
      auto cm = coeff_memo.find(region);
      if (cm == coeff_memo.end()) cm = coeff_memo.emplace(region, gradient_coefficients(model, *region, spec)).first;
      const GradientCoefficients& gc = cm->second;

      const int rows = static_cast<int>(region->poly_A.rows());
      Mat Acap(rows, B);
      for (int b = 0; b < B; ++b) Acap.col(b) = region->poly_A.col(ix.theta_cap(OwnerClass::New, inv[b]));
      const Vec bound = region->poly_b.array() + kMembershipTol;
      Vec wx(B);
      for (int t = 0; t < T; ++t) {
        for (int b = 0; b < B; ++b) wx[b] = alpha(t, b) * x[inv[b]];
        const double* a0 = A0.col(t).data();
        bool inside = true;
        for (int i = 0; i < rows && inside; ++i) {
          double v = a0[i];
          for (int b = 0; b < B; ++b) v += Acap(i, b) * wx[b];
          inside = v <= bound[i];
        }
        if (!inside) continue;
        g += scenario_gradient(gc, model, scenarios[t], x, spec);
        ++c;
        const Vec theta = theta_map(ix, scenarios[t], x);
        const Vec pe = gc.Pe * theta + gc.pe0;
        const Vec pn = gc.Pn * theta + gc.pn0;
        const Vec pi = gc.Pi * theta + gc.pi0;
        fsum += spec.k.dot(x) - pi.dot(pe + pn) + spec.g_e.value(pe) + spec.g_n.value(pn);
      }
    }
    it.batch = c;

    Vec x_next = x;
    if (c > 0) {
      // x is pinned to zero off the investable buses
      const Vec full = g;
      g.setZero();
      for (int b : inv) g[b] = full[b];
      it.grad_norm = (g / c).norm();
      it.fhat_estimate = fsum / c;
      x_next = project(x - (opt.eta / (c * std::sqrt(static_cast<double>(k)))) * g, spec);
    } else {
      ++res.stats.skipped_updates;
      it.fhat_estimate = std::numeric_limits<double>::quiet_NaN();
    }

    // moving average over i in [ceil(k/2), k]
    Vec avg = Vec::Zero(N);
    double wsum = 0.0;
    for (int i = (k + 1) / 2; i <= k; ++i) {
      const double si = std::sqrt(static_cast<double>(i));
      avg += xs[i - 1] / si;
      wsum += opt.literal_average ? si : 1.0 / si;
    }
    avg /= wsum;
    it.x_avg = avg;

    double eps = std::numeric_limits<double>::infinity();
    if (k >= 2) {
      const double diff = (avg - avg_prev).norm();
      const double nrm = avg.norm();
      eps = diff == 0.0 ? 0.0 : (nrm > 0.0 ? diff / nrm : std::numeric_limits<double>::infinity());
    }
    it.epsilon = eps;
    res.trace.push_back(std::move(it));
    res.iterations = k;
    res.epsilon = eps;
    res.x_star = avg;
    x = x_next;
    if (k >= 2 && eps < opt.tau) {
      res.converged = true;
      break;
    }
    avg_prev = avg;
  }
  res.x_last = x;
  res.stats.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return res;
}

void write_trace_csv(const SgdResult& result, const InvestmentSpec& spec, const std::filesystem::path& path,
                     const std::vector<std::string>& header_comments) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write trace '" + path.string() + "'");
  for (const auto& c : header_comments) out << "# " << c << '\n';
  out << "k";
  for (int b : spec.buses) out << ",x_" << b;
  out << ",fhat_estimate,grad_norm,c_k,region_signature_hash,epsilon\n";
  for (const auto& it : result.trace) {
    out << it.k;
    for (int b : spec.buses) out << ',' << format_double(it.x[b]);
    out << ',' << format_double(it.fhat_estimate) << ',' << format_double(it.grad_norm) << ',' << it.batch
        << ',' << it.signature_hash << ',' << format_double(it.epsilon) << '\n';
  }
}

}  // namespace mppinvest
