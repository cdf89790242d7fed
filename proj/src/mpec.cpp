#include "mppinvest/mpec.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace mppinvest {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

std::string idx_name(const std::string& prefix, int a, int t) {
  return prefix + "_" + std::to_string(a) + "_" + std::to_string(t);
}

std::string p_name(OwnerClass c, int bus, int t) {
  return "p_" + std::string(to_string(c)) + "_" + std::to_string(bus) + "_" + std::to_string(t);
}

class Builder {
 public:
  explicit Builder(MilpModel& m) : m_(m) {}

  int add_var(std::string name, double lb, double ub, VarType type = VarType::Continuous) {
    m_.vars.push_back({std::move(name), lb, ub, type});
    m_.obj_lin.push_back(0.0);
    return m_.num_vars() - 1;
  }

  int add_row(std::string name, std::vector<std::pair<int, double>> coefs, char sense, double rhs) {
    std::erase_if(coefs, [](const auto& c) { return c.second == 0.0; });
    m_.rows.push_back({std::move(name), std::move(coefs), sense, rhs});
    return static_cast<int>(m_.rows.size()) - 1;
  }

 private:
  MilpModel& m_;
};

}  // namespace

int MilpModel::num_binaries() const {
  return static_cast<int>(std::count_if(vars.begin(), vars.end(),
                                        [](const MilpVar& v) { return v.type == VarType::Binary; }));
}

int MilpModel::var_index(const std::string& name) const {
  for (int i = 0; i < num_vars(); ++i) {
    if (vars[i].name == name) return i;
  }
  return -1;
}

double MilpModel::objective(const Vec& z) const {
  double v = obj_const;
  for (int i = 0; i < num_vars(); ++i) v += obj_lin[i] * z[i];
  for (const QuadTerm& q : obj_quad) v += 0.5 * q.coef * z[q.i] * z[q.j];
  return v;
}

void MilpModel::rebuild_metadata() {
  x_buses.clear();
  pairs.clear();
  std::unordered_map<std::string, int> var_of, row_of;
  for (int i = 0; i < num_vars(); ++i) var_of.emplace(vars[i].name, i);
  for (int r = 0; r < static_cast<int>(rows.size()); ++r) row_of.emplace(rows[r].name, r);
  for (int i = 0; i < num_vars(); ++i) {
    const std::string& n = vars[i].name;
    if (n.rfind("x_", 0) == 0) {
      x_buses.push_back(std::stoi(n.substr(2)));
    } else if (n.rfind("phi_", 0) == 0) {
      const std::string tail = n.substr(4);  // <row>_<t>
      const auto sep = tail.find('_');
      if (sep == std::string::npos) continue;
      const auto dual = var_of.find("lam_" + tail);
      const auto prim = row_of.find("prim_" + tail);
      if (dual == var_of.end() || prim == row_of.end()) continue;
      pairs.push_back({i, prim->second, dual->second, std::stoi(tail.substr(sep + 1)),
                       std::stoi(tail.substr(0, sep))});
    }
  }
}

bool MilpModel::operator==(const MilpModel& o) const {
  return vars == o.vars && rows == o.rows && obj_lin == o.obj_lin && obj_const == o.obj_const &&
         obj_quad == o.obj_quad && big_m == o.big_m && num_scenarios == o.num_scenarios &&
         num_buses == o.num_buses && x_buses == o.x_buses && pairs == o.pairs;
}

MilpModel build_milp(const MarketModel& model, const InvestmentSpec& spec, const ScenarioSet& scenarios,
                     double big_m) {
  if (!(big_m > 0.0) || !std::isfinite(big_m)) {
    throw std::invalid_argument("build_milp: big-M must be positive and finite");
  }
  const MarketIndex& ix = model.index;
  const ParametricProblem& P = model.problem;
  const int N = ix.N, L = ix.L, n = ix.num_vars(), mi = ix.num_ineq(), me = P.num_eq();
  if (spec.num_buses() != N) throw std::invalid_argument("build_milp: spec does not match the network");
  if (scenarios.size() < 1) throw std::invalid_argument("build_milp: no scenarios");

  MilpModel m;
  m.big_m = big_m;
  m.num_scenarios = scenarios.size();
  m.num_buses = N;
  Builder b(m);

  std::vector<int> xv;
  for (int bus : spec.buses) {
    xv.push_back(b.add_var("x_" + std::to_string(bus), spec.x_min[bus], spec.x_max[bus]));
    m.obj_lin.back() = spec.k[bus];
    m.x_buses.push_back(bus);
  }
  if (!spec.box_only()) {
    for (int r = 0; r < spec.delta.rows(); ++r) {
      std::vector<std::pair<int, double>> c;
      for (std::size_t k = 0; k < xv.size(); ++k) c.emplace_back(xv[k], spec.delta(r, spec.buses[k]));
      b.add_row("inv_" + std::to_string(r), std::move(c), '<', spec.delta_rhs[r]);
    }
  }

  const double w = scenarios.size() ? 1.0 / scenarios.size() : 0.0;
  const Vec zero_x = Vec::Zero(N);
  for (int t = 0; t < scenarios.size(); ++t) {
    const Scenario& s = scenarios[t];
    const Vec th0 = theta_map(ix, s, zero_x);
    const Mat J = jacobian_theta_x(ix, s);
    const Vec ineq_rhs = P.b + P.E * th0;
    const Vec eq_rhs = P.y + P.F * th0;
    const Mat EJ = P.E * J, FJ = P.F * J, CJ = P.C * J;
    const Vec lin = P.C * th0 + P.d;

    std::vector<int> pv(n), lv(mi), mv(me), fv(mi);
    for (int c = 0; c < kNumOwnerClasses; ++c) {
      for (int i = 0; i < N; ++i) {
        const auto oc = static_cast<OwnerClass>(c);
        pv[ix.var(oc, i)] = b.add_var(p_name(oc, i, t), -kInf, kInf);
      }
    }
    for (int j = 0; j < mi; ++j) lv[j] = b.add_var(idx_name("lam", j, t), 0.0, kInf);
    for (int e = 0; e < me; ++e) mv[e] = b.add_var(idx_name("mu", e, t), -kInf, kInf);
    for (int j = 0; j < mi; ++j) fv[j] = b.add_var(idx_name("phi", j, t), 0.0, 1.0, VarType::Binary);

    // Primal feasibility: A p - E J x <= b + E theta0.
    std::vector<int> prim_rows(mi);
    for (int j = 0; j < mi; ++j) {
      std::vector<std::pair<int, double>> c;
      for (int i = 0; i < n; ++i) c.emplace_back(pv[i], P.A(j, i));
      for (std::size_t k = 0; k < xv.size(); ++k) c.emplace_back(xv[k], -EJ(j, spec.buses[k]));
      prim_rows[j] = b.add_row(idx_name("prim", j, t), std::move(c), '<', ineq_rhs[j]);
    }
    for (int e = 0; e < me; ++e) {
      std::vector<std::pair<int, double>> c;
      for (int i = 0; i < n; ++i) c.emplace_back(pv[i], P.B(e, i));
      for (std::size_t k = 0; k < xv.size(); ++k) c.emplace_back(xv[k], -FJ(e, spec.buses[k]));
      b.add_row(idx_name("bal", e, t), std::move(c), '=', eq_rhs[e]);
    }
    // Stationarity: H p + C J x + A' lam + B' mu = -(C theta0 + d).
    for (int i = 0; i < n; ++i) {
      std::vector<std::pair<int, double>> c;
      for (int k = 0; k < n; ++k) c.emplace_back(pv[k], P.H(i, k));
      for (std::size_t k = 0; k < xv.size(); ++k) c.emplace_back(xv[k], CJ(i, spec.buses[k]));
      for (int j = 0; j < mi; ++j) c.emplace_back(lv[j], P.A(j, i));
      for (int e = 0; e < me; ++e) c.emplace_back(mv[e], P.B(e, i));
      b.add_row(idx_name("stat", i, t), std::move(c), '=', -lin[i]);
    }
    // 0 <= slack <= phi M and 0 <= lam <= (1 - phi) M.
    for (int j = 0; j < mi; ++j) {
      std::vector<std::pair<int, double>> c;
      for (int i = 0; i < n; ++i) c.emplace_back(pv[i], -P.A(j, i));
      for (std::size_t k = 0; k < xv.size(); ++k) c.emplace_back(xv[k], EJ(j, spec.buses[k]));
      c.emplace_back(fv[j], -big_m);
      b.add_row(idx_name("cs_slack", j, t), std::move(c), '<', -ineq_rhs[j]);
      b.add_row(idx_name("cs_dual", j, t), {{lv[j], 1.0}, {fv[j], big_m}}, '<', big_m);
      m.pairs.push_back({fv[j], prim_rows[j], lv[j], t, j});
    }

    // Revenue through strong duality: -pi'(p_e + p_n) = p_r'H_r p_r + c_r'p_r
    //   + lam_flow'rhs_flow + lam_capmax_r'pbar_r + mu_bal * sum(load).
    for (int i = 0; i < N; ++i) {
      const int r = ix.var(OwnerClass::Rival, i);
      const int e = ix.var(OwnerClass::Existing, i);
      const int nw = ix.var(OwnerClass::New, i);
      m.obj_lin[pv[r]] += w * s.c_r[i];
      m.obj_lin[pv[e]] += w * spec.g_e.lin[i];
      m.obj_lin[pv[nw]] += w * spec.g_n.lin[i];
      const double hr = 2.0 * P.H(r, r), qe = spec.g_e.quad[i], qn = spec.g_n.quad[i];
      if (hr != 0.0) m.obj_quad.push_back({pv[r], pv[r], w * hr});
      if (qe != 0.0) m.obj_quad.push_back({pv[e], pv[e], w * qe});
      if (qn != 0.0) m.obj_quad.push_back({pv[nw], pv[nw], w * qn});
      m.obj_lin[lv[ix.cap_max_row(OwnerClass::Rival, i)]] += w * s.pbar_r[i];
    }
    for (int j = 0; j < 2 * L; ++j) m.obj_lin[lv[j]] += w * ineq_rhs[j];
    m.obj_lin[mv[ix.balance_row()]] += w * s.load.sum();
  }
  return m;
}

// ---------------------------------------------------------------------------
// LP text

namespace {

std::string num(double v) {
  if (v == kInf) return "+inf";
  if (v == -kInf) return "-inf";
  return format_double(v);
}

class LineWrapper {
 public:
  explicit LineWrapper(std::ostringstream& os) : os_(os) {}
  void put(const std::string& tok) {
    if (width_ + tok.size() > 100) {
      os_ << "\n   ";
      width_ = 3;
    }
    os_ << ' ' << tok;
    width_ += tok.size() + 1;
  }
  void reset(std::size_t w) { width_ = w; }

 private:
  std::ostringstream& os_;
  std::size_t width_ = 0;
};

void put_term(LineWrapper& lw, double coef, const std::string& name) {
  lw.put((coef < 0 ? "- " : "+ ") + num(std::abs(coef)) + " " + name);
}

}  // namespace

std::string format_lp(const MilpModel& m) {
  if (m.num_scenarios < 1) throw std::invalid_argument("MILP has no scenarios; nothing to export");
  std::ostringstream os;
  os << "\\ mppinvest single-level investment model\n";
  os << "\\ big_m = " << num(m.big_m) << "\n";
  os << "\\ scenarios = " << m.num_scenarios << "\n";
  os << "\\ buses = " << m.num_buses << "\n";
  os << "Minimize\n obj:";
  LineWrapper lw(os);
  lw.reset(5);
  bool any = false;
  for (int i = 0; i < m.num_vars(); ++i) {
    if (m.obj_lin[i] != 0.0) {
      put_term(lw, m.obj_lin[i], m.vars[i].name);
      any = true;
    }
  }
  if (m.obj_const != 0.0) {
    lw.put((m.obj_const < 0 ? "- " : "+ ") + num(std::abs(m.obj_const)));
    any = true;
  }
  if (!m.obj_quad.empty()) {
    lw.put("+ [");
    for (const QuadTerm& q : m.obj_quad) {
      const std::string prod = q.i == q.j ? m.vars[q.i].name + " ^ 2"
                                          : m.vars[q.i].name + " * " + m.vars[q.j].name;
      put_term(lw, q.coef, prod);
    }
    lw.put("] / 2");
    any = true;
  }
  if (!any) lw.put("0 " + m.vars.front().name);
  os << "\nSubject To\n";
  for (const MilpRow& r : m.rows) {
    os << ' ' << r.name << ':';
    lw.reset(r.name.size() + 2);
    if (r.coefs.empty()) lw.put("0 " + m.vars.front().name);
    for (const auto& [v, c] : r.coefs) put_term(lw, c, m.vars[v].name);
    lw.put(std::string(r.sense == '<' ? "<=" : r.sense == '>' ? ">=" : "=") + " " + num(r.rhs));
    os << '\n';
  }
  os << "Bounds\n";
  for (const MilpVar& v : m.vars) {
    if (v.lb == -kInf && v.ub == kInf) {
      os << ' ' << v.name << " free\n";
    } else {
      os << ' ' << num(v.lb) << " <= " << v.name << " <= " << num(v.ub) << '\n';
    }
  }
  os << "Binaries\n";
  for (const MilpVar& v : m.vars) {
    if (v.type == VarType::Binary) os << ' ' << v.name << '\n';
  }
  os << "End\n";
  return os.str();
}

void write_lp_file(const MilpModel& milp, const std::filesystem::path& path) {
  const std::string text = format_lp(milp);
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out << text;
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

namespace {

double parse_num(const std::string& tok) {
  if (tok == "+inf" || tok == "inf" || tok == "+infinity" || tok == "infinity") return kInf;
  if (tok == "-inf" || tok == "-infinity") return -kInf;
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(tok, &used);
  } catch (const std::exception&) {
    throw std::runtime_error("LP parse: expected a number, got '" + tok + "'");
  }
  if (used != tok.size()) throw std::runtime_error("LP parse: expected a number, got '" + tok + "'");
  return v;
}

bool is_number(const std::string& tok) {
  if (tok.empty()) return false;
  const char c = tok[0];
  return std::isdigit(static_cast<unsigned char>(c)) || c == '.' ||
         ((c == '+' || c == '-') && tok.size() > 1 &&
          (std::isdigit(static_cast<unsigned char>(tok[1])) || tok[1] == '.' || tok.substr(1) == "inf"));
}

class LpReader {
 public:
  explicit LpReader(const std::string& text) { split(text); }

  MilpModel read() {
    MilpModel m;
    // Bounds fix the variable order; read them first.
    for (const auto& line : section("bounds")) read_bound(m, line);
    for (const auto& line : section("binaries")) {
      std::istringstream ls(line);
      std::string name;
      while (ls >> name) m.vars[var_at(name)].type = VarType::Binary;
    }
    m.obj_lin.assign(m.vars.size(), 0.0);
    read_objective(m, tokens(section("minimize")));
    read_rows(m, tokens(section("subject to")));
    m.big_m = big_m_;
    m.num_scenarios = scenarios_;
    m.num_buses = buses_;
    m.rebuild_metadata();
    return m;
  }

 private:
  std::vector<std::pair<std::string, std::vector<std::string>>> sections_;
  std::unordered_map<std::string, int> index_;
  double big_m_ = 0.0;
  int scenarios_ = 0;
  int buses_ = 0;

  void split(const std::string& text) {
    std::istringstream is(text);
    std::string line;
    while (std::getline(is, line)) {
      if (!line.empty() && line.back() == '\r') line.pop_back();
      const auto first = line.find_first_not_of(" \t");
      if (first == std::string::npos) continue;
      if (line[first] == '\\') {
        std::istringstream cs(line.substr(first + 1));
        std::string key, eq, value;
        if (cs >> key >> eq >> value && eq == "=") {
          if (key == "big_m") big_m_ = parse_num(value);
          if (key == "scenarios") scenarios_ = std::stoi(value);
          if (key == "buses") buses_ = std::stoi(value);
        }
        continue;
      }
      std::string lower = line.substr(first);
      std::transform(lower.begin(), lower.end(), lower.begin(),
                     [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
      while (!lower.empty() && std::isspace(static_cast<unsigned char>(lower.back()))) lower.pop_back();
      if (lower == "minimize" || lower == "subject to" || lower == "bounds" || lower == "binaries" ||
          lower == "end") {
        sections_.push_back({lower, {}});
        continue;
      }
      if (sections_.empty()) throw std::runtime_error("LP parse: content before the first section");
      sections_.back().second.push_back(line);
    }
    if (sections_.empty() || sections_.back().first != "end") {
      throw std::runtime_error("LP parse: missing End");
    }
  }

  const std::vector<std::string>& section(const std::string& name) const {
    static const std::vector<std::string> empty;
    for (const auto& [n, lines] : sections_) {
      if (n == name) return lines;
    }
    return empty;
  }

  static std::vector<std::string> tokens(const std::vector<std::string>& lines) {
    std::vector<std::string> out;
    for (const auto& line : lines) {
      std::istringstream ls(line);
      std::string tok;
      while (ls >> tok) out.push_back(tok);
    }
    return out;
  }

  void read_bound(MilpModel& m, const std::string& line) {
    std::istringstream ls(line);
    std::vector<std::string> t;
    std::string tok;
    while (ls >> tok) t.push_back(tok);
    MilpVar v;
    if (t.size() == 2 && t[1] == "free") {
      v = {t[0], -kInf, kInf, VarType::Continuous};
    } else if (t.size() == 5 && t[1] == "<=" && t[3] == "<=") {
      v = {t[2], parse_num(t[0]), parse_num(t[4]), VarType::Continuous};
    } else {
      throw std::runtime_error("LP parse: unsupported bound line '" + line + "'");
    }
    if (index_.count(v.name)) throw std::runtime_error("LP parse: duplicate bound for " + v.name);
    index_.emplace(v.name, m.num_vars());
    m.vars.push_back(v);
  }

  // Parses "[+|-] [coef] name" terms starting at pos; stops at a token that
  // cannot start a term.
  template <typename OnTerm>
  std::size_t read_terms(const std::vector<std::string>& t, std::size_t pos, OnTerm on_term,
                         bool quadratic) const {
    while (pos < t.size()) {
      double sign = 1.0;
      std::size_t p = pos;
      if (t[p] == "+" || t[p] == "-") {
        sign = t[p] == "-" ? -1.0 : 1.0;
        ++p;
      }
      if (p >= t.size()) break;
      double coef = 1.0;
      bool has_coef = false;
      if (is_number(t[p])) {
        coef = parse_num(t[p]);
        has_coef = true;
        ++p;
      }
      if (p >= t.size() || !index_.count(t[p])) {
        if (has_coef && !quadratic && p == t.size()) {
          on_term(-1, -1, sign * coef);
          return p;
        }
        if (has_coef && !quadratic && (p < t.size() && (t[p] == "+" || t[p] == "-" || t[p] == "["))) {
          on_term(-1, -1, sign * coef);
          pos = p;
          continue;
        }
        break;
      }
      const int a = index_.at(t[p++]);
      int b = -1;
      if (quadratic) {
        if (p + 1 < t.size() && t[p] == "^" && t[p + 1] == "2") {
          b = a;
          p += 2;
        } else if (p + 1 < t.size() && t[p] == "*") {
          b = var_at(t[p + 1]);
          p += 2;
        } else {
          throw std::runtime_error("LP parse: malformed quadratic term near '" + t[p - 1] + "'");
        }
      }
      on_term(a, b, sign * coef);
      pos = p;
    }
    return pos;
  }

  int var_at(const std::string& name) const {
    const auto it = index_.find(name);
    if (it == index_.end()) throw std::runtime_error("LP parse: undeclared variable '" + name + "'");
    return it->second;
  }

  void read_objective(MilpModel& m, const std::vector<std::string>& t) {
    std::size_t pos = 0;
    if (pos < t.size() && t[pos].back() == ':') ++pos;
    pos = read_terms(t, pos,
                     [&](int a, int, double c) {
                       if (a < 0) {
                         m.obj_const += c;
                       } else {
                         m.obj_lin[a] += c;
                       }
                     },
                     false);
    if (pos < t.size()) {
      if (t[pos] == "+") ++pos;
      if (pos >= t.size() || t[pos] != "[") throw std::runtime_error("LP parse: bad objective near '" + t[pos] + "'");
      ++pos;
      pos = read_terms(t, pos, [&](int a, int b, double c) { m.obj_quad.push_back({a, b, c}); }, true);
      if (pos + 3 > t.size() || t[pos] != "]" || t[pos + 1] != "/" || t[pos + 2] != "2") {
        throw std::runtime_error("LP parse: quadratic block must end with '] / 2'");
      }
      pos += 3;
    }
    if (pos != t.size()) throw std::runtime_error("LP parse: trailing objective tokens at '" + t[pos] + "'");
  }

  void read_rows(MilpModel& m, const std::vector<std::string>& t) {
    std::size_t pos = 0;
    while (pos < t.size()) {
      if (t[pos].size() < 2 || t[pos].back() != ':') {
        throw std::runtime_error("LP parse: expected a row name, got '" + t[pos] + "'");
      }
      MilpRow row;
      row.name = t[pos].substr(0, t[pos].size() - 1);
      ++pos;
      pos = read_terms(t, pos,
                       [&](int a, int, double c) {
                         if (a < 0) throw std::runtime_error("LP parse: constant on the left of " + row.name);
                         if (c != 0.0) row.coefs.emplace_back(a, c);
                       },
                       false);
      if (pos + 1 >= t.size()) throw std::runtime_error("LP parse: row " + row.name + " is incomplete");
      const std::string& rel = t[pos];
      if (rel == "<=" || rel == "=<" || rel == "<") {
        row.sense = '<';
      } else if (rel == ">=" || rel == "=>" || rel == ">") {
        row.sense = '>';
      } else if (rel == "=") {
        row.sense = '=';
      } else {
        throw std::runtime_error("LP parse: expected a relation in row " + row.name + ", got '" + rel + "'");
      }
      row.rhs = parse_num(t[pos + 1]);
      pos += 2;
      m.rows.push_back(std::move(row));
    }
  }
};

}  // namespace

MilpModel parse_lp(const std::string& text) { return LpReader(text).read(); }

MilpModel read_lp_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_lp(ss.str());
}

// ---------------------------------------------------------------------------
// Embedding and feasibility

Vec embed_direct_solutions(const MilpModel& milp, const MarketModel& model, const InvestmentSpec& spec,
                           const ScenarioSet& scenarios, const Vec& x, const SolverOptions& solver) {
  (void)spec;
  const MarketIndex& ix = model.index;
  const ParametricProblem& P = model.problem;
  const int n = ix.num_vars(), mi = ix.num_ineq(), me = P.num_eq();
  if (scenarios.size() != milp.num_scenarios) {
    throw std::invalid_argument("embed_direct_solutions: scenario count differs from the model");
  }
  Vec z = Vec::Zero(milp.num_vars());
  std::unordered_map<std::string, int> var_of;
  for (int i = 0; i < milp.num_vars(); ++i) var_of.emplace(milp.vars[i].name, i);
  auto at = [&](const std::string& name) -> double& {
    const auto it = var_of.find(name);
    if (it == var_of.end()) throw std::invalid_argument("embed_direct_solutions: no variable " + name);
    return z[it->second];
  };
  for (int bus : milp.x_buses) at("x_" + std::to_string(bus)) = x[bus];

  for (int t = 0; t < scenarios.size(); ++t) {
    const Vec th = theta_map(ix, scenarios[t], x);
    const PrimalDualSolution sol = solve(P, th, solver);
    if (!sol.has_solution()) {
      throw std::runtime_error("embed_direct_solutions: market solve failed in scenario " + std::to_string(t) +
                               " (" + std::string(to_string(sol.status)) + ")");
    }
    const Vec slack = P.ineq_rhs(th) - P.A * sol.p;
    for (int c = 0; c < kNumOwnerClasses; ++c) {
      for (int i = 0; i < ix.N; ++i) {
        const auto oc = static_cast<OwnerClass>(c);
        at(p_name(oc, i, t)) = sol.p[ix.var(oc, i)];
      }
    }
    (void)n;
    for (int j = 0; j < mi; ++j) {
      at(idx_name("lam", j, t)) = sol.ineq_duals[j];
      const double scale = 1.0 + std::abs(P.ineq_rhs(th)[j]);
      at(idx_name("phi", j, t)) = (sol.ineq_duals[j] > 0.0 || slack[j] <= 1e-9 * scale) ? 0.0 : 1.0;
    }
    for (int e = 0; e < me; ++e) at(idx_name("mu", e, t)) = sol.eq_duals[e];
  }
  return z;
}

FeasibilityReport check_feasibility(const MilpModel& milp, const Vec& z, double tol) {
  FeasibilityReport rep;
  auto note = [&](double viol, const std::string& what) {
    if (viol > rep.max_violation) {
      rep.max_violation = viol;
      rep.worst_row = what;
    }
  };
  for (int i = 0; i < milp.num_vars(); ++i) {
    const MilpVar& v = milp.vars[i];
    note(v.lb - z[i], v.name + " lower bound");
    note(z[i] - v.ub, v.name + " upper bound");
    if (v.type == VarType::Binary) note(std::min(std::abs(z[i]), std::abs(z[i] - 1.0)), v.name + " integrality");
  }
  for (const MilpRow& r : milp.rows) {
    double lhs = 0.0, mag = std::abs(r.rhs);
    for (const auto& [v, c] : r.coefs) {
      lhs += c * z[v];
      mag = std::max(mag, std::abs(c * z[v]));
    }
    double viol = r.sense == '<' ? lhs - r.rhs : r.sense == '>' ? r.rhs - lhs : std::abs(lhs - r.rhs);
    note(viol / std::max(1.0, mag), r.name);
  }
  for (const ComplementarityPair& pr : milp.pairs) {
    const MilpRow& row = milp.rows[pr.primal_row];
    double slack = row.rhs;
    for (const auto& [v, c] : row.coefs) slack -= c * z[v];
    if (std::abs(slack) >= milp.big_m) rep.big_m_hits.push_back(row.name + " slack");
    if (std::abs(z[pr.dual_var]) >= milp.big_m) rep.big_m_hits.push_back(milp.vars[pr.dual_var].name);
  }
  rep.feasible = rep.max_violation <= tol && rep.big_m_hits.empty();
  return rep;
}

BigMReport big_m_preflight(const MarketModel& model, const ScenarioSet& scenarios,
                           const std::vector<Vec>& x_samples, double big_m, const SolverOptions& solver) {
  BigMReport rep;
  const ParametricProblem& P = model.problem;
  for (const Vec& x : x_samples) {
    for (int t = 0; t < scenarios.size(); ++t) {
      const Vec th = theta_map(model.index, scenarios[t], x);
      const PrimalDualSolution sol = solve(P, th, solver);
      if (!sol.has_solution()) continue;
      if (sol.ineq_duals.size()) rep.max_dual = std::max(rep.max_dual, sol.ineq_duals.cwiseAbs().maxCoeff());
      if (sol.eq_duals.size()) rep.max_dual = std::max(rep.max_dual, sol.eq_duals.cwiseAbs().maxCoeff());
      const Vec slack = P.ineq_rhs(th) - P.A * sol.p;
      if (slack.size()) rep.max_slack = std::max(rep.max_slack, slack.cwiseAbs().maxCoeff());
    }
  }
  rep.adequate = rep.max_dual < big_m && rep.max_slack < big_m;
  return rep;
}

// ---------------------------------------------------------------------------
// Enumeration

namespace {

constexpr double kRankTol = 1e-9;
constexpr double kConsistTol = 1e-7;

/// Row echelon form built by forward elimination only, so that adding an
/// equation appends one row and backtracking pops it.
class Echelon {
 public:
  explicit Echelon(int n) : n_(n) {}

  int size() const { return static_cast<int>(pivot_.size()); }

  /// Returns false if the equation contradicts the ones already present.
  /// A redundant equation leaves the system unchanged; `added` says which.
  bool add(Vec a, double beta, bool& added) {
    added = false;
    const double s = a.cwiseAbs().maxCoeff();
    if (s == 0.0) return std::abs(beta) <= kConsistTol * (1.0 + std::abs(beta));
    a /= s;
    beta /= s;
    for (int k = 0; k < size(); ++k) {
      const double f = a[pivot_[k]];
      if (f != 0.0) {
        a -= f * rows_[k];
        beta -= f * rhs_[k];
      }
    }
    Eigen::Index col = 0;
    if (a.cwiseAbs().maxCoeff(&col) <= kRankTol) return std::abs(beta) <= kConsistTol;
    const double piv = a[col];
    a /= piv;
    beta /= piv;
    rows_.push_back(a);
    rhs_.push_back(beta);
    pivot_.push_back(static_cast<int>(col));
    added = true;
    return true;
  }

  void pop() {
    rows_.pop_back();
    rhs_.pop_back();
    pivot_.pop_back();
  }

  /// z = z0 + N w over all solutions of the system.
  void parametrize(Vec& z0, Mat& Nmat) const {
    std::vector<char> is_pivot(n_, 0);
    for (int p : pivot_) is_pivot[p] = 1;
    std::vector<int> free_cols;
    for (int j = 0; j < n_; ++j) {
      if (!is_pivot[j]) free_cols.push_back(j);
    }
    const int d = static_cast<int>(free_cols.size());
    z0 = Vec::Zero(n_);
    Nmat = Mat::Zero(n_, d);
    for (int k = 0; k < d; ++k) Nmat(free_cols[k], k) = 1.0;
    for (int k = size() - 1; k >= 0; --k) {
      const int p = pivot_[k];
      const Vec& r = rows_[k];
      double v = rhs_[k];
      Eigen::RowVectorXd nv = Eigen::RowVectorXd::Zero(d);
      for (int j = 0; j < n_; ++j) {
        if (j == p || r[j] == 0.0) continue;
        v -= r[j] * z0[j];
        nv -= r[j] * Nmat.row(j);
      }
      z0[p] = v / r[p];
      Nmat.row(p) = nv / r[p];
    }
  }

 private:
  int n_;
  std::vector<Vec> rows_;
  std::vector<double> rhs_;
  std::vector<int> pivot_;
};

struct Enumerator {
  const MilpModel& m;
  std::vector<int> cont;      // continuous variable ids
  std::vector<int> cont_pos;  // model var -> continuous position or -1
  std::vector<int> bins;      // binary variable ids in branching order
  std::vector<int> bin_pos;   // model var -> binary position or -1
  std::vector<const ComplementarityPair*> pair_of;  // per binary position
  Echelon ech;
  std::vector<double> phi;
  Mat Q;
  Vec c;
  EnumerationResult best;

  // Rows split into continuous coefficients and binary coefficients.
  struct Row {
    Vec a;
    std::vector<std::pair<int, double>> bin;
    char sense;
    double rhs;
    bool in_base;
  };
  std::vector<Row> rows;

  explicit Enumerator(const MilpModel& model) : m(model), ech(0) {
    cont_pos.assign(m.num_vars(), -1);
    bin_pos.assign(m.num_vars(), -1);
    for (int i = 0; i < m.num_vars(); ++i) {
      if (m.vars[i].type == VarType::Binary) {
        bin_pos[i] = static_cast<int>(bins.size());
        bins.push_back(i);
      } else {
        cont_pos[i] = static_cast<int>(cont.size());
        cont.push_back(i);
      }
    }
    const int nz = static_cast<int>(cont.size());
    ech = Echelon(nz);
    pair_of.assign(bins.size(), nullptr);
    for (const ComplementarityPair& p : m.pairs) pair_of[bin_pos[p.binary]] = &p;
    Q = Mat::Zero(nz, nz);
    c = Vec::Zero(nz);
    for (int i = 0; i < m.num_vars(); ++i) {
      if (cont_pos[i] >= 0) c[cont_pos[i]] = m.obj_lin[i];
    }
    for (const QuadTerm& q : m.obj_quad) {
      const int a = cont_pos[q.i], b = cont_pos[q.j];
      if (a < 0 || b < 0) throw std::invalid_argument("enumerate_solve: quadratic terms on binaries");
      if (a == b) {
        Q(a, a) += q.coef;
      } else {
        Q(a, b) += 0.5 * q.coef;
        Q(b, a) += 0.5 * q.coef;
      }
    }
    for (const MilpRow& r : m.rows) {
      Row row{Vec::Zero(nz), {}, r.sense, r.rhs, false};
      for (const auto& [v, coef] : r.coefs) {
        if (cont_pos[v] >= 0) {
          row.a[cont_pos[v]] += coef;
        } else {
          row.bin.emplace_back(bin_pos[v], coef);
        }
      }
      row.in_base = r.sense == '=' && row.bin.empty();
      rows.push_back(std::move(row));
    }
    phi.assign(bins.size(), 0.0);
  }

  bool add_base() {
    bool added = false;
    for (const Row& r : rows) {
      if (r.in_base && !ech.add(r.a, r.rhs, added)) return false;
    }
    for (int k = 0; k < static_cast<int>(cont.size()); ++k) {
      const MilpVar& v = m.vars[cont[k]];
      if (v.lb == v.ub) {
        Vec e = Vec::Zero(cont.size());
        e[k] = 1.0;
        if (!ech.add(e, v.lb, added)) return false;
      }
    }
    return true;
  }

  void dfs(std::size_t level) {
    ++best.nodes;
    if (level == bins.size()) {
      leaf();
      return;
    }
    const MilpVar& v = m.vars[bins[level]];
    for (int val = 0; val <= 1; ++val) {
      if (val < v.lb - 1e-9 || val > v.ub + 1e-9) continue;
      phi[level] = val;
      bool added = false;
      bool ok = true;
      if (const ComplementarityPair* pr = pair_of[level]) {
        if (val == 0) {
          const Row& r = rows[pr->primal_row];
          ok = ech.add(r.a, r.rhs, added);
        } else {
          Vec e = Vec::Zero(cont.size());
          e[cont_pos[pr->dual_var]] = 1.0;
          ok = ech.add(e, 0.0, added);
        }
      }
      if (ok) dfs(level + 1);
      if (added) ech.pop();
    }
  }

  void leaf() {
    ++best.leaves;
    Vec z0;
    Mat Nm;
    ech.parametrize(z0, Nm);
    const int d = static_cast<int>(Nm.cols());
    std::vector<Eigen::RowVectorXd> ia, ea;
    std::vector<double> ib, eb;
    auto constraint = [&](const Vec& a, char sense, double rhs) -> bool {
      const double scale = std::max({1.0, std::abs(rhs), a.cwiseAbs().maxCoeff()});
      const double r = rhs - a.dot(z0);
      Eigen::RowVectorXd aw = a.transpose() * Nm;
      const bool constant = d == 0 || aw.cwiseAbs().maxCoeff() <= kRankTol * scale;
      const double tol = kConsistTol * scale;
      if (constant) {
        if (sense == '<') return r >= -tol;
        if (sense == '>') return r <= tol;
        return std::abs(r) <= tol;
      }
      if (sense == '<' || sense == '=') {
        (sense == '<' ? ia : ea).push_back(aw);
        (sense == '<' ? ib : eb).push_back(r);
      } else {
        ia.push_back(-aw);
        ib.push_back(-r);
      }
      return true;
    };
    for (const Row& r : rows) {
      if (r.in_base) continue;
      double rhs = r.rhs;
      for (const auto& [b, coef] : r.bin) rhs -= coef * phi[b];
      if (!constraint(r.a, r.sense, rhs)) return;
    }
    Vec e = Vec::Zero(cont.size());
    for (int k = 0; k < static_cast<int>(cont.size()); ++k) {
      const MilpVar& v = m.vars[cont[k]];
      if (v.lb == v.ub) continue;
      e.setZero();
      e[k] = 1.0;
      if (std::isfinite(v.ub) && !constraint(e, '<', v.ub)) return;
      if (std::isfinite(v.lb) && !constraint(e, '>', v.lb)) return;
    }

    Vec zc = z0;
    if (d > 0) {
      Mat A(ia.size(), d), B(ea.size(), d);
      Vec b(ia.size()), y(ea.size());
      for (std::size_t k = 0; k < ia.size(); ++k) {
        A.row(k) = ia[k];
        b[k] = ib[k];
      }
      for (std::size_t k = 0; k < ea.size(); ++k) {
        B.row(k) = ea[k];
        y[k] = eb[k];
      }
      const Mat Hw = Nm.transpose() * Q * Nm;
      const Vec gw = Nm.transpose() * (Q * z0 + c);
      const PrimalDualSolution s = solve_qp(Hw, gw, A, b, B, y);
      if (!s.has_solution()) return;
      zc = z0 + Nm * s.p;
    }
    const double obj = 0.5 * zc.dot(Q * zc) + c.dot(zc) + m.obj_const;
    if (!best.feasible || obj < best.objective - 1e-12 * std::max(1.0, std::abs(obj))) {
      best.feasible = true;
      best.objective = obj;
      best.z = Vec::Zero(m.num_vars());
      for (std::size_t k = 0; k < cont.size(); ++k) best.z[cont[k]] = zc[k];
      for (std::size_t k = 0; k < bins.size(); ++k) best.z[bins[k]] = phi[k];
    }
  }
};

}  // namespace

EnumerationResult enumerate_solve(const MilpModel& milp, int max_binaries) {
  const int nb = milp.num_binaries();
  if (nb > max_binaries) {
    throw std::invalid_argument("enumerate_solve: " + std::to_string(nb) + " binaries exceed the limit of " +
                                std::to_string(max_binaries));
  }
  Enumerator en(milp);
  if (en.add_base()) en.dfs(0);
  EnumerationResult out = std::move(en.best);
  if (out.feasible) {
    out.x = Vec::Zero(milp.num_buses);
    for (std::size_t k = 0; k < milp.x_buses.size(); ++k) {
      out.x[milp.x_buses[k]] = out.z[milp.var_index("x_" + std::to_string(milp.x_buses[k]))];
    }
  }
  return out;
}

}  // namespace mppinvest
