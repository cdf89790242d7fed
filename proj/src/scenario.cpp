#include "mppinvest/scenario.hpp"

#include <algorithm>
#include <cerrno>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <map>
#include <sstream>

namespace mppinvest {

ParseError::ParseError(const std::string& what, int line, int column)
    : ScenarioError(what + " (line " + std::to_string(line) + ", column " + std::to_string(column) + ")"),
      line_(line),
      column_(column) {}

const std::vector<std::string>& scenario_fields() {
  static const std::vector<std::string> names{"c_r",    "c_e",    "c_n",     "load",    "pbar_r",
                                              "pbar_e", "alpha_r", "alpha_e", "alpha_n"};
  return names;
}

Vec& scenario_field(Scenario& s, const std::string& name) {
  if (name == "c_r") return s.c_r;
  if (name == "c_e") return s.c_e;
  if (name == "c_n") return s.c_n;
  if (name == "load") return s.load;
  if (name == "pbar_r") return s.pbar_r;
  if (name == "pbar_e") return s.pbar_e;
  if (name == "alpha_r") return s.alpha_r;
  if (name == "alpha_e") return s.alpha_e;
  if (name == "alpha_n") return s.alpha_n;
  throw ScenarioError("unknown scenario field '" + name + "'");
}

const Vec& scenario_field(const Scenario& s, const std::string& name) {
  return scenario_field(const_cast<Scenario&>(s), name);
}

void Scenario::validate(int N) const {
  for (const auto& name : scenario_fields()) {
    const Vec& v = scenario_field(*this, name);
    if (v.size() != N) {
      throw ScenarioError("field " + name + " has " + std::to_string(v.size()) + " entries, expected " +
                          std::to_string(N));
    }
    for (int i = 0; i < N; ++i) {
      const double x = v[i];
      if (!std::isfinite(x)) throw ScenarioError("field " + name + " at bus " + std::to_string(i) + " is not finite");
      const bool is_alpha = name.rfind("alpha_", 0) == 0;
      const bool nonneg = name == "load" || name == "pbar_r" || name == "pbar_e";
      if (is_alpha && (x < 0.0 || x > 1.0)) {
        throw ScenarioError("field " + name + " at bus " + std::to_string(i) + " is " + format_double(x) +
                            ", outside [0, 1]");
      }
      if (nonneg && x < 0.0) {
        throw ScenarioError("field " + name + " at bus " + std::to_string(i) + " is negative");
      }
    }
  }
}

bool Scenario::operator==(const Scenario& o) const {
  for (const auto& name : scenario_fields()) {
    const Vec& a = scenario_field(*this, name);
    const Vec& b = scenario_field(o, name);
    if (a.size() != b.size() || a != b) return false;
  }
  return true;
}

void ScenarioSet::validate(int N) const {
  if (scenarios.empty()) throw ScenarioError("no scenarios");
  for (std::size_t t = 0; t < scenarios.size(); ++t) {
    try {
      scenarios[t].validate(N);
    } catch (const ScenarioError& e) {
      throw ScenarioError("scenario " + std::to_string(t) + ": " + e.what());
    }
  }
}

std::uint64_t PortableRng::below(std::uint64_t n) {
  if (n == 0) throw std::invalid_argument("PortableRng::below(0)");
  const std::uint64_t threshold = (0 - n) % n;  // 2^64 mod n
  for (;;) {
    const std::uint64_t x = engine_();
    if (x >= threshold) return x % n;
  }
}

Scenario base_scenario(const Network& network) {
  const int N = network.num_buses();
  Scenario s;
  for (const auto& name : scenario_fields()) scenario_field(s, name) = Vec::Zero(N);
  s.alpha_r.setOnes();
  s.alpha_e.setOnes();
  s.alpha_n.setOnes();
  for (int i = 0; i < N; ++i) {
    s.c_r[i] = network.unit(OwnerClass::Rival, i).lin_cost;
    s.c_e[i] = network.unit(OwnerClass::Existing, i).lin_cost;
    s.c_n[i] = network.unit(OwnerClass::New, i).lin_cost;
    s.pbar_r[i] = network.unit(OwnerClass::Rival, i).installed_capacity;
    s.pbar_e[i] = network.unit(OwnerClass::Existing, i).installed_capacity;
  }
  return s;
}

Vec theta_map(const MarketIndex& ix, const Scenario& s, const Vec& x) {
  const int N = ix.N;
  if (x.size() != N || s.num_buses() != N) {
    throw std::invalid_argument("theta_map: expected " + std::to_string(N) + " buses, got x of size " +
                                std::to_string(x.size()) + " and scenario of size " +
                                std::to_string(s.num_buses()));
  }
  Vec th(ix.num_params());
  th << s.c_r, s.c_e, s.c_n, s.load, s.pbar_r, s.pbar_e, s.alpha_n.cwiseProduct(x);
  return th;
}

Mat jacobian_theta_x(const MarketIndex& ix, const Scenario& s) {
  Mat J = Mat::Zero(ix.num_params(), ix.N);
  for (int i = 0; i < ix.N; ++i) J(ix.theta_cap(OwnerClass::New, i), i) = s.alpha_n[i];
  return J;
}

ScenarioSet generate_synthetic(const Scenario& base, const Mat& base_profiles, int T, std::uint64_t seed,
                               std::optional<double> peak_target) {
  if (T < 1) throw std::invalid_argument("generate_synthetic: T must be >= 1");
  if (base_profiles.rows() == 0 || base_profiles.cols() == 0) {
    throw std::invalid_argument("generate_synthetic: empty base profiles");
  }
  const int N = base.num_buses();
  if (base_profiles.cols() != N) {
    throw std::invalid_argument("generate_synthetic: base profiles need one column per bus");
  }
  PortableRng rng(seed);
  Mat loads(T, N);
  for (int t = 0; t < T; ++t) {
    for (int i = 0; i < N; ++i) {
      const double u = rng.uniform(-0.05, 0.05);
      loads(t, i) = base_profiles(t % base_profiles.rows(), i) * (1.0 + u);
    }
  }
  if (peak_target) {
    const double peak = loads.rowwise().sum().maxCoeff();
    if (peak > 0.0) loads *= *peak_target / peak;
  }
  ScenarioSet set = scenarios_from_loads(base, loads);
  set.rng_seed = seed;
  return set;
}

ScenarioSet sample_uniform_load(const Scenario& base, int bus, double lo, double hi, int T,
                                std::uint64_t seed) {
  if (T < 1) throw std::invalid_argument("sample_uniform_load: T must be >= 1");
  if (bus < 0 || bus >= base.num_buses()) throw std::invalid_argument("sample_uniform_load: unknown bus");
  PortableRng rng(seed);
  ScenarioSet set;
  set.rng_seed = seed;
  set.scenarios.assign(T, base);
  for (auto& s : set.scenarios) s.load[bus] = rng.uniform(lo, hi);
  return set;
}

ScenarioSet scenarios_from_loads(const Scenario& base, const Mat& loads) {
  if (loads.cols() != base.num_buses()) {
    throw std::invalid_argument("load matrix has " + std::to_string(loads.cols()) + " columns, expected " +
                                std::to_string(base.num_buses()));
  }
  ScenarioSet set;
  set.scenarios.assign(loads.rows(), base);
  for (Eigen::Index t = 0; t < loads.rows(); ++t) set.scenarios[t].load = loads.row(t).transpose();
  return set;
}

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

namespace {

// Splits one CSV line, remembering the 1-based column where each cell starts.
std::vector<std::pair<std::string, int>> split_csv(const std::string& line) {
  std::vector<std::pair<std::string, int>> cells;
  std::size_t start = 0;
  for (;;) {
    const std::size_t comma = line.find(',', start);
    std::string cell = line.substr(start, comma == std::string::npos ? std::string::npos : comma - start);
    const auto first = cell.find_first_not_of(" \t\r");
    const auto last = cell.find_last_not_of(" \t\r");
    cell = first == std::string::npos ? "" : cell.substr(first, last - first + 1);
    cells.emplace_back(cell, static_cast<int>(start) + 1);
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return cells;
}

double parse_number(const std::string& text, int line, int column) {
  if (text.empty()) throw ParseError("empty numeric cell", line, column);
  errno = 0;
  char* end = nullptr;
  const double v = std::strtod(text.c_str(), &end);
  if (end != text.c_str() + text.size() || errno == ERANGE) {
    throw ParseError("invalid number '" + text + "'", line, column);
  }
  return v;
}

long parse_int(const std::string& text, int line, int column) {
  char* end = nullptr;
  const long v = std::strtol(text.c_str(), &end, 10);
  if (text.empty() || end != text.c_str() + text.size() || v < 0) {
    throw ParseError("invalid non-negative integer '" + text + "'", line, column);
  }
  return v;
}

std::string slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open '" + path.string() + "'");
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

bool is_json_path(const std::filesystem::path& path) {
  auto ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext == ".json";
}

}  // namespace

ScenarioSet parse_scenarios_csv(const std::string& text) {
  struct Cell {
    std::string field;
    long bus;
    double value;
  };
  std::map<long, std::vector<Cell>> by_id;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  bool header_seen = false;
  std::uint64_t seed = 0;
  long max_bus = -1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    if (line[0] == '#') {
      const auto pos = line.find("seed=");
      if (pos != std::string::npos) seed = std::strtoull(line.c_str() + pos + 5, nullptr, 10);
      continue;
    }
    auto cells = split_csv(line);
    if (!header_seen) {
      header_seen = true;
      if (cells.size() == 4 && cells[0].first == "scenario_id") {
        const char* expect[] = {"scenario_id", "field", "bus", "value"};
        for (int c = 0; c < 4; ++c) {
          if (cells[c].first != expect[c]) {
            throw ParseError("expected header column '" + std::string(expect[c]) + "'", lineno, cells[c].second);
          }
        }
        continue;
      }
    }
    if (cells.size() != 4) {
      throw ParseError("expected 4 columns, found " + std::to_string(cells.size()), lineno,
                       cells.back().second);
    }
    const long id = parse_int(cells[0].first, lineno, cells[0].second);
    const auto& fields = scenario_fields();
    if (std::find(fields.begin(), fields.end(), cells[1].first) == fields.end()) {
      throw ParseError("unknown field '" + cells[1].first + "'", lineno, cells[1].second);
    }
    const long bus = parse_int(cells[2].first, lineno, cells[2].second);
    const double value = parse_number(cells[3].first, lineno, cells[3].second);
    max_bus = std::max(max_bus, bus);
    by_id[id].push_back({cells[1].first, bus, value});
  }
  if (by_id.empty()) throw ScenarioError("no scenarios");
  const int N = static_cast<int>(max_bus + 1);
  ScenarioSet set;
  set.rng_seed = seed;
  for (auto& [id, cells] : by_id) {
    Scenario s;
    for (const auto& name : scenario_fields()) {
      scenario_field(s, name) = name.rfind("alpha_", 0) == 0 ? Vec::Ones(N) : Vec::Zero(N);
    }
    for (const auto& c : cells) scenario_field(s, c.field)[c.bus] = c.value;
    set.scenarios.push_back(std::move(s));
  }
  set.validate(N);
  return set;
}

std::string format_scenarios_csv(const ScenarioSet& set, const std::vector<std::string>& header_comments) {
  std::string out;
  for (const auto& c : header_comments) out += "# " + c + "\n";
  out += "# seed=" + std::to_string(set.rng_seed) + "\n";
  out += "scenario_id,field,bus,value\n";
  for (std::size_t t = 0; t < set.scenarios.size(); ++t) {
    const auto& s = set.scenarios[t];
    for (const auto& name : scenario_fields()) {
      const Vec& v = scenario_field(s, name);
      for (Eigen::Index i = 0; i < v.size(); ++i) {
        out += std::to_string(t) + "," + name + "," + std::to_string(i) + "," + format_double(v[i]) + "\n";
      }
    }
  }
  return out;
}

ScenarioSet scenarios_from_json(const nlohmann::json& j) {
  const auto& arr = j.is_array() ? j : j.at("scenarios");
  ScenarioSet set;
  if (j.is_object()) set.rng_seed = j.value("seed", std::uint64_t{0});
  int N = -1;
  for (std::size_t t = 0; t < arr.size(); ++t) {
    const auto& js = arr[t];
    if (!js.contains("load")) throw ScenarioError("scenario " + std::to_string(t) + ": missing field load");
    const auto load = js.at("load").get<std::vector<double>>();
    if (N < 0) N = static_cast<int>(load.size());
    Scenario s;
    for (const auto& name : scenario_fields()) {
      Vec& v = scenario_field(s, name);
      if (js.contains(name)) {
        const auto vals = js.at(name).get<std::vector<double>>();
        v = Eigen::Map<const Vec>(vals.data(), static_cast<Eigen::Index>(vals.size()));
      } else {
        v = name.rfind("alpha_", 0) == 0 ? Vec::Ones(N) : Vec::Zero(N);
      }
    }
    set.scenarios.push_back(std::move(s));
  }
  if (set.scenarios.empty()) throw ScenarioError("no scenarios");
  set.validate(N);
  return set;
}

nlohmann::json scenarios_to_json(const ScenarioSet& set) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& s : set.scenarios) {
    nlohmann::json js;
    for (const auto& name : scenario_fields()) {
      const Vec& v = scenario_field(s, name);
      js[name] = std::vector<double>(v.data(), v.data() + v.size());
    }
    arr.push_back(std::move(js));
  }
  return {{"seed", set.rng_seed}, {"scenarios", arr}};
}

ScenarioSet load_scenarios(const std::filesystem::path& path) {
  const std::string text = slurp(path);
  if (is_json_path(path)) {
    if (text.find_first_not_of(" \t\r\n") == std::string::npos) throw ScenarioError("no scenarios");
    try {
      return scenarios_from_json(nlohmann::json::parse(text));
    } catch (const nlohmann::json::parse_error& e) {
      throw ScenarioError(path.string() + ": " + e.what());
    } catch (const nlohmann::json::exception& e) {
      throw ScenarioError(path.string() + ": " + e.what());
    }
  }
  return parse_scenarios_csv(text);
}

void save_scenarios(const ScenarioSet& set, const std::filesystem::path& path,
                    const std::vector<std::string>& header_comments) {
  if (set.scenarios.empty()) throw ScenarioError("no scenarios");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
  if (is_json_path(path)) {
    nlohmann::json j = scenarios_to_json(set);
    if (!header_comments.empty()) j["header"] = header_comments;
    // dump() prints doubles with round-trip precision
    out << j.dump() << '\n';
  } else {
    out << format_scenarios_csv(set, header_comments);
  }
}

Mat load_wide_matrix(const std::filesystem::path& path) {
  const std::string text = slurp(path);
  std::istringstream in(text);
  std::string line;
  std::vector<std::vector<double>> rows;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos || line[0] == '#') continue;
    auto cells = split_csv(line);
    if (rows.empty()) {
      char* end = nullptr;
      std::strtod(cells[0].first.c_str(), &end);
      if (cells[0].first.empty() || *end != '\0') continue;  // header row
    }
    std::vector<double> row;
    for (const auto& [cell, col] : cells) row.push_back(parse_number(cell, lineno, col));
    if (!rows.empty() && row.size() != rows.front().size()) {
      throw ParseError("row has " + std::to_string(row.size()) + " columns, expected " +
                           std::to_string(rows.front().size()),
                       lineno, 1);
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw ScenarioError("no scenarios");
  Mat m(rows.size(), rows.front().size());
  for (std::size_t t = 0; t < rows.size(); ++t) {
    for (std::size_t i = 0; i < rows[t].size(); ++i) m(t, i) = rows[t][i];
  }
  return m;
}

}  // namespace mppinvest
