#include "mppinvest/grid_model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <queue>
#include <sstream>

namespace mppinvest {

std::string_view to_string(OwnerClass c) {
  switch (c) {
    case OwnerClass::Rival: return "rival";
    case OwnerClass::Existing: return "existing";
    case OwnerClass::New: return "new";
  }
  return "rival";
}

OwnerClass owner_class_from_string(std::string_view s) {
  if (s == "rival" || s == "r") return OwnerClass::Rival;
  if (s == "existing" || s == "e") return OwnerClass::Existing;
  if (s == "new" || s == "n") return OwnerClass::New;
  throw ModelError("unknown generator class '" + std::string(s) + "'");
}

namespace {

void check_connected(const std::vector<Line>& lines, int n) {
  if (n <= 1) return;
  std::vector<std::vector<int>> adj(n);
  for (const auto& l : lines) {
    adj[l.from_bus].push_back(l.to_bus);
    adj[l.to_bus].push_back(l.from_bus);
  }
  std::vector<bool> seen(n, false);
  std::queue<int> q;
  q.push(0);
  seen[0] = true;
  int count = 1;
  while (!q.empty()) {
    int u = q.front();
    q.pop();
    for (int v : adj[u]) {
      if (!seen[v]) {
        seen[v] = true;
        ++count;
        q.push(v);
      }
    }
  }
  if (count != n) {
    throw ModelError("network is disconnected: " + std::to_string(n - count) +
                     " bus(es) unreachable from bus 0");
  }
}

}  // namespace

Mat compute_ptdf(const std::vector<Line>& lines, int num_buses, int slack_bus) {
  const int n = num_buses;
  const int nl = static_cast<int>(lines.size());
  if (n <= 0) throw ModelError("network has no buses");
  if (slack_bus < 0 || slack_bus >= n) {
    throw ModelError("slack bus " + std::to_string(slack_bus) + " out of range");
  }
  check_connected(lines, n);

  Mat S = Mat::Zero(nl, n);
  if (n == 1 || nl == 0) return S;

  Mat bbus = Mat::Zero(n, n);
  for (const auto& l : lines) {
    bbus(l.from_bus, l.from_bus) += l.susceptance;
    bbus(l.to_bus, l.to_bus) += l.susceptance;
    bbus(l.from_bus, l.to_bus) -= l.susceptance;
    bbus(l.to_bus, l.from_bus) -= l.susceptance;
  }

  // reduced index map: bus -> row in Bred (slack removed)
  std::vector<int> red(n, -1);
  for (int i = 0, r = 0; i < n; ++i) {
    if (i != slack_bus) red[i] = r++;
  }
  Mat bred(n - 1, n - 1);
  for (int i = 0; i < n; ++i) {
    if (red[i] < 0) continue;
    for (int j = 0; j < n; ++j) {
      if (red[j] < 0) continue;
      bred(red[i], red[j]) = bbus(i, j);
    }
  }
  Eigen::FullPivLU<Mat> lu(bred);
  lu.setThreshold(1e-12);
  if (!lu.isInvertible()) {
    throw ModelError("reduced susceptance matrix is singular");
  }
  Mat x_red = lu.inverse();

  for (int k = 0; k < nl; ++k) {
    const auto& l = lines[k];
    for (int j = 0; j < n; ++j) {
      if (red[j] < 0) continue;
      double tf = red[l.from_bus] >= 0 ? x_red(red[l.from_bus], red[j]) : 0.0;
      double tt = red[l.to_bus] >= 0 ? x_red(red[l.to_bus], red[j]) : 0.0;
      S(k, j) = l.susceptance * (tf - tt);
    }
  }
  return S;
}

Mat compute_ptdf(const Network& network, int slack_bus) {
  return compute_ptdf(network.lines(), network.num_buses(), slack_bus);
}

Network Network::build(std::vector<Bus> buses, std::vector<Line> lines,
                       std::vector<Generator> generators, int slack_bus,
                       double base_mva) {
  const int n = static_cast<int>(buses.size());
  std::sort(buses.begin(), buses.end(),
            [](const Bus& a, const Bus& b) { return a.id < b.id; });
  for (int i = 0; i < n; ++i) {
    if (buses[i].id != i) {
      throw ModelError("bus ids must be unique and cover 0..N-1 (missing or duplicate id near " +
                       std::to_string(i) + ")");
    }
  }
  for (std::size_t k = 0; k < lines.size(); ++k) {
    const auto& l = lines[k];
    const std::string where = "line " + std::to_string(k) + ": ";
    if (l.from_bus < 0 || l.from_bus >= n || l.to_bus < 0 || l.to_bus >= n) {
      throw ModelError(where + "unknown bus");
    }
    if (l.from_bus == l.to_bus) throw ModelError(where + "from_bus equals to_bus");
    if (!(l.susceptance > 0.0)) throw ModelError(where + "susceptance must be > 0");
    if (!(l.flow_limit > 0.0)) throw ModelError(where + "flow limit must be > 0");
  }
  if (!(base_mva > 0.0)) throw ModelError("base MVA must be positive");

  Network net;
  net.units_.resize(static_cast<std::size_t>(kNumOwnerClasses) * n);
  net.present_.assign(net.units_.size(), false);
  for (int c = 0; c < kNumOwnerClasses; ++c) {
    for (int i = 0; i < n; ++i) {
      auto& u = net.units_[c * n + i];
      u.bus = i;
      u.owner_class = static_cast<OwnerClass>(c);
    }
  }
  for (std::size_t k = 0; k < generators.size(); ++k) {
    const auto& g = generators[k];
    const std::string where = "generator " + std::to_string(k) + ": ";
    if (g.bus < 0 || g.bus >= n) throw ModelError(where + "unknown bus");
    if (g.quad_cost < 0.0) throw ModelError(where + "quad_cost must be >= 0");
    if (g.installed_capacity < 0.0) throw ModelError(where + "capacity must be >= 0");
    const std::size_t slot = static_cast<std::size_t>(g.owner_class) * n + g.bus;
    auto& u = net.units_[slot];
    if (!net.present_[slot]) {
      u = g;
      net.present_[slot] = true;
      continue;
    }
    // duplicates: capacities add up, costs are capacity-weighted
    const double c0 = u.installed_capacity, c1 = g.installed_capacity;
    const double w = c0 + c1 > 0.0 ? c1 / (c0 + c1) : 0.5;
    u.quad_cost = (1.0 - w) * u.quad_cost + w * g.quad_cost;
    u.lin_cost = (1.0 - w) * u.lin_cost + w * g.lin_cost;
    u.installed_capacity = c0 + c1;
    if (!u.capacity_factor_profile_ref) u.capacity_factor_profile_ref = g.capacity_factor_profile_ref;
  }
  for (int i = 0; i < n; ++i) {
    net.units_[static_cast<int>(OwnerClass::New) * n + i].installed_capacity = 0.0;
  }

  net.ptdf_ = compute_ptdf(lines, n, slack_bus);
  net.buses_ = std::move(buses);
  net.lines_ = std::move(lines);
  net.slack_bus_ = slack_bus;
  net.base_mva_ = base_mva;
  return net;
}

const Generator& Network::unit(OwnerClass c, int bus) const {
  return units_.at(static_cast<std::size_t>(c) * buses_.size() + bus);
}

bool Network::has_unit(OwnerClass c, int bus) const {
  return present_.at(static_cast<std::size_t>(c) * buses_.size() + bus);
}

Vec Network::flow_limits() const {
  Vec f(num_lines());
  for (int k = 0; k < num_lines(); ++k) f[k] = lines_[k].flow_limit;
  return f;
}

double max_investment_bound(const Network& network, const Mat& load_history, int bus) {
  if (bus < 0 || bus >= network.num_buses()) {
    throw ModelError("unknown bus " + std::to_string(bus));
  }
  if (load_history.rows() == 0) throw ModelError("load history is empty");
  if (load_history.cols() != network.num_buses()) {
    throw ModelError("load history must have one column per bus");
  }
  double bound = 0.0;
  for (const auto& l : network.lines()) {
    if (l.from_bus == bus || l.to_bus == bus) bound += l.flow_limit;
  }
  return bound + load_history.col(bus).maxCoeff();
}

Network network_from_json(const nlohmann::json& j) {
  std::vector<Bus> buses;
  if (!j.contains("buses")) throw ModelError("network JSON: missing 'buses'");
  for (const auto& b : j.at("buses")) {
    Bus bus;
    if (b.is_number_integer()) {
      bus.id = b.get<int>();
    } else {
      bus.id = b.at("id").get<int>();
      if (b.contains("load_profile")) bus.load_profile_ref = b.at("load_profile").get<std::string>();
    }
    buses.push_back(bus);
  }
  std::vector<Line> lines;
  if (j.contains("lines")) {
    for (const auto& l : j.at("lines")) {
      Line line;
      line.from_bus = l.at("from").get<int>();
      line.to_bus = l.at("to").get<int>();
      line.susceptance = l.value("susceptance", 1.0);
      line.flow_limit = l.at("limit").get<double>();
      lines.push_back(line);
    }
  }
  std::vector<Generator> gens;
  if (j.contains("generators")) {
    for (const auto& g : j.at("generators")) {
      Generator gen;
      gen.bus = g.at("bus").get<int>();
      gen.owner_class = owner_class_from_string(g.at("class").get<std::string>());
      gen.quad_cost = g.value("quad_cost", 0.0);
      gen.lin_cost = g.value("lin_cost", 0.0);
      gen.installed_capacity = g.value("capacity", 0.0);
      if (g.contains("alpha_profile") && !g.at("alpha_profile").is_null()) {
        gen.capacity_factor_profile_ref = g.at("alpha_profile").get<std::string>();
      }
      gens.push_back(gen);
    }
  }
  return Network::build(std::move(buses), std::move(lines), std::move(gens),
                        j.value("slack", 0), j.value("base_mva", 100.0));
}

nlohmann::json network_to_json(const Network& network) {
  nlohmann::json j;
  j["buses"] = nlohmann::json::array();
  for (const auto& b : network.buses()) {
    nlohmann::json jb{{"id", b.id}};
    if (b.load_profile_ref) jb["load_profile"] = *b.load_profile_ref;
    j["buses"].push_back(jb);
  }
  j["lines"] = nlohmann::json::array();
  for (const auto& l : network.lines()) {
    j["lines"].push_back({{"from", l.from_bus}, {"to", l.to_bus},
                          {"susceptance", l.susceptance}, {"limit", l.flow_limit}});
  }
  j["generators"] = nlohmann::json::array();
  for (const auto& g : network.generators()) {
    if (!network.has_unit(g.owner_class, g.bus)) continue;
    nlohmann::json jg{{"bus", g.bus},
                      {"class", std::string(to_string(g.owner_class))},
                      {"quad_cost", g.quad_cost},
                      {"lin_cost", g.lin_cost},
                      {"capacity", g.installed_capacity}};
    if (g.capacity_factor_profile_ref) jg["alpha_profile"] = *g.capacity_factor_profile_ref;
    j["generators"].push_back(jg);
  }
  j["slack"] = network.slack_bus();
  j["base_mva"] = network.base_mva();
  return j;
}

Network load_network(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open network file '" + path.string() + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ModelError("network file '" + path.string() + "': " + e.what());
  }
  try {
    return network_from_json(j);
  } catch (const nlohmann::json::exception& e) {
    throw ModelError("network file '" + path.string() + "': " + e.what());
  }
}

}  // namespace mppinvest
