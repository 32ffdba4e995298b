#include "mgmpc/grid.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <queue>
#include <sstream>

#include "mgmpc/error.hpp"

namespace mgmpc {

namespace {

void check_size(std::vector<GridViolation>& out, const std::string& key, std::size_t got, int want) {
  if (got != static_cast<std::size_t>(want)) {
    std::ostringstream os;
    os << key << " has " << got << " entries, expected " << want;
    out.push_back({key, os.str()});
  }
}

int bus_count(const GridSpec& spec) {
  if (spec.n_bus > 0) return spec.n_bus;
  int n = 0;
  for (const auto& l : spec.topology) n = std::max({n, l.from_bus + 1, l.to_bus + 1});
  for (const auto* v : {&spec.bus_of.t, &spec.bus_of.s, &spec.bus_of.r, &spec.bus_of.d})
    for (int b : *v) n = std::max(n, b + 1);
  return n;
}

bool connected(const GridSpec& spec, int n_bus) {
  if (n_bus <= 1) return true;
  std::vector<std::vector<int>> adj(static_cast<std::size_t>(n_bus));
  for (const auto& l : spec.topology) {
    if (l.from_bus < 0 || l.to_bus < 0 || l.from_bus >= n_bus || l.to_bus >= n_bus) continue;
    adj[static_cast<std::size_t>(l.from_bus)].push_back(l.to_bus);
    adj[static_cast<std::size_t>(l.to_bus)].push_back(l.from_bus);
  }
  std::vector<bool> seen(static_cast<std::size_t>(n_bus), false);
  std::queue<int> q;
  q.push(0);
  seen[0] = true;
  int count = 1;
  while (!q.empty()) {
    const int b = q.front();
    q.pop();
    for (int c : adj[static_cast<std::size_t>(b)])
      if (!seen[static_cast<std::size_t>(c)]) {
        seen[static_cast<std::size_t>(c)] = true;
        ++count;
        q.push(c);
      }
  }
  return count == n_bus;
}

}  // namespace

std::vector<GridViolation> validate_grid(const GridSpec& s) {
  std::vector<GridViolation> out;
  auto bad = [&](const std::string& key, const std::string& msg) { out.push_back({key, msg}); };

  if (s.n_t < 0 || s.n_s < 0 || s.n_r < 0 || s.n_d < 0 || s.n_e < 0) bad("n_t", "unit counts must be nonnegative");
  if (s.n_s < 1) bad("n_s", "at least one storage unit is required");

  check_size(out, "p_t_min", s.p_t_min.size(), s.n_t);
  check_size(out, "p_t_max", s.p_t_max.size(), s.n_t);
  check_size(out, "p_s_min", s.p_s_min.size(), s.n_s);
  check_size(out, "p_s_max", s.p_s_max.size(), s.n_s);
  check_size(out, "p_r_min", s.p_r_min.size(), s.n_r);
  check_size(out, "p_r_max", s.p_r_max.size(), s.n_r);
  check_size(out, "x_min", s.x_min.size(), s.n_s);
  check_size(out, "x_max", s.x_max.size(), s.n_s);
  check_size(out, "x_soft_min", s.x_soft_min.size(), s.n_s);
  check_size(out, "x_soft_max", s.x_soft_max.size(), s.n_s);
  check_size(out, "K_t", s.K_t.size(), s.n_t);
  check_size(out, "K_s", s.K_s.size(), s.n_s);
  check_size(out, "p_e_min", s.p_e_min.size(), s.n_e);
  check_size(out, "p_e_max", s.p_e_max.size(), s.n_e);
  check_size(out, "topology", s.topology.size(), s.n_e);
  check_size(out, "bus_of.t", s.bus_of.t.size(), s.n_t);
  check_size(out, "bus_of.s", s.bus_of.s.size(), s.n_s);
  check_size(out, "bus_of.r", s.bus_of.r.size(), s.n_r);
  check_size(out, "bus_of.d", s.bus_of.d.size(), s.n_d);
  check_size(out, "c_t", s.c_t.size(), s.n_t);
  check_size(out, "c_t_lin", s.c_t_lin.size(), s.n_t);
  check_size(out, "c_t_quad", s.c_t_quad.size(), s.n_t);
  check_size(out, "c_t_switch", s.c_t_switch.size(), s.n_t);
  check_size(out, "c_r", s.c_r.size(), s.n_r);
  if (!out.empty()) return out;

  for (int i = 0; i < s.n_t; ++i) {
    const auto k = static_cast<std::size_t>(i);
    if (!(s.p_t_min[k] >= 0.0)) bad("p_t_min", "conventional minimum power must be >= 0");
    if (!(s.p_t_max[k] >= s.p_t_min[k])) bad("p_t_max", "p_t_max must be >= p_t_min");
    if (!(s.K_t[k] > 0.0)) bad("K_t", "power-sharing gains must be positive");
    if (!(s.c_t[k] > 0.0)) bad("c_t", "cost weights must be positive");
    if (!(s.c_t_lin[k] > 0.0)) bad("c_t_lin", "cost weights must be positive");
    if (!(s.c_t_quad[k] > 0.0)) bad("c_t_quad", "cost weights must be positive");
    if (!(s.c_t_switch[k] > 0.0)) bad("c_t_switch", "cost weights must be positive");
  }
  for (int i = 0; i < s.n_s; ++i) {
    const auto k = static_cast<std::size_t>(i);
    if (!(s.p_s_min[k] <= 0.0)) bad("p_s_min", "storage minimum power must be <= 0");
    if (!(s.p_s_max[k] >= 0.0)) bad("p_s_max", "storage maximum power must be >= 0");
    if (!(s.x_min[k] >= 0.0)) bad("x_min", "x_min must be >= 0");
    if (!(s.x_max[k] >= s.x_min[k])) bad("x_max", "x_max must be >= x_min");
    if (!(s.x_soft_min[k] >= s.x_min[k])) bad("x_soft_min", "x_soft_min must be >= x_min");
    if (!(s.x_soft_max[k] >= s.x_soft_min[k])) bad("x_soft_max", "x_soft_min must be <= x_soft_max");
    if (!(s.x_soft_max[k] <= s.x_max[k])) bad("x_soft_max", "x_soft_max must be <= x_max");
    if (!(s.K_s[k] > 0.0)) bad("K_s", "power-sharing gains must be positive");
  }
  for (int i = 0; i < s.n_r; ++i) {
    const auto k = static_cast<std::size_t>(i);
    if (!(s.p_r_min[k] >= 0.0)) bad("p_r_min", "renewable minimum power must be >= 0");
    if (!(s.p_r_max[k] >= s.p_r_min[k])) bad("p_r_max", "p_r_max must be >= p_r_min");
    if (!(s.c_r[k] > 0.0)) bad("c_r", "cost weights must be positive");
  }
  for (int i = 0; i < s.n_e; ++i) {
    const auto k = static_cast<std::size_t>(i);
    if (!(s.p_e_min[k] <= 0.0)) bad("p_e_min", "line lower limit must be <= 0");
    if (!(s.p_e_max[k] >= 0.0)) bad("p_e_max", "line upper limit must be >= 0");
    if (!(s.topology[k].susceptance != 0.0 && std::isfinite(s.topology[k].susceptance)))
      bad("topology", "line susceptance must be finite and nonzero");
    if (s.topology[k].from_bus == s.topology[k].to_bus) bad("topology", "line connects a bus to itself");
  }
  if (!(s.T_s > 0.0)) bad("T_s", "sample time must be positive");
  if (!(s.gamma > 0.0 && s.gamma <= 1.0)) bad("gamma", "discount factor must lie in (0, 1]");

  const int n_bus = bus_count(s);
  if (s.n_bus != 0 && s.n_bus < 1) bad("n_bus", "n_bus must be positive");
  auto check_buses = [&](const std::vector<int>& v, const std::string& key) {
    for (int b : v)
      if (b < 0 || b >= n_bus) bad(key, "bus index out of range");
  };
  check_buses(s.bus_of.t, "bus_of.t");
  check_buses(s.bus_of.s, "bus_of.s");
  check_buses(s.bus_of.r, "bus_of.r");
  check_buses(s.bus_of.d, "bus_of.d");
  for (const auto& l : s.topology)
    if (l.from_bus < 0 || l.to_bus < 0 || l.from_bus >= n_bus || l.to_bus >= n_bus)
      bad("topology", "line endpoint out of range");
  if (!connected(s, n_bus)) bad("topology", "network graph is not connected");
  return out;
}

void require_valid(const GridSpec& spec) {
  const auto v = validate_grid(spec);
  if (v.empty()) return;
  std::string msg = "invalid grid spec:";
  for (const auto& e : v) msg += " [" + e.key + "] " + e.message + ";";
  throw InputError(msg);
}

Eigen::MatrixXd bus_ptdf(const GridSpec& spec) {
  const int n_bus = bus_count(spec);
  if (!connected(spec, n_bus)) throw ModelError("ptdf: network graph is not connected");
  const int n_e = static_cast<int>(spec.topology.size());
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(n_e, n_bus);
  if (n_bus <= 1 || n_e == 0) return out;

  Eigen::MatrixXd B = Eigen::MatrixXd::Zero(n_bus, n_bus);
  for (const auto& l : spec.topology) {
    if (l.susceptance == 0.0) throw ModelError("ptdf: zero susceptance");
    const double b = std::abs(l.susceptance);
    B(l.from_bus, l.from_bus) += b;
    B(l.to_bus, l.to_bus) += b;
    B(l.from_bus, l.to_bus) -= b;
    B(l.to_bus, l.from_bus) -= b;
  }
  const int m = n_bus - 1;
  const Eigen::MatrixXd reduced = B.bottomRightCorner(m, m);
  Eigen::FullPivLU<Eigen::MatrixXd> lu(reduced);
  if (!lu.isInvertible()) throw ModelError("ptdf: reduced susceptance matrix is singular");
  // Angles for unit injections at buses 1..n_bus-1; bus 0 stays at zero.
  Eigen::MatrixXd theta = Eigen::MatrixXd::Zero(n_bus, n_bus);
  theta.bottomRightCorner(m, m) = lu.inverse();
  for (int e = 0; e < n_e; ++e) {
    const auto& l = spec.topology[static_cast<std::size_t>(e)];
    out.row(e) = std::abs(l.susceptance) * (theta.row(l.from_bus) - theta.row(l.to_bus));
  }
  return out;
}

Eigen::MatrixXd ptdf_matrix(const GridSpec& spec) {
  const Eigen::MatrixXd bus = bus_ptdf(spec);
  const int cols = spec.n_t + spec.n_s + spec.n_r + spec.n_d;
  Eigen::MatrixXd F(bus.rows(), cols);
  int c = 0;
  for (const auto* v : {&spec.bus_of.t, &spec.bus_of.s, &spec.bus_of.r, &spec.bus_of.d})
    for (int b : *v) F.col(c++) = bus.col(b);
  return F;
}

GridSpec case_study_grid() {
  GridSpec g;
  g.n_t = g.n_s = g.n_r = g.n_d = 1;
  g.p_t_min = {0.4};
  g.p_t_max = {1.0};
  g.p_r_min = {0.0};
  g.p_r_max = {2.0};
  g.p_s_min = {-1.0};
  g.p_s_max = {1.0};
  g.x_min = {0.0};
  g.x_max = {4.0};
  g.x_soft_min = {1.0};
  g.x_soft_max = {3.0};
  g.K_t = {1.0};
  g.K_s = {1.0};
  g.T_s = 0.5;

  // Ring of four buses: generator, storage, PV, load.
  g.n_bus = 4;
  g.topology = {{0, 1, -20.0}, {1, 2, -20.0}, {2, 3, -20.0}, {3, 0, -20.0}};
  g.n_e = 4;
  g.p_e_min.assign(4, -1.3);
  g.p_e_max.assign(4, 1.3);
  g.bus_of = {{0}, {1}, {2}, {3}};

  g.c_t = {0.1178};
  g.c_t_lin = {0.751};
  g.c_t_quad = {0.0693};
  g.c_t_switch = {0.3162};
  g.c_r = {1.0};
  g.gamma = 0.95;
  return g;
}

nlohmann::json grid_to_json(const GridSpec& s) {
  nlohmann::json topo = nlohmann::json::array();
  for (const auto& l : s.topology) topo.push_back({{"from", l.from_bus}, {"to", l.to_bus}, {"susceptance", l.susceptance}});
  return {
      {"n_t", s.n_t}, {"n_s", s.n_s}, {"n_r", s.n_r}, {"n_d", s.n_d}, {"n_e", s.n_e}, {"n_bus", bus_count(s)},
      {"p_t_min", s.p_t_min}, {"p_t_max", s.p_t_max},
      {"p_s_min", s.p_s_min}, {"p_s_max", s.p_s_max},
      {"p_r_min", s.p_r_min}, {"p_r_max", s.p_r_max},
      {"x_min", s.x_min}, {"x_max", s.x_max},
      {"x_soft_min", s.x_soft_min}, {"x_soft_max", s.x_soft_max},
      {"K_t", s.K_t}, {"K_s", s.K_s}, {"T_s", s.T_s},
      {"p_e_min", s.p_e_min}, {"p_e_max", s.p_e_max},
      {"topology", topo},
      {"bus_of", {{"t", s.bus_of.t}, {"s", s.bus_of.s}, {"r", s.bus_of.r}, {"d", s.bus_of.d}}},
      {"c_t", s.c_t}, {"c_t_lin", s.c_t_lin}, {"c_t_quad", s.c_t_quad},
      {"c_t_switch", s.c_t_switch}, {"c_r", s.c_r}, {"gamma", s.gamma},
  };
}

GridSpec grid_from_json(const nlohmann::json& j) {
  GridSpec s;
  try {
    s.n_t = j.at("n_t").get<int>();
    s.n_s = j.at("n_s").get<int>();
    s.n_r = j.at("n_r").get<int>();
    s.n_d = j.at("n_d").get<int>();
    s.n_e = j.at("n_e").get<int>();
    s.n_bus = j.value("n_bus", 0);
    auto vec = [&](const char* key) { return j.at(key).get<std::vector<double>>(); };
    s.p_t_min = vec("p_t_min");
    s.p_t_max = vec("p_t_max");
    s.p_s_min = vec("p_s_min");
    s.p_s_max = vec("p_s_max");
    s.p_r_min = vec("p_r_min");
    s.p_r_max = vec("p_r_max");
    s.x_min = vec("x_min");
    s.x_max = vec("x_max");
    s.x_soft_min = vec("x_soft_min");
    s.x_soft_max = vec("x_soft_max");
    s.K_t = vec("K_t");
    s.K_s = vec("K_s");
    s.T_s = j.value("T_s", 0.5);
    s.p_e_min = vec("p_e_min");
    s.p_e_max = vec("p_e_max");
    for (const auto& l : j.at("topology"))
      s.topology.push_back({l.at("from").get<int>(), l.at("to").get<int>(), l.at("susceptance").get<double>()});
    const auto& b = j.at("bus_of");
    s.bus_of.t = b.at("t").get<std::vector<int>>();
    s.bus_of.s = b.at("s").get<std::vector<int>>();
    s.bus_of.r = b.at("r").get<std::vector<int>>();
    s.bus_of.d = b.at("d").get<std::vector<int>>();
    s.c_t = vec("c_t");
    s.c_t_lin = vec("c_t_lin");
    s.c_t_quad = vec("c_t_quad");
    s.c_t_switch = vec("c_t_switch");
    s.c_r = vec("c_r");
    s.gamma = j.at("gamma").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("grid spec: ") + e.what());
  }
  if (s.n_bus == 0) s.n_bus = bus_count(s);
  return s;
}

}  // namespace mgmpc
