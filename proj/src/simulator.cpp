#include "mgmpc/simulator.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>
#include <ostream>
#include <random>

#include "mgmpc/error.hpp"
#include "mgmpc/risk.hpp"

namespace mgmpc {

namespace {

double clamp_pv(const GridSpec& spec, int unit, double v) {
  return std::clamp(v, spec.p_r_min[unit], spec.p_r_max[unit]);
}

// PV errors act multiplicatively so that nights stay dark; load errors are
// additive.
Disturbance realise(const ProfileModel& m, const GridSpec& spec, int k, const Disturbance& e) {
  const int slot = k % m.period();
  Disturbance w;
  for (int u = 0; u < spec.n_r; ++u) w.w_r.push_back(clamp_pv(spec, u, m.pv_shape[slot] * (1.0 + e.w_r[u])));
  for (int u = 0; u < spec.n_d; ++u) w.w_d.push_back(std::min(0.0, m.load_shape[slot] + e.w_d[u]));
  return w;
}

Disturbance zero_error(const GridSpec& spec) {
  return {std::vector<double>(spec.n_r, 0.0), std::vector<double>(spec.n_d, 0.0)};
}

Disturbance next_error(const ProfileModel& m, const Disturbance& prev, std::mt19937_64& rng) {
  std::normal_distribution<double> nd(0.0, 1.0);
  Disturbance e = prev;
  for (double& v : e.w_r) v = m.phi * v + m.sigma_pv * nd(rng);
  for (double& v : e.w_d) v = m.phi * v + m.sigma_load * nd(rng);
  return e;
}

double distance2(const Disturbance& a, const Disturbance& b) {
  double d = 0.0;
  for (std::size_t i = 0; i < a.w_r.size(); ++i) d += (a.w_r[i] - b.w_r[i]) * (a.w_r[i] - b.w_r[i]);
  for (std::size_t i = 0; i < a.w_d.size(); ++i) d += (a.w_d[i] - b.w_d[i]) * (a.w_d[i] - b.w_d[i]);
  return d;
}

// Previous solution advanced one stage along the realised branch.
DecodedSolution shift_solution(const ScenarioTree& old_tree, const DecodedSolution& old_sol,
                               const ScenarioTree& tree, const Disturbance& realised, const std::vector<double>& x_now) {
  int start = -1;
  double best = 0.0;
  for (int c : old_tree.children_of(0)) {
    const double d = distance2(old_tree.disturbance(c), realised);
    if (start < 0 || d < best) {
      start = c;
      best = d;
    }
  }
  std::vector<int> map(tree.node_count(), start);
  for (int i = 1; i < tree.node_count(); ++i) {
    const int parent = tree.ancestor_of(i);
    const int m = map[parent];
    const auto& siblings = tree.children_of(parent);
    const auto& old_children = old_tree.children_of(m);
    if (old_children.empty()) {
      map[i] = m;
      continue;
    }
    const int pos = static_cast<int>(std::find(siblings.begin(), siblings.end(), i) - siblings.begin());
    map[i] = old_children[std::min<std::size_t>(pos, old_children.size() - 1)];
  }
  DecodedSolution out;
  out.nodes.resize(tree.node_count());
  for (int i = 0; i < tree.node_count(); ++i) {
    const NodeSolution& src = old_sol.nodes[map[i]];
    NodeSolution& dst = out.nodes[i];
    if (!tree.is_leaf(i)) {
      int vnode = map[i];
      while (old_tree.is_leaf(vnode)) vnode = old_tree.ancestor_of(vnode);
      dst.v = old_sol.nodes[vnode].v;
    }
    dst.x = i == 0 ? x_now : src.x;
    if (i > 0) {
      dst.p_t = src.p_t;
      dst.p_s = src.p_s;
      dst.p_r = src.p_r;
      dst.phi = src.phi;
      dst.beta = src.beta;
      dst.mu = src.mu;
    }
  }
  return out;
}

double stage_var_max(const OcpProblem& ocp, const DecodedSolution& sol, const std::vector<BoundSide>& sides) {
  const ScenarioTree& tree = ocp.tree;
  double worst = -std::numeric_limits<double>::infinity();
  for (int j = 1; j <= tree.horizon(); ++j) {
    for (BoundSide side : sides) {
      for (int s = 0; s < ocp.spec.n_s; ++s) {
        DiscreteRandomVariable X;
        double mass = 0.0;
        for (int i : tree.nodes_at(j)) {
          X.values.push_back(soft_margin(ocp.spec, s, side, sol.nodes[i].x[s]));
          X.probs.push_back(tree.probability(i));
          mass += tree.probability(i);
        }
        for (double& p : X.probs) p /= mass;
        worst = std::max(worst, var_value(X, ocp.alpha));
      }
    }
  }
  return worst;
}

std::string fmt(double v) {
  if (v == 0.0) v = 0.0;  // drop negative zero
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

void header(std::ostream& os, const char* name, int n) {
  if (n == 1) {
    os << ',' << name;
    return;
  }
  for (int i = 0; i < n; ++i) os << ',' << name << '_' << i;
}

void values(std::ostream& os, const std::vector<double>& v) {
  for (double x : v) os << ',' << fmt(x);
}

}  // namespace

void ProfileModel::check() const {
  if (pv_shape.empty() || pv_shape.size() != load_shape.size())
    throw InputError("profile: pv_shape and load_shape must have the same positive length");
  for (double v : pv_shape)
    if (!(v >= 0.0)) throw InputError("profile: pv_shape entries must be nonnegative");
  for (double v : load_shape)
    if (!(v <= 0.0)) throw InputError("profile: load_shape entries must be nonpositive");
  if (!(phi >= 0.0 && phi < 1.0)) throw InputError("profile: phi must lie in [0, 1)");
  if (!(sigma_pv >= 0.0 && sigma_load >= 0.0)) throw InputError("profile: noise levels must be nonnegative");
}

ProfileModel ProfileModel::diurnal_default() {
  ProfileModel m;
  const double pi = std::acos(-1.0);
  for (int slot = 0; slot < 48; ++slot) {
    const double h = 0.5 * slot + 0.25;  // mid-interval hour of day
    m.pv_shape.push_back(h > 6.0 && h < 18.0 ? 1.8 * std::sin(pi * (h - 6.0) / 12.0) : 0.0);
    const double morning = 0.15 * std::exp(-std::pow((h - 8.0) / 2.0, 2));
    const double evening = 0.3 * std::exp(-std::pow((h - 19.5) / 2.5, 2));
    m.load_shape.push_back(-(0.6 + morning + evening));
  }
  return m;
}

TruthSeries generate_truth(const ProfileModel& model, const GridSpec& spec, int length) {
  model.check();
  if (length < 0) throw InputError("truth length must be nonnegative");
  std::mt19937_64 rng(model.seed);
  TruthSeries out;
  Disturbance e = zero_error(spec);
  for (int k = 0; k < length; ++k) {
    e = next_error(model, e, rng);
    out.error.push_back(e);
    out.w.push_back(realise(model, spec, k, e));
  }
  return out;
}

ScenarioTree forecast_tree(const ProfileModel& model, const GridSpec& spec, int k, const Disturbance& last_error,
                           const std::vector<int>& branching, int n_samples, std::uint64_t seed) {
  model.check();
  const int N = static_cast<int>(branching.size());
  if (N < 1) throw InputError("forecast horizon must be at least 1");
  if (n_samples < 1) throw InputError("forecast needs at least one sample path");
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(k), 0x5eedu};
  std::mt19937_64 rng(seq);

  std::vector<Disturbance> nominal;
  for (int j = 0; j < N; ++j) nominal.push_back(realise(model, spec, k + j, zero_error(spec)));

  const Disturbance e0 = last_error.w_r.empty() && last_error.w_d.empty() ? zero_error(spec) : last_error;
  std::vector<ErrorPath> paths(n_samples);
  for (auto& path : paths) {
    path.weight = 1.0 / n_samples;
    Disturbance e = e0;
    for (int j = 0; j < N; ++j) {
      e = next_error(model, e, rng);
      const Disturbance w = realise(model, spec, k + j, e);
      Disturbance step;
      for (int u = 0; u < spec.n_r; ++u) step.w_r.push_back(w.w_r[u] - nominal[j].w_r[u]);
      for (int u = 0; u < spec.n_d; ++u) step.w_d.push_back(w.w_d[u] - nominal[j].w_d[u]);
      path.steps.push_back(std::move(step));
    }
  }
  return build_tree(paths, branching, nominal);
}

PlantResult plant_step(const GridSpec& spec, const ControlInput& v, const Disturbance& w, const std::vector<double>& x) {
  if (static_cast<int>(v.u_t.size()) != spec.n_t || static_cast<int>(v.delta.size()) != spec.n_t ||
      static_cast<int>(v.u_s.size()) != spec.n_s || static_cast<int>(v.u_r.size()) != spec.n_r)
    throw InputError("plant_step: input dimensions do not match the grid");
  if (static_cast<int>(w.w_r.size()) != spec.n_r || static_cast<int>(w.w_d.size()) != spec.n_d)
    throw InputError("plant_step: disturbance dimensions do not match the grid");
  if (static_cast<int>(x.size()) != spec.n_s) throw InputError("plant_step: state dimension does not match the grid");
  for (double d : v.delta)
    if (d != 0.0 && d != 1.0) throw InputError("plant_step: delta must be 0 or 1");

  PlantResult r;
  double imbalance = 0.0, denom = 0.0;
  for (int k = 0; k < spec.n_r; ++k) {
    r.p_r.push_back(std::min(v.u_r[k], w.w_r[k]));
    imbalance += r.p_r[k];
  }
  for (double d : w.w_d) imbalance += d;
  for (int k = 0; k < spec.n_t; ++k) {
    imbalance += v.u_t[k];
    denom += v.delta[k] / spec.K_t[k];
  }
  for (int k = 0; k < spec.n_s; ++k) {
    imbalance += v.u_s[k];
    denom += 1.0 / spec.K_s[k];
  }
  if (denom == 0.0) {
    if (imbalance != 0.0) throw ModelError("plant_step: no grid-forming unit available to absorb the imbalance");
  } else {
    r.mu = -imbalance / denom;
  }
  constexpr double tol = 1e-9;
  for (int k = 0; k < spec.n_t; ++k) {
    const double p = v.u_t[k] + r.mu * v.delta[k] / spec.K_t[k];
    const double lo = v.delta[k] * spec.p_t_min[k], hi = v.delta[k] * spec.p_t_max[k];
    if (p < lo - tol || p > hi + tol) r.saturated = true;
    r.p_t.push_back(std::clamp(p, lo, hi));
  }
  for (int k = 0; k < spec.n_s; ++k) {
    const double p = v.u_s[k] + r.mu / spec.K_s[k];
    if (p < spec.p_s_min[k] - tol || p > spec.p_s_max[k] + tol) r.saturated = true;
    r.p_s.push_back(std::clamp(p, spec.p_s_min[k], spec.p_s_max[k]));
    r.x_next.push_back(x[k] - spec.T_s * r.p_s[k]);
  }
  double total = 0.0;
  for (double p : r.p_t) total += p;
  for (double p : r.p_s) total += p;
  for (double p : r.p_r) total += p;
  for (double d : w.w_d) total += d;
  r.balance_residual = total;
  return r;
}

SimulationTrace closed_loop(const SimulationSetup& setup, const StepCallback& on_step) {
  const GridSpec& spec = setup.spec;
  require_valid(spec);
  const ControllerConfig& cc = setup.controller;
  if (setup.steps < 1) throw InputError("simulation needs at least one step");
  if (cc.horizon < 1) throw InputError("controller horizon must be at least 1");
  if (static_cast<int>(cc.branching.size()) > cc.horizon) throw InputError("branching is longer than the horizon");
  if (static_cast<int>(setup.x0.size()) != spec.n_s) throw InputError("x0 has wrong size");

  std::vector<int> branching = cc.branching;
  branching.resize(cc.horizon, 1);

  ProfileModel profile = setup.profile;
  profile.seed = setup.seed;
  const TruthSeries truth = generate_truth(profile, spec, setup.steps);

  ControlInput v_prev = setup.v_init;
  if (v_prev.delta.empty()) {
    v_prev.u_t.assign(spec.n_t, 0.0);
    v_prev.u_s.assign(spec.n_s, 0.0);
    v_prev.u_r.assign(spec.n_r, 0.0);
    v_prev.delta.assign(spec.n_t, 1.0);
  }

  FormulationOptions fopt;
  fopt.alpha = cc.alpha;
  fopt.sides = cc.sides;
  fopt.relax_stage_threshold = cc.relax_stage_threshold;

  SimulationTrace trace;
  trace.n_t = spec.n_t;
  trace.n_s = spec.n_s;
  trace.n_r = spec.n_r;
  trace.n_d = spec.n_d;

  std::vector<double> x = setup.x0;
  bool have_previous = false;
  ScenarioTree prev_tree;
  DecodedSolution prev_sol;

  for (int k = 0; k < setup.steps; ++k) {
    const auto t0 = std::chrono::steady_clock::now();
    TraceRow row;
    row.k = k;
    row.x = x;
    row.w = truth.w[k];

    const Disturbance last_error = k > 0 ? truth.error[k - 1] : Disturbance{};
    const ScenarioTree tree =
        forecast_tree(profile, spec, k, last_error, branching, cc.n_samples, setup.seed ^ 0x9e3779b97f4a7c15ull);

    std::vector<double> x_ctrl = x;
    for (int s = 0; s < spec.n_s; ++s) x_ctrl[s] = std::clamp(x_ctrl[s], spec.x_min[s], spec.x_max[s]);
    const OcpProblem ocp = assemble(cc.variant, tree, spec, x_ctrl, v_prev, fopt);

    BnBOptions bopt = cc.bnb;
    bopt.relax_stage_threshold = cc.relax_stage_threshold;
    if (cc.warm_start && have_previous && k > 0)
      bopt.warm_start = encode(ocp, shift_solution(prev_tree, prev_sol, tree, truth.w[k - 1], x_ctrl));
    const SolveResult res = branch_and_bound(ocp.problem, bopt);
    row.bnb_nodes = res.nodes;
    row.status = to_string(res.status);

    ControlInput v = v_prev;
    if (res.has_solution()) {
      const DecodedSolution sol = decode(ocp, res.z);
      v = sol.nodes[0].v;
      // Binaries are integral up to solver tolerance; snap for the plant.
      for (double& d : v.delta) d = d >= 0.5 ? 1.0 : 0.0;
      for (int c : tree.children_of(0)) row.predicted_x.push_back(sol.nodes[c].x);
      row.tree_var_max = cc.variant == Variant::hard || cc.alpha == 0.0 ? 0.0 : stage_var_max(ocp, sol, cc.sides);
      prev_tree = tree;
      prev_sol = sol;
      have_previous = true;
    } else {
      have_previous = false;
    }
    row.solve_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    const PlantResult plant = plant_step(spec, v, truth.w[k], x);
    row.v = v;
    row.p_t = plant.p_t;
    row.p_s = plant.p_s;
    row.p_r = plant.p_r;
    row.mu = plant.mu;
    row.saturated = plant.saturated;
    row.balance_residual = plant.balance_residual;
    row.cost = stage_cost(spec, v.delta, v_prev.delta, plant.p_t, plant.p_r).total();
    for (int s = 0; s < spec.n_s; ++s) {
      row.viol_upper = std::max(row.viol_upper, x[s] - spec.x_soft_max[s]);
      row.viol_lower = std::max(row.viol_lower, spec.x_soft_min[s] - x[s]);
    }
    if (on_step) on_step(row);
    trace.rows.push_back(std::move(row));
    x = plant.x_next;
    v_prev = v;
  }
  trace.x_final = x;
  return trace;
}

Metrics metrics(const SimulationTrace& trace, const GridSpec& spec) {
  Metrics m;
  m.steps = static_cast<int>(trace.rows.size());
  double renewable = 0.0, delivered = 0.0;
  std::vector<double> ps_sum(spec.n_s, 0.0);
  for (std::size_t k = 0; k < trace.rows.size(); ++k) {
    const TraceRow& r = trace.rows[k];
    m.total_cost += r.cost;
    for (double p : r.p_r) {
      renewable += p;
      delivered += p;
    }
    for (double p : r.p_t) delivered += p;
    for (double p : r.p_s) delivered += std::max(p, 0.0);
    for (int s = 0; s < spec.n_s; ++s) ps_sum[s] += r.p_s[s];
    const double viol = std::max(r.viol_upper, r.viol_lower);
    if (viol > 1e-6) ++m.violation_count;
    m.max_violation = std::max(m.max_violation, viol);
    if (k > 0)
      for (std::size_t t = 0; t < r.v.delta.size(); ++t)
        m.switching_actions += static_cast<int>(std::lround(std::abs(r.v.delta[t] - trace.rows[k - 1].v.delta[t])));
    m.mean_solve_time_s += r.solve_time_s;
    m.max_solve_time_s = std::max(m.max_solve_time_s, r.solve_time_s);
    if (r.status != "optimal" && r.status != "gap_limit") ++m.infeasible_steps;
    if (r.saturated)
      ++m.saturated_steps;
    else
      m.max_balance_residual = std::max(m.max_balance_residual, std::abs(r.balance_residual));
  }
  if (m.steps > 0) {
    m.average_cost = m.total_cost / m.steps;
    m.mean_solve_time_s /= m.steps;
    for (int s = 0; s < spec.n_s; ++s) {
      const double err = trace.x_final[s] - trace.rows.front().x[s] + spec.T_s * ps_sum[s];
      m.energy_bookkeeping_error = std::max(m.energy_bookkeeping_error, std::abs(err));
    }
  }
  m.renewable_share_pct = delivered > 0.0 ? 100.0 * renewable / delivered : 0.0;
  return m;
}

nlohmann::json metrics_to_json(const Metrics& m, bool include_timing) {
  nlohmann::json j = {
      {"steps", m.steps},
      {"total_cost", m.total_cost},
      {"average_cost", m.average_cost},
      {"renewable_share_pct", m.renewable_share_pct},
      {"renewable_share_definition", "sum p_r / sum (p_t + max(p_s, 0) + p_r)"},
      {"violation_count", m.violation_count},
      {"max_violation", m.max_violation},
      {"switching_actions", m.switching_actions},
      {"infeasible_steps", m.infeasible_steps},
      {"saturated_steps", m.saturated_steps},
      {"max_balance_residual", m.max_balance_residual},
      {"energy_bookkeeping_error", m.energy_bookkeeping_error},
  };
  j["mean_solve_time_s"] = include_timing ? m.mean_solve_time_s : 0.0;
  j["max_solve_time_s"] = include_timing ? m.max_solve_time_s : 0.0;
  return j;
}

void write_trace_csv(std::ostream& os, const SimulationTrace& t, bool include_timing) {
  os << 'k';
  header(os, "x", t.n_s);
  header(os, "u_t", t.n_t);
  header(os, "u_s", t.n_s);
  header(os, "u_r", t.n_r);
  header(os, "delta", t.n_t);
  header(os, "w_r", t.n_r);
  header(os, "w_d", t.n_d);
  header(os, "p_t", t.n_t);
  header(os, "p_s", t.n_s);
  header(os, "p_r", t.n_r);
  os << ",mu,cost,viol_upper,viol_lower,solve_time_s,bnb_nodes,status\n";
  for (const TraceRow& r : t.rows) {
    os << r.k;
    values(os, r.x);
    values(os, r.v.u_t);
    values(os, r.v.u_s);
    values(os, r.v.u_r);
    values(os, r.v.delta);
    values(os, r.w.w_r);
    values(os, r.w.w_d);
    values(os, r.p_t);
    values(os, r.p_s);
    values(os, r.p_r);
    os << ',' << fmt(r.mu) << ',' << fmt(r.cost) << ',' << fmt(std::max(r.viol_upper, 0.0)) << ','
       << fmt(std::max(r.viol_lower, 0.0)) << ',' << fmt(include_timing ? r.solve_time_s : 0.0) << ',' << r.bnb_nodes
       << ',' << r.status << '\n';
  }
}

}  // namespace mgmpc
