#include "mgmpc/formulation.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <ostream>
#include <sstream>
#include <utility>

#include "mgmpc/error.hpp"
#include "mgmpc/risk.hpp"

namespace mgmpc {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

using Terms = std::vector<std::pair<int, double>>;

int side_index(BoundSide s) { return s == BoundSide::upper ? 0 : 1; }
const char* side_name(BoundSide s) { return s == BoundSide::upper ? "upper" : "lower"; }

class Builder {
 public:
  int add_var(double lo, double hi, std::string name) {
    lb_.push_back(lo);
    ub_.push_back(hi);
    names_.push_back(std::move(name));
    q_.push_back(0.0);
    return static_cast<int>(lb_.size()) - 1;
  }

  Block add_block(int n, double lo, double hi, const std::string& name, int node) {
    Block b{static_cast<int>(lb_.size()), n};
    for (int k = 0; k < n; ++k) add_var(lo, hi, name + "[" + std::to_string(k) + "]@" + std::to_string(node));
    return b;
  }

  void set_bounds(int var, double lo, double hi) {
    lb_[var] = lo;
    ub_[var] = hi;
  }
  double& lb(int var) { return lb_[var]; }
  double& ub(int var) { return ub_[var]; }

  void eq(const Terms& t, double rhs, RowInfo info) {
    const int r = static_cast<int>(b_eq_.size());
    for (const auto& [j, v] : t)
      if (v != 0.0) a_eq_.emplace_back(r, j, v);
    b_eq_.push_back(rhs);
    eq_info_.push_back(info);
  }

  void ineq(const Terms& t, double lo, double hi, RowInfo info) {
    const int r = static_cast<int>(g_lo_.size());
    for (const auto& [j, v] : t)
      if (v != 0.0) g_.emplace_back(r, j, v);
    g_lo_.push_back(lo);
    g_hi_.push_back(hi);
    ineq_info_.push_back(info);
  }

  // Adds w * (sum_k a_k z_k + c)^2 to the objective.
  void add_square(const Terms& t, double c, double w) {
    if (w == 0.0) return;
    for (const auto& [i, ai] : t) {
      for (const auto& [j, aj] : t) p_.emplace_back(i, j, 2.0 * w * ai * aj);
      q_[i] += 2.0 * w * c * ai;
    }
    constant_ += w * c * c;
  }
  void add_linear(int var, double v) { q_[var] += v; }
  void add_constant(double v) { constant_ += v; }
  void add_binary(int var, int stage, bool relaxable) { binaries_.push_back({var, stage, relaxable}); }

  int num_vars() const { return static_cast<int>(lb_.size()); }

  void finish(OcpProblem& out) {
    const int n = num_vars();
    QpData& d = out.problem.qp;
    d.P.resize(n, n);
    d.P.setFromTriplets(p_.begin(), p_.end());
    d.q = Eigen::Map<Eigen::VectorXd>(q_.data(), n);
    d.constant = constant_;
    d.A_eq.resize(static_cast<int>(b_eq_.size()), n);
    d.A_eq.setFromTriplets(a_eq_.begin(), a_eq_.end());
    d.b_eq = Eigen::Map<Eigen::VectorXd>(b_eq_.data(), b_eq_.size());
    d.G.resize(static_cast<int>(g_lo_.size()), n);
    d.G.setFromTriplets(g_.begin(), g_.end());
    d.g_lo = Eigen::Map<Eigen::VectorXd>(g_lo_.data(), g_lo_.size());
    d.g_hi = Eigen::Map<Eigen::VectorXd>(g_hi_.data(), g_hi_.size());
    d.lb = Eigen::Map<Eigen::VectorXd>(lb_.data(), n);
    d.ub = Eigen::Map<Eigen::VectorXd>(ub_.data(), n);
    d.check_dimensions();
    out.problem.binaries = std::move(binaries_);
    out.eq_rows = std::move(eq_info_);
    out.ineq_rows = std::move(ineq_info_);
    out.var_map.names = std::move(names_);
    out.var_map.num_vars = n;
  }

 private:
  std::vector<double> lb_, ub_, q_;
  std::vector<std::string> names_;
  std::vector<Triplet> p_, a_eq_, g_;
  std::vector<double> b_eq_, g_lo_, g_hi_;
  std::vector<RowInfo> eq_info_, ineq_info_;
  std::vector<BinaryVar> binaries_;
  double constant_ = 0.0;
};

struct Context {
  const ScenarioTree& tree;
  const GridSpec& spec;
  Builder& b;
  VarMap& vm;
};

void allocate_node_vars(Context& c, int relax_stage_threshold) {
  const auto& s = c.spec;
  c.vm.nodes.resize(c.tree.node_count());
  for (int i = 0; i < c.tree.node_count(); ++i) {
    NodeVars& nv = c.vm.nodes[i];
    if (!c.tree.is_leaf(i)) {
      nv.u_t = c.b.add_block(s.n_t, 0.0, kInf, "u_t", i);
      for (int k = 0; k < s.n_t; ++k) c.b.set_bounds(nv.u_t[k], std::min(0.0, s.p_t_min[k]), std::max(0.0, s.p_t_max[k]));
      nv.u_s = c.b.add_block(s.n_s, 0.0, 0.0, "u_s", i);
      for (int k = 0; k < s.n_s; ++k) c.b.set_bounds(nv.u_s[k], s.p_s_min[k], s.p_s_max[k]);
      nv.u_r = c.b.add_block(s.n_r, 0.0, 0.0, "u_r", i);
      for (int k = 0; k < s.n_r; ++k) c.b.set_bounds(nv.u_r[k], s.p_r_min[k], s.p_r_max[k]);
      nv.delta = c.b.add_block(s.n_t, 0.0, 1.0, "delta", i);
      for (int k = 0; k < s.n_t; ++k) c.b.add_binary(nv.delta[k], c.tree.stage_of(i), true);
      if (i > 0 && c.tree.stage_of(i) < relax_stage_threshold) nv.sw = c.b.add_block(s.n_t, 0.0, 1.0, "switch", i);
    }
    nv.x = c.b.add_block(s.n_s, -kInf, kInf, "x", i);
    if (i == 0) continue;
    for (int k = 0; k < s.n_s; ++k) c.b.set_bounds(nv.x[k], s.x_min[k], s.x_max[k]);
    nv.p_t = c.b.add_block(s.n_t, 0.0, 0.0, "p_t", i);
    for (int k = 0; k < s.n_t; ++k) c.b.set_bounds(nv.p_t[k], std::min(0.0, s.p_t_min[k]), std::max(0.0, s.p_t_max[k]));
    nv.p_s = c.b.add_block(s.n_s, 0.0, 0.0, "p_s", i);
    for (int k = 0; k < s.n_s; ++k) c.b.set_bounds(nv.p_s[k], s.p_s_min[k], s.p_s_max[k]);
    nv.p_r = c.b.add_block(s.n_r, 0.0, 0.0, "p_r", i);
    for (int k = 0; k < s.n_r; ++k) c.b.set_bounds(nv.p_r[k], s.p_r_min[k], s.p_r_max[k]);
    nv.mu = c.b.add_block(1, -kInf, kInf, "mu", i);
    nv.phi = c.b.add_block(s.n_t, -kInf, kInf, "phi", i);
    nv.beta = c.b.add_block(s.n_r, 0.0, 1.0, "beta", i);
    for (int k = 0; k < s.n_r; ++k) c.b.add_binary(nv.beta[k], c.tree.stage_of(i), true);
  }
}

// Switching is penalised by (delta - delta_prev)^2. Where both values are
// enforced binaries this equals |delta - delta_prev|, which is written
// linearly (through `sw` below the root) because its relaxation is tighter.
void cost_terms(Context& c, const ControlInput& v_prev) {
  const auto& s = c.spec;
  for (int i = 1; i < c.tree.node_count(); ++i) {
    const NodeVars& a = c.vm.nodes[i];
    if (a.sw.empty()) continue;
    const NodeVars& p = c.vm.nodes[c.tree.ancestor_of(i)];
    for (int k = 0; k < s.n_t; ++k) {
      const RowInfo info{RowFamily::switching, i};
      c.b.ineq({{a.sw[k], 1.0}, {a.delta[k], -1.0}, {p.delta[k], 1.0}}, 0.0, kInf, info);
      c.b.ineq({{a.sw[k], 1.0}, {a.delta[k], 1.0}, {p.delta[k], -1.0}}, 0.0, kInf, info);
    }
  }
  for (int ip = 1; ip < c.tree.node_count(); ++ip) {
    const int i = c.tree.ancestor_of(ip);
    const double w = c.tree.probability(ip) * std::pow(s.gamma, c.tree.stage_of(ip));
    const NodeVars& a = c.vm.nodes[i];
    const NodeVars& n = c.vm.nodes[ip];
    for (int k = 0; k < s.n_t; ++k) {
      c.b.add_linear(a.delta[k], w * s.c_t[k]);
      c.b.add_linear(n.p_t[k], w * s.c_t_lin[k]);
      c.b.add_square({{n.p_t[k], 1.0}}, 0.0, w * s.c_t_quad[k] * s.c_t_quad[k]);
      const double sw = w * s.c_t_switch[k] * s.c_t_switch[k];
      if (i == 0) {
        // v_prev.delta is 0 or 1 (checked), so the square is linear in delta.
        const double d = v_prev.delta[k];
        c.b.add_linear(a.delta[k], sw * (1.0 - 2.0 * d));
        c.b.add_constant(sw * d);
      } else if (!a.sw.empty()) {
        c.b.add_linear(a.sw[k], sw);
      } else {
        c.b.add_square({{c.vm.nodes[c.tree.ancestor_of(i)].delta[k], 1.0}, {a.delta[k], -1.0}}, 0.0, sw);
      }
    }
    for (int k = 0; k < s.n_r; ++k)
      c.b.add_square({{n.p_r[k], -1.0}}, s.p_r_max[k], w * s.c_r[k] * s.c_r[k]);
  }
}

void dynamics_constraints(Context& c, const std::vector<double>& x0) {
  const auto& s = c.spec;
  for (int k = 0; k < s.n_s; ++k) c.b.eq({{c.vm.nodes[0].x[k], 1.0}}, x0[k], {RowFamily::initial_state, 0});
  for (int ip = 1; ip < c.tree.node_count(); ++ip) {
    const NodeVars& a = c.vm.nodes[c.tree.ancestor_of(ip)];
    const NodeVars& n = c.vm.nodes[ip];
    for (int k = 0; k < s.n_s; ++k)
      c.b.eq({{n.x[k], 1.0}, {a.x[k], -1.0}, {n.p_s[k], s.T_s}}, 0.0, {RowFamily::dynamics, ip});
  }
}

void balance_constraints(Context& c) {
  const auto& s = c.spec;
  for (int ip = 1; ip < c.tree.node_count(); ++ip) {
    const NodeVars& n = c.vm.nodes[ip];
    Terms t;
    for (int k = 0; k < s.n_t; ++k) t.emplace_back(n.p_t[k], 1.0);
    for (int k = 0; k < s.n_s; ++k) t.emplace_back(n.p_s[k], 1.0);
    for (int k = 0; k < s.n_r; ++k) t.emplace_back(n.p_r[k], 1.0);
    double load = 0.0;
    for (double w : c.tree.disturbance(ip).w_d) load += w;
    c.b.eq(t, -load, {RowFamily::balance, ip});
  }
}

// p_r = min(u_r, w_r) with one binary per unit and node.
std::vector<double> renewable_min_bigM(Context& c) {
  const auto& s = c.spec;
  std::vector<double> big_m;
  for (int ip = 1; ip < c.tree.node_count(); ++ip) {
    const NodeVars& a = c.vm.nodes[c.tree.ancestor_of(ip)];
    const NodeVars& n = c.vm.nodes[ip];
    const auto& w = c.tree.disturbance(ip).w_r;
    for (int k = 0; k < s.n_r; ++k) {
      // Twice the largest possible |u_r - p_r| or |w_r - p_r|, so the
      // deactivated row is never tight.
      const double M = 2.0 * (std::max(s.p_r_max[k], w[k]) - s.p_r_min[k]);
      big_m.push_back(M);
      // Presolve: without PV (w_r at its minimum) p_r = w_r always holds, at
      // or above p_r_max p_r = u_r always holds.
      if (w[k] <= s.p_r_min[k]) c.b.set_bounds(n.beta[k], 0.0, 0.0);
      if (w[k] >= s.p_r_max[k]) c.b.set_bounds(n.beta[k], 1.0, 1.0);
      const RowInfo info{RowFamily::renewable_min, ip};
      c.b.ineq({{n.p_r[k], 1.0}, {a.u_r[k], -1.0}}, -kInf, 0.0, info);
      c.b.ineq({{n.p_r[k], 1.0}}, -kInf, w[k], info);
      c.b.ineq({{n.p_r[k], 1.0}, {a.u_r[k], -1.0}, {n.beta[k], -M}}, -M, kInf, info);
      c.b.ineq({{n.p_r[k], 1.0}, {n.beta[k], M}}, w[k], kInf, info);
    }
  }
  return big_m;
}

double mccormick_bound(const GridSpec& s) {
  double m = 0.0;
  for (int k = 0; k < s.n_s; ++k) m = std::max(m, s.K_s[k] * (s.p_s_max[k] - s.p_s_min[k]));
  for (int k = 0; k < s.n_t; ++k) m = std::max(m, s.K_t[k] * s.p_t_max[k]);
  return 2.0 * m;
}

void power_sharing_bigM(Context& c, double M) {
  const auto& s = c.spec;
  for (int ip = 1; ip < c.tree.node_count(); ++ip) {
    const NodeVars& a = c.vm.nodes[c.tree.ancestor_of(ip)];
    const NodeVars& n = c.vm.nodes[ip];
    const RowInfo share{RowFamily::power_sharing, ip};
    for (int k = 0; k < s.n_s; ++k)
      c.b.eq({{n.p_s[k], s.K_s[k]}, {a.u_s[k], -s.K_s[k]}, {n.mu[0], -1.0}}, 0.0, share);
    for (int k = 0; k < s.n_t; ++k) {
      c.b.eq({{n.p_t[k], s.K_t[k]}, {a.u_t[k], -s.K_t[k]}, {n.phi[k], -1.0}}, 0.0, share);
      const RowInfo mc{RowFamily::mccormick, ip};
      const int phi = n.phi[k], mu = n.mu[0], d = a.delta[k];
      c.b.ineq({{phi, 1.0}, {d, -M}}, -kInf, 0.0, mc);
      c.b.ineq({{phi, -1.0}, {d, -M}}, -kInf, 0.0, mc);
      c.b.ineq({{phi, 1.0}, {mu, -1.0}, {d, M}}, -kInf, M, mc);
      c.b.ineq({{phi, -1.0}, {mu, 1.0}, {d, M}}, -kInf, M, mc);
    }
  }
}

void limit_constraints(Context& c) {
  const auto& s = c.spec;
  const RowInfo conv{RowFamily::conventional_limits, 0};
  for (int i = 0; i < c.tree.node_count(); ++i) {
    if (c.tree.is_leaf(i)) continue;
    const NodeVars& n = c.vm.nodes[i];
    for (int k = 0; k < s.n_t; ++k) {
      c.b.ineq({{n.u_t[k], 1.0}, {n.delta[k], -s.p_t_min[k]}}, 0.0, kInf, {conv.family, i});
      c.b.ineq({{n.u_t[k], 1.0}, {n.delta[k], -s.p_t_max[k]}}, -kInf, 0.0, {conv.family, i});
    }
  }
  const Eigen::MatrixXd F = ptdf_matrix(s);
  const int off_s = s.n_t, off_r = s.n_t + s.n_s, off_d = s.n_t + s.n_s + s.n_r;
  for (int ip = 1; ip < c.tree.node_count(); ++ip) {
    const NodeVars& a = c.vm.nodes[c.tree.ancestor_of(ip)];
    const NodeVars& n = c.vm.nodes[ip];
    for (int k = 0; k < s.n_t; ++k) {
      c.b.ineq({{n.p_t[k], 1.0}, {a.delta[k], -s.p_t_min[k]}}, 0.0, kInf, {conv.family, ip});
      c.b.ineq({{n.p_t[k], 1.0}, {a.delta[k], -s.p_t_max[k]}}, -kInf, 0.0, {conv.family, ip});
    }
    const auto& wd = c.tree.disturbance(ip).w_d;
    for (int e = 0; e < s.n_e; ++e) {
      Terms t;
      for (int k = 0; k < s.n_t; ++k) t.emplace_back(n.p_t[k], F(e, k));
      for (int k = 0; k < s.n_s; ++k) t.emplace_back(n.p_s[k], F(e, off_s + k));
      for (int k = 0; k < s.n_r; ++k) t.emplace_back(n.p_r[k], F(e, off_r + k));
      double load_flow = 0.0;
      for (int k = 0; k < s.n_d; ++k) load_flow += F(e, off_d + k) * wd[k];
      const double lo = s.p_e_min[e] - load_flow, hi = s.p_e_max[e] - load_flow;
      const bool empty_row = std::all_of(t.begin(), t.end(), [](const auto& p) { return std::abs(p.second) < 1e-14; });
      if (empty_row) {
        if (lo > 1e-12 || hi < -1e-12)
          throw InputError("line " + std::to_string(e) + " limit violated by loads alone at node " + std::to_string(ip));
        continue;
      }
      c.b.ineq(t, lo, hi, {RowFamily::line_limits, ip});
    }
  }
}

// Margin g = x - x_soft_max (upper) or x_soft_min - x as (terms, constant).
std::pair<Terms, double> margin_terms(const GridSpec& s, const NodeVars& n, int k, BoundSide side) {
  if (side == BoundSide::upper) return {{{n.x[k], 1.0}}, -s.x_soft_max[k]};
  return {{{n.x[k], -1.0}}, s.x_soft_min[k]};
}

void impose_hard(Context& c, BoundSide side) {
  const auto& s = c.spec;
  for (int ip = 1; ip < c.tree.node_count(); ++ip) {
    const NodeVars& n = c.vm.nodes[ip];
    for (int k = 0; k < s.n_s; ++k) {
      if (side == BoundSide::upper)
        c.b.ub(n.x[k]) = std::min(c.b.ub(n.x[k]), s.x_soft_max[k]);
      else
        c.b.lb(n.x[k]) = std::max(c.b.lb(n.x[k]), s.x_soft_min[k]);
    }
  }
}

void chance_constraint_encoding(Context& c, double alpha, BoundSide side, const BigMParams& bm) {
  const auto& s = c.spec;
  auto& soft = c.vm.soft[side_index(side)];
  for (int k = 0; k < s.n_s; ++k) {
    SoftBoundVars& sv = soft[k];
    sv.xi.assign(c.tree.node_count(), -1);
    sv.tau.assign(c.tree.node_count(), -1);
    const std::string tag = std::string("_") + side_name(side) + "[" + std::to_string(k) + "]@";
    for (int ip = 1; ip < c.tree.node_count(); ++ip) {
      const int xi = c.b.add_var(bm.m, bm.M, "xi" + tag + std::to_string(ip));
      const int tau = c.b.add_var(0.0, 1.0, "tau" + tag + std::to_string(ip));
      sv.xi[ip] = xi;
      sv.tau[ip] = tau;
      c.b.add_binary(tau, c.tree.stage_of(ip), false);
      auto [t, cst] = margin_terms(s, c.vm.nodes[ip], k, side);
      t.emplace_back(xi, -1.0);
      c.b.ineq(t, -kInf, -cst, {RowFamily::chance_margin, ip});
      // eps + (m - eps) tau <= xi <= M (1 - tau)
      c.b.ineq({{xi, 1.0}, {tau, -(bm.m - bm.eps)}}, bm.eps, kInf, {RowFamily::chance_bigm, ip});
      c.b.ineq({{xi, 1.0}, {tau, bm.M}}, -kInf, bm.M, {RowFamily::chance_bigm, ip});
    }
    for (int j = 1; j <= c.tree.horizon(); ++j) {
      Terms t;
      for (int ip : c.tree.nodes_at(j)) t.emplace_back(sv.tau[ip], c.tree.probability(ip));
      c.b.ineq(t, 1.0 - alpha, kInf, {RowFamily::chance_stage, c.tree.stage_begin(j)});
    }
  }
}

double dual_lower(ConeKind k) { return dual_cone(k) == ConeKind::zero ? 0.0 : (dual_cone(k) == ConeKind::free ? -kInf : 0.0); }
double dual_upper(ConeKind k) { return dual_cone(k) == ConeKind::zero ? 0.0 : kInf; }

void risk_constraint_encoding(Context& c, double alpha, BoundSide side) {
  const auto& s = c.spec;
  auto& soft = c.vm.soft[side_index(side)];
  for (int k = 0; k < s.n_s; ++k) {
    SoftBoundVars& sv = soft[k];
    sv.y.assign(c.tree.horizon() + 1, Block{});
    for (int j = 1; j <= c.tree.horizon(); ++j) {
      const auto stage_nodes = c.tree.nodes_at(j);
      const auto rep = avar_conic_rep(stage_probability_vector(c.tree, j), alpha);
      const int first = c.b.num_vars();
      int row = 0;
      for (const auto& blk : rep.cones) {
        for (int r = 0; r < blk.dim; ++r, ++row)
          c.b.add_var(dual_lower(blk.kind), dual_upper(blk.kind),
                      std::string("y_") + side_name(side) + "[" + std::to_string(k) + "][" + std::to_string(row) + "]@" +
                          std::to_string(j));
      }
      sv.y[j] = Block{first, rep.rows()};
      // E'y = g
      for (int o = 0; o < rep.outcomes(); ++o) {
        auto [t, cst] = margin_terms(s, c.vm.nodes[stage_nodes[o]], k, side);
        for (auto& term : t) term.second = -term.second;
        for (int r = 0; r < rep.rows(); ++r)
          if (rep.E(r, o) != 0.0) t.emplace_back(first + r, rep.E(r, o));
        c.b.eq(t, cst, {RowFamily::risk_dual, stage_nodes[o]});
      }
      // F'y = 0
      for (int l = 0; l < rep.extra(); ++l) {
        Terms t;
        for (int r = 0; r < rep.rows(); ++r)
          if (rep.F(r, l) != 0.0) t.emplace_back(first + r, rep.F(r, l));
        c.b.eq(t, 0.0, {RowFamily::risk_dual, stage_nodes[0]});
      }
      Terms t;
      for (int r = 0; r < rep.rows(); ++r)
        if (rep.b[r] != 0.0) t.emplace_back(first + r, rep.b[r]);
      c.b.ineq(t, -kInf, 0.0, {RowFamily::risk_bound, stage_nodes[0]});
    }
  }
}

void check_inputs(const ScenarioTree& tree, const GridSpec& spec, const std::vector<double>& x0,
                  const ControlInput& v_prev, const FormulationOptions& opt) {
  require_valid(spec);
  const auto tv = validate(tree);
  if (!tv.empty()) throw InputError("invalid scenario tree: " + tv.front().message);
  if (static_cast<int>(x0.size()) != spec.n_s) throw InputError("x0 has wrong size");
  for (int k = 0; k < spec.n_s; ++k)
    if (!(x0[k] >= spec.x_min[k] - 1e-9 && x0[k] <= spec.x_max[k] + 1e-9))
      throw InputError("x0[" + std::to_string(k) + "] outside [x_min, x_max]");
  if (static_cast<int>(v_prev.delta.size()) != spec.n_t) throw InputError("previous input: delta has wrong size");
  for (double d : v_prev.delta)
    if (d != 0.0 && d != 1.0) throw InputError("previous input: delta must be 0 or 1");
  for (int i = 1; i < tree.node_count(); ++i) {
    const auto& w = tree.disturbance(i);
    if (static_cast<int>(w.w_r.size()) != spec.n_r || static_cast<int>(w.w_d.size()) != spec.n_d)
      throw InputError("disturbance dimensions do not match the grid at node " + std::to_string(i));
    for (int k = 0; k < spec.n_r; ++k)
      if (w.w_r[k] < spec.p_r_min[k]) throw InputError("available renewable power below p_r_min at node " + std::to_string(i));
  }
  if (!(opt.alpha >= 0.0 && opt.alpha <= 1.0)) throw InputError("alpha must lie in [0, 1]");
  if (opt.sides.empty()) throw InputError("at least one soft-bound side is required");
}

}  // namespace

std::string to_string(Variant v) {
  switch (v) {
    case Variant::hard: return "hard";
    case Variant::chance: return "chance";
    case Variant::risk: return "risk";
  }
  return "?";
}

Variant variant_from_string(const std::string& s) {
  if (s == "hard" || s == "P") return Variant::hard;
  if (s == "chance" || s == "P_cc" || s == "cc") return Variant::chance;
  if (s == "risk" || s == "P_rc" || s == "rc") return Variant::risk;
  throw InputError("unknown variant '" + s + "' (expected hard, chance or risk)");
}

std::string to_string(RowFamily f) {
  switch (f) {
    case RowFamily::initial_state: return "initial_state";
    case RowFamily::dynamics: return "dynamics";
    case RowFamily::balance: return "balance";
    case RowFamily::power_sharing: return "power_sharing";
    case RowFamily::mccormick: return "mccormick";
    case RowFamily::renewable_min: return "renewable_min";
    case RowFamily::conventional_limits: return "conventional_limits";
    case RowFamily::line_limits: return "line_limits";
    case RowFamily::chance_margin: return "chance_margin";
    case RowFamily::chance_bigm: return "chance_bigm";
    case RowFamily::chance_stage: return "chance_stage";
    case RowFamily::risk_dual: return "risk_dual";
    case RowFamily::risk_bound: return "risk_bound";
    case RowFamily::switching: return "switching";
  }
  return "?";
}

BigMParams BigMParams::defaults(const GridSpec& spec) {
  BigMParams p;
  for (int k = 0; k < spec.n_s; ++k) p.M = std::max(p.M, spec.x_max[k] - spec.x_min[k]);
  p.m = -p.M;
  p.eps = 1e-4;
  return p;
}

void BigMParams::check(const GridSpec& spec) const {
  double need = 0.0;
  for (int k = 0; k < spec.n_s; ++k) need = std::max(need, spec.x_max[k] - spec.x_min[k]);
  if (M < need) throw InputError("big-M constant M must be at least max(x_max - x_min)");
  if (m > 0.0) throw InputError("big-M constant m must be nonpositive");
  if (!(eps > 0.0 && eps < M)) throw InputError("big-M tolerance eps must satisfy 0 < eps < M");
}

OcpProblem assemble(Variant variant, const ScenarioTree& tree, const GridSpec& spec, const std::vector<double>& x0,
                    const ControlInput& v_prev, const FormulationOptions& options) {
  check_inputs(tree, spec, x0, v_prev, options);
  OcpProblem out;
  out.variant = variant;
  out.alpha = options.alpha;
  out.tree = tree;
  out.spec = spec;
  out.relax_stage_threshold = options.relax_stage_threshold;
  out.big_m = options.big_m ? *options.big_m : BigMParams::defaults(spec);
  out.mccormick_M = mccormick_bound(spec);

  Builder b;
  Context c{tree, spec, b, out.var_map};
  out.var_map.sides = options.sides;
  out.var_map.soft.assign(2, std::vector<SoftBoundVars>(spec.n_s));

  allocate_node_vars(c, options.relax_stage_threshold);
  cost_terms(c, v_prev);
  dynamics_constraints(c, x0);
  balance_constraints(c);
  power_sharing_bigM(c, out.mccormick_M);
  out.renewable_M = renewable_min_bigM(c);
  limit_constraints(c);

  for (BoundSide side : options.sides) {
    switch (variant) {
      case Variant::hard: impose_hard(c, side); break;
      case Variant::chance:
        out.big_m.check(spec);
        chance_constraint_encoding(c, options.alpha, side, out.big_m);
        break;
      case Variant::risk:
        if (options.alpha == 0.0)
          impose_hard(c, side);
        else
          risk_constraint_encoding(c, options.alpha, side);
        break;
    }
  }
  b.finish(out);

  const QpData& d = out.problem.qp;
  for (int j = 0; j < d.num_vars(); ++j)
    if (d.lb[j] > d.ub[j]) throw InputError("empty bounds on " + out.var_map.names[j]);
  for (int r = 0; r < d.G.rows(); ++r)
    if (d.g_lo[r] > d.g_hi[r]) throw InputError("empty row bounds on " + to_string(out.ineq_rows[r].family) + " row");
  return out;
}

DecodedSolution decode(const OcpProblem& ocp, const Eigen::VectorXd& z) {
  if (z.size() != ocp.var_map.num_vars) throw InputError("decode: decision vector has wrong size");
  auto read = [&](const Block& b) {
    std::vector<double> v(b.size);
    for (int k = 0; k < b.size; ++k) v[k] = z[b[k]];
    return v;
  };
  DecodedSolution out;
  for (const NodeVars& nv : ocp.var_map.nodes) {
    NodeSolution ns;
    ns.v = {read(nv.u_t), read(nv.u_s), read(nv.u_r), read(nv.delta)};
    ns.x = read(nv.x);
    ns.p_t = read(nv.p_t);
    ns.p_s = read(nv.p_s);
    ns.p_r = read(nv.p_r);
    ns.phi = read(nv.phi);
    ns.beta = read(nv.beta);
    if (!nv.mu.empty()) ns.mu = z[nv.mu[0]];
    out.nodes.push_back(std::move(ns));
  }
  return out;
}

double soft_margin(const GridSpec& spec, int storage, BoundSide side, double x) {
  return side == BoundSide::upper ? x - spec.x_soft_max[storage] : spec.x_soft_min[storage] - x;
}

Eigen::VectorXd encode(const OcpProblem& ocp, const DecodedSolution& sol) {
  const VarMap& vm = ocp.var_map;
  if (sol.nodes.size() != vm.nodes.size()) throw InputError("encode: node count mismatch");
  Eigen::VectorXd z = Eigen::VectorXd::Zero(vm.num_vars);
  auto write = [&](const Block& b, const std::vector<double>& v, const char* what) {
    if (b.empty()) return;
    if (static_cast<int>(v.size()) != b.size) throw InputError(std::string("encode: wrong size for ") + what);
    for (int k = 0; k < b.size; ++k) z[b[k]] = v[k];
  };
  for (std::size_t i = 0; i < vm.nodes.size(); ++i) {
    const NodeVars& nv = vm.nodes[i];
    const NodeSolution& ns = sol.nodes[i];
    write(nv.u_t, ns.v.u_t, "u_t");
    write(nv.u_s, ns.v.u_s, "u_s");
    write(nv.u_r, ns.v.u_r, "u_r");
    write(nv.delta, ns.v.delta, "delta");
    write(nv.x, ns.x, "x");
    write(nv.p_t, ns.p_t, "p_t");
    write(nv.p_s, ns.p_s, "p_s");
    write(nv.p_r, ns.p_r, "p_r");
    write(nv.phi, ns.phi, "phi");
    write(nv.beta, ns.beta, "beta");
    if (!nv.mu.empty()) z[nv.mu[0]] = ns.mu;
  }
  for (std::size_t i = 1; i < vm.nodes.size(); ++i) {
    const Block& sw = vm.nodes[i].sw;
    const Block& own = vm.nodes[i].delta;
    const Block& parent = vm.nodes[ocp.tree.ancestor_of(static_cast<int>(i))].delta;
    for (int k = 0; k < sw.size; ++k) z[sw[k]] = std::abs(z[own[k]] - z[parent[k]]);
  }
  for (BoundSide side : vm.sides) {
    const auto& soft = vm.soft[side_index(side)];
    for (int k = 0; k < static_cast<int>(soft.size()); ++k) {
      const SoftBoundVars& sv = soft[k];
      auto margin = [&](int node) { return soft_margin(ocp.spec, k, side, z[vm.nodes[node].x[k]]); };
      for (int ip = 0; ip < static_cast<int>(sv.xi.size()); ++ip) {
        if (sv.xi[ip] < 0) continue;
        const double g = margin(ip);
        z[sv.tau[ip]] = g <= 0.0 ? 1.0 : 0.0;
        z[sv.xi[ip]] = g <= 0.0 ? g : std::max(g, ocp.big_m.eps);
      }
      for (int j = 1; j < static_cast<int>(sv.y.size()); ++j) {
        const Block& y = sv.y[j];
        const auto nodes = ocp.tree.nodes_at(j);
        const int n = static_cast<int>(nodes.size());
        if (y.size != 2 * n + 1) throw ModelError("encode: unexpected dual block size");
        for (int o = 0; o < n; ++o) {
          const double g = margin(nodes[o]);
          z[y[o]] = std::max(g, 0.0);
          z[y[n + o]] = std::max(-g, 0.0);
        }
      }
    }
  }
  return z;
}

}  // namespace mgmpc

namespace mgmpc {

StageCost stage_cost(const GridSpec& spec, const std::vector<double>& delta, const std::vector<double>& delta_prev,
                     const std::vector<double>& p_t, const std::vector<double>& p_r) {
  StageCost c;
  for (int k = 0; k < spec.n_t; ++k) {
    const double q = spec.c_t_quad[k] * p_t[k];
    c.fuel += spec.c_t[k] * delta[k] + spec.c_t_lin[k] * p_t[k] + q * q;
    const double sw = spec.c_t_switch[k] * (delta_prev[k] - delta[k]);
    c.switching += sw * sw;
  }
  for (int k = 0; k < spec.n_r; ++k) {
    const double cr = spec.c_r[k] * (spec.p_r_max[k] - p_r[k]);
    c.curtailment += cr * cr;
  }
  return c;
}

double expected_cost(const ScenarioTree& tree, const GridSpec& spec, const ControlInput& v_prev,
                     const DecodedSolution& sol) {
  double total = 0.0;
  for (int ip = 1; ip < tree.node_count(); ++ip) {
    const int i = tree.ancestor_of(ip);
    const auto& prev = i == 0 ? v_prev.delta : sol.nodes[tree.ancestor_of(i)].v.delta;
    const auto c = stage_cost(spec, sol.nodes[i].v.delta, prev, sol.nodes[ip].p_t, sol.nodes[ip].p_r);
    total += tree.probability(ip) * std::pow(spec.gamma, tree.stage_of(ip)) * c.total();
  }
  return total;
}

double family_violation(const OcpProblem& ocp, const Eigen::VectorXd& z, RowFamily family) {
  const QpData& d = ocp.problem.qp;
  double worst = 0.0;
  if (d.A_eq.rows() > 0) {
    const Eigen::VectorXd r = d.A_eq * z - d.b_eq;
    for (int i = 0; i < r.size(); ++i)
      if (ocp.eq_rows[i].family == family) worst = std::max(worst, std::abs(r[i]));
  }
  if (d.G.rows() > 0) {
    const Eigen::VectorXd g = d.G * z;
    for (int i = 0; i < g.size(); ++i)
      if (ocp.ineq_rows[i].family == family)
        worst = std::max({worst, d.g_lo[i] - g[i], g[i] - d.g_hi[i]});
  }
  return worst;
}

double min_big_m_slack(const OcpProblem& ocp, const Eigen::VectorXd& z) {
  const VarMap& vm = ocp.var_map;
  const GridSpec& s = ocp.spec;
  const ScenarioTree& tree = ocp.tree;
  double slack = kInf;
  std::size_t r_idx = 0;
  for (int ip = 1; ip < tree.node_count(); ++ip) {
    const NodeVars& n = vm.nodes[ip];
    const NodeVars& a = vm.nodes[tree.ancestor_of(ip)];
    if (s.n_t > 0) slack = std::min(slack, ocp.mccormick_M - std::abs(z[n.mu[0]]));
    const auto& w = tree.disturbance(ip).w_r;
    for (int k = 0; k < s.n_r; ++k, ++r_idx) {
      const double M = ocp.renewable_M[r_idx];
      const double pr = z[n.p_r[k]];
      if (z[n.beta[k]] < 0.5)
        slack = std::min(slack, pr - z[a.u_r[k]] + M);
      else
        slack = std::min(slack, pr - w[k] + M);
    }
  }
  if (ocp.variant == Variant::chance) {
    for (BoundSide side : vm.sides) {
      const auto& soft = vm.soft[side_index(side)];
      for (int k = 0; k < static_cast<int>(soft.size()); ++k) {
        for (int ip = 1; ip < tree.node_count(); ++ip) {
          const double g = soft_margin(s, k, side, z[vm.nodes[ip].x[k]]);
          slack = std::min({slack, ocp.big_m.M - g, g - ocp.big_m.m});
        }
      }
    }
  }
  return slack;
}

void write_problem(std::ostream& os, const OcpProblem& ocp) {
  const QpData& d = ocp.problem.qp;
  const auto old_flags = os.flags();
  const auto old_prec = os.precision();
  os << std::setprecision(17);
  os << "variant " << to_string(ocp.variant) << "\n";
  os << "alpha " << ocp.alpha << "\n";
  os << "relax_stage_threshold " << ocp.relax_stage_threshold << "\n";
  os << "vars " << d.num_vars() << " eq_rows " << d.A_eq.rows() << " ineq_rows " << d.G.rows() << " binaries "
     << ocp.problem.binaries.size() << "\n";
  for (int j = 0; j < d.num_vars(); ++j)
    os << "var " << j << " " << ocp.var_map.names[j] << " " << d.lb[j] << " " << d.ub[j] << " " << d.q[j] << "\n";
  for (const auto& b : ocp.problem.binaries)
    os << "binary " << b.index << " " << b.stage << " " << (b.relaxable ? 1 : 0) << "\n";
  os << "constant " << d.constant << "\n";
  for (int k = 0; k < d.P.outerSize(); ++k)
    for (SparseMatrix::InnerIterator it(d.P, k); it; ++it)
      if (it.row() <= it.col()) os << "P " << it.row() << " " << it.col() << " " << it.value() << "\n";
  for (int r = 0; r < d.A_eq.rows(); ++r)
    os << "eq " << r << " " << to_string(ocp.eq_rows[r].family) << " " << ocp.eq_rows[r].node << " " << d.b_eq[r] << "\n";
  for (int k = 0; k < d.A_eq.outerSize(); ++k)
    for (SparseMatrix::InnerIterator it(d.A_eq, k); it; ++it)
      os << "A " << it.row() << " " << it.col() << " " << it.value() << "\n";
  for (int r = 0; r < d.G.rows(); ++r)
    os << "ineq " << r << " " << to_string(ocp.ineq_rows[r].family) << " " << ocp.ineq_rows[r].node << " " << d.g_lo[r]
       << " " << d.g_hi[r] << "\n";
  for (int k = 0; k < d.G.outerSize(); ++k)
    for (SparseMatrix::InnerIterator it(d.G, k); it; ++it)
      os << "G " << it.row() << " " << it.col() << " " << it.value() << "\n";
  os.flags(old_flags);
  os.precision(old_prec);
}

}  // namespace mgmpc
