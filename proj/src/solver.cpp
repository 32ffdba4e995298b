#include "mgmpc/solver.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <queue>

#include "mgmpc/error.hpp"

namespace mgmpc {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kIntegralityTol = 1e-6;

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

// Variable bounds with every binary clipped into [0, 1].
void relaxed_bounds(const MixedBinaryQp& p, Eigen::VectorXd& lb, Eigen::VectorXd& ub) {
  lb = p.qp.lb;
  ub = p.qp.ub;
  for (const auto& b : p.binaries) {
    lb[b.index] = std::max(lb[b.index], 0.0);
    ub[b.index] = std::min(ub[b.index], 1.0);
  }
}

double relative_gap(double obj, double bound) { return (obj - bound) / std::max(1.0, std::abs(obj)); }

struct OpenNode {
  double bound;
  int id;
  Eigen::VectorXd lb, ub;
  QpWarmStart warm;
};

struct NodeOrder {
  bool operator()(const OpenNode& a, const OpenNode& b) const {
    if (a.bound != b.bound) return a.bound > b.bound;
    return a.id > b.id;
  }
};

}  // namespace

std::vector<int> enforced_binaries(const MixedBinaryQp& problem, int threshold) {
  std::vector<int> out;
  for (const auto& b : problem.binaries)
    if (!b.relaxable || b.stage < threshold) out.push_back(b.index);
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

SolveResult solve_relaxation(const MixedBinaryQp& problem, const BnBOptions& options) {
  const auto t0 = Clock::now();
  QpEngine engine(problem.qp, options.qp);
  Eigen::VectorXd lb, ub;
  relaxed_bounds(problem, lb, ub);
  QpWarmStart warm;
  if (options.warm_start) warm.z = *options.warm_start;
  const auto sol = engine.solve(lb, ub, options.warm_start ? &warm : nullptr);
  SolveResult r;
  r.status = sol.status;
  r.z = sol.z;
  r.objective = r.best_bound = sol.objective;
  r.iterations = sol.iterations;
  r.nodes = 1;
  r.solve_time_s = seconds_since(t0);
  return r;
}

SolveResult branch_and_bound(const MixedBinaryQp& problem, const BnBOptions& options) {
  const auto t0 = Clock::now();
  SolveResult res;
  QpEngine engine(problem.qp, options.qp);
  const auto enforced = enforced_binaries(problem, options.relax_stage_threshold);

  Eigen::VectorXd lb0, ub0;
  relaxed_bounds(problem, lb0, ub0);

  double incumbent = kInf;
  Eigen::VectorXd best_z;
  auto tolerance = [&] { return std::max(options.abs_gap, options.rel_gap * std::abs(incumbent)); };

  std::vector<int> stage_of(problem.qp.num_vars(), 0);
  for (const auto& b : problem.binaries) stage_of[b.index] = b.stage;
  const bool by_stage = options.branching == BranchingRule::earliest_stage;
  // Most fractional enforced binary, ties by lowest index; with the
  // earliest-stage rule only binaries of the lowest fractional stage compete.
  auto most_fractional = [&](const Eigen::VectorXd& z) {
    int pick = -1;
    double best = kIntegralityTol;
    int best_stage = 1 << 30;
    for (int idx : enforced) {
      const double f = std::abs(z[idx] - std::round(z[idx]));
      if (f <= kIntegralityTol) continue;
      if (by_stage && stage_of[idx] < best_stage) {
        best_stage = stage_of[idx];
        best = f;
        pick = idx;
      } else if ((!by_stage || stage_of[idx] == best_stage) && f > best) {
        best = f;
        pick = idx;
      }
    }
    return pick;
  };
  auto accept = [&](Eigen::VectorXd z, double obj) {
    for (int idx : enforced) z[idx] = std::round(z[idx]) + 0.0;  // + 0.0 turns -0 into 0
    if (obj < incumbent) {
      incumbent = obj;
      best_z = std::move(z);
    }
  };

  // A fractional binary whose rounding keeps the point feasible without
  // raising the objective carries no information; snap it instead of
  // branching on it.
  auto snap_degenerate = [&](Eigen::VectorXd& z, const Eigen::VectorXd& lb, const Eigen::VectorXd& ub) {
    double viol = problem.qp.max_violation(z);
    double obj = problem.qp.objective(z);
    for (int idx : enforced) {
      const double f = std::abs(z[idx] - std::round(z[idx]));
      if (f <= kIntegralityTol) continue;
      const double near = std::round(z[idx]);
      for (double v : {near, 1.0 - near}) {
        if (v < lb[idx] || v > ub[idx]) continue;
        const double old = z[idx];
        z[idx] = v;
        const double v_new = problem.qp.max_violation(z);
        const double o_new = problem.qp.objective(z);
        if (v_new <= viol + 1e-9 && o_new <= obj + 1e-9 * (1.0 + std::abs(obj))) {
          viol = std::max(viol, v_new);
          obj = o_new;
          break;
        }
        z[idx] = old;
      }
    }
  };

  std::priority_queue<OpenNode, std::vector<OpenNode>, NodeOrder> open;
  int next_id = 0;
  {
    OpenNode root{-kInf, next_id++, lb0, ub0, {}};
    if (options.warm_start && options.warm_start->size() == problem.qp.num_vars()) root.warm.z = *options.warm_start;
    open.push(std::move(root));
  }

  bool root_done = false;
  bool hit_limit = false;
  bool dropped_unresolved = false;  // infeasibility is then not proven
  while (!open.empty()) {
    if (incumbent < kInf && open.top().bound >= incumbent - tolerance()) break;
    if (res.nodes >= options.max_nodes) {
      hit_limit = true;
      break;
    }
    OpenNode node = open.top();
    open.pop();

    engine.set_max_iter(root_done ? std::min(options.qp.max_iter, options.node_max_iter) : options.qp.max_iter);
    const auto sol = engine.solve(node.lb, node.ub, node.warm.z.size() ? &node.warm : nullptr);
    ++res.nodes;
    res.iterations += sol.iterations;
    if (sol.status == SolveStatus::infeasible) continue;
    if (sol.status == SolveStatus::iteration_limit) {
      ++res.unresolved_nodes;
      if (problem.qp.max_violation(sol.z) > 1e-4) {
        dropped_unresolved = true;
        continue;
      }
    }
    const double bound = std::max(node.bound, sol.objective);
    if (incumbent < kInf && bound >= incumbent - tolerance()) continue;

    Eigen::VectorXd z = sol.z;
    snap_degenerate(z, node.lb, node.ub);
    const int branch = most_fractional(z);
    if (branch < 0) {
      root_done = true;
      if (sol.status != SolveStatus::optimal) continue;
      // Binaries within the integrality tolerance still let big-M rows leak
      // by M times that tolerance; re-solve with them fixed exactly.
      bool exact = true;
      Eigen::VectorXd lb = node.lb, ub = node.ub;
      for (int idx : enforced) {
        const double r = std::round(z[idx]);
        exact = exact && z[idx] == r;
        lb[idx] = ub[idx] = r;
      }
      if (exact) {
        accept(z, problem.qp.objective(z));
        continue;
      }
      QpWarmStart w{z, sol.y};
      const auto fixed = engine.solve(lb, ub, &w);
      res.iterations += fixed.iterations;
      if (fixed.status == SolveStatus::optimal)
        accept(fixed.z, fixed.objective);
      else if (fixed.status == SolveStatus::iteration_limit)
        accept(z, problem.qp.objective(z));
      continue;
    }

    if (!root_done) {
      root_done = true;
      // Round-and-repair for a first incumbent: nearest rounding, then
      // rounding every fractional binary up.
      for (int mode = 0; mode < 2 && incumbent == kInf; ++mode) {
        Eigen::VectorXd lb = node.lb, ub = node.ub;
        bool admissible = true;
        for (int idx : enforced) {
          const double v = std::clamp(z[idx], 0.0, 1.0);
          const double r = mode == 0 ? std::round(v) : std::ceil(v - kIntegralityTol);
          if (r < lb[idx] || r > ub[idx]) admissible = false;
          lb[idx] = ub[idx] = r;
        }
        if (!admissible) continue;
        QpWarmStart w{z, {}};
        const auto rep = engine.solve(lb, ub, &w);
        res.iterations += rep.iterations;
        if (rep.status == SolveStatus::optimal) accept(rep.z, rep.objective);
      }
    }

    QpWarmStart warm{sol.z, sol.y};
    OpenNode down{bound, next_id++, node.lb, node.ub, warm};
    down.ub[branch] = 0.0;
    OpenNode up{bound, next_id++, node.lb, node.ub, warm};
    up.lb[branch] = 1.0;
    open.push(std::move(down));
    open.push(std::move(up));
  }

  double bound = incumbent;
  if (!open.empty()) bound = std::min(bound, open.top().bound);
  res.solve_time_s = seconds_since(t0);
  if (incumbent == kInf) {
    res.status = hit_limit || dropped_unresolved ? SolveStatus::iteration_limit : SolveStatus::infeasible;
    res.best_bound = open.empty() ? kInf : open.top().bound;
    return res;
  }
  res.z = std::move(best_z);
  res.objective = incumbent;
  res.best_bound = bound;
  res.gap = relative_gap(incumbent, bound);
  res.status = (hit_limit && incumbent - bound > tolerance()) ? SolveStatus::gap_limit : SolveStatus::optimal;
  return res;
}

SolveResult exhaustive_solve(const MixedBinaryQp& problem, const BnBOptions& options) {
  const auto t0 = Clock::now();
  const auto enforced = enforced_binaries(problem, options.relax_stage_threshold);
  if (enforced.size() > 16) throw InputError("exhaustive_solve: more than 16 binaries");
  QpEngine engine(problem.qp, options.qp);
  Eigen::VectorXd lb0, ub0;
  relaxed_bounds(problem, lb0, ub0);

  SolveResult res;
  res.objective = kInf;
  const unsigned long combos = 1ul << enforced.size();
  for (unsigned long mask = 0; mask < combos; ++mask) {
    Eigen::VectorXd lb = lb0, ub = ub0;
    bool empty = false;
    for (std::size_t k = 0; k < enforced.size(); ++k) {
      const double v = (mask >> k) & 1ul ? 1.0 : 0.0;
      const int idx = enforced[k];
      if (v < lb[idx] || v > ub[idx]) empty = true;
      lb[idx] = ub[idx] = v;
    }
    if (empty) continue;
    const auto sol = engine.solve(lb, ub);
    ++res.nodes;
    res.iterations += sol.iterations;
    if (sol.status == SolveStatus::iteration_limit) ++res.unresolved_nodes;
    if (sol.status != SolveStatus::optimal) continue;
    if (sol.objective < res.objective) {
      res.objective = sol.objective;
      res.z = sol.z;
    }
  }
  res.solve_time_s = seconds_since(t0);
  if (res.objective == kInf) {
    res.status = SolveStatus::infeasible;
    res.objective = 0.0;
    return res;
  }
  res.status = SolveStatus::optimal;
  res.best_bound = res.objective;
  return res;
}

}  // namespace mgmpc
