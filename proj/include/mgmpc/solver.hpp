#pragma once

#include <optional>
#include <vector>

#include "mgmpc/qp.hpp"

namespace mgmpc {

/// A decision variable restricted to {0, 1}. `stage` is the scenario-tree
/// stage it belongs to; `relaxable` marks binaries that may be relaxed to
/// [0, 1] from the relaxation threshold onwards.
struct BinaryVar {
  int index = 0;
  int stage = 0;
  bool relaxable = true;
};

struct MixedBinaryQp {
  QpData qp;
  std::vector<BinaryVar> binaries;
};

enum class BranchingRule {
  most_fractional,  // over all enforced binaries
  earliest_stage,   // most fractional within the lowest stage that has a fractional binary
};

struct BnBOptions {
  double abs_gap = 1e-7;
  double rel_gap = 1e-7;
  int max_nodes = 20000;
  // ADMM iteration cap below the root; nodes that stall far from feasibility are dropped anyway
  int node_max_iter = 4000;
  BranchingRule branching = BranchingRule::most_fractional;
  int relax_stage_threshold = 4;
  std::optional<Eigen::VectorXd> warm_start;
  QpSettings qp;
};

struct SolveResult {
  SolveStatus status = SolveStatus::infeasible;
  Eigen::VectorXd z;
  double objective = 0.0;
  double best_bound = 0.0;
  double gap = 0.0;  // relative: (objective - best_bound) / max(1, |objective|)
  double solve_time_s = 0.0;
  int nodes = 0;
  int iterations = 0;
  int unresolved_nodes = 0;  // relaxations that hit the iteration limit

  bool has_solution() const { return z.size() > 0 && (status == SolveStatus::optimal || status == SolveStatus::gap_limit); }
};

/// Binaries that must be integral: all non-relaxable ones plus the relaxable
/// ones below the stage threshold. Returned in increasing variable index.
std::vector<int> enforced_binaries(const MixedBinaryQp& problem, int relax_stage_threshold);

/// Solves the continuous relaxation (every binary in [0, 1]).
SolveResult solve_relaxation(const MixedBinaryQp& problem, const BnBOptions& options = {});

/// Best-bound branch-and-bound over the enforced binaries, branching on the
/// most fractional one (ties to the lowest index), optionally restricted to
/// the earliest stage that still has a fractional binary. The first incumbent comes
/// from rounding the root relaxation and re-solving with the binaries fixed.
/// Hitting max_nodes gives gap_limit with an incumbent, iteration_limit
/// without one.
SolveResult branch_and_bound(const MixedBinaryQp& problem, const BnBOptions& options = {});

/// Enumerates every assignment of the enforced binaries. Limited to 16.
SolveResult exhaustive_solve(const MixedBinaryQp& problem, const BnBOptions& options = {});

}  // namespace mgmpc
