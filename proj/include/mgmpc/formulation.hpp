#pragma once

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "mgmpc/grid.hpp"
#include "mgmpc/scenario_tree.hpp"
#include "mgmpc/solver.hpp"

namespace mgmpc {

/// Problem variants: soft energy bounds imposed as hard bounds (P), as
/// chance constraints (P_cc), or as AV@R risk constraints (P_rc).
enum class Variant { hard, chance, risk };

std::string to_string(Variant v);
Variant variant_from_string(const std::string& s);

enum class BoundSide { upper, lower };

/// Constants of the big-M encoding of chance constraints.
struct BigMParams {
  double M = 0.0;
  double m = 0.0;
  double eps = 1e-4;

  /// M = max(x_max - x_min), m = -M, eps = 1e-4 pu*h.
  static BigMParams defaults(const GridSpec& spec);
  /// Throws InputError unless M >= max(x_max - x_min), m <= 0, 0 < eps < M.
  void check(const GridSpec& spec) const;
};

/// Control input v = (u_t, u_s, u_r, delta_t) of one node.
struct ControlInput {
  std::vector<double> u_t, u_s, u_r, delta;

  bool operator==(const ControlInput&) const = default;
};

struct FormulationOptions {
  double alpha = 0.5;
  std::vector<BoundSide> sides{BoundSide::upper, BoundSide::lower};
  std::optional<BigMParams> big_m;
  int relax_stage_threshold = 4;
};

/// Contiguous range of decision-vector entries.
struct Block {
  int offset = -1;
  int size = 0;

  int operator[](int k) const { return offset + k; }
  bool empty() const { return size == 0; }
};

struct NodeVars {
  Block u_t, u_s, u_r, delta;            // nodes with children
  Block sw;                              // |delta - parent delta| where both are enforced binaries
  Block x;                               // every node
  Block p_t, p_s, p_r, mu, phi, beta;    // every node but the root
};

/// Auxiliaries of one (side, storage) soft-bound encoding.
struct SoftBoundVars {
  std::vector<int> xi, tau;  // per node id, -1 at the root (chance)
  std::vector<Block> y;      // per stage, empty at stage 0 (risk)
};

struct VarMap {
  std::vector<NodeVars> nodes;
  std::vector<BoundSide> sides;
  std::vector<std::vector<SoftBoundVars>> soft;  // [side][storage]
  std::vector<std::string> names;
  int num_vars = 0;
};

enum class RowFamily {
  initial_state,
  dynamics,
  balance,
  power_sharing,
  mccormick,
  renewable_min,
  conventional_limits,
  line_limits,
  chance_margin,
  chance_bigm,
  chance_stage,
  risk_dual,
  risk_bound,
  switching,
};

std::string to_string(RowFamily f);

struct RowInfo {
  RowFamily family;
  int node = -1;   // tree node the row belongs to (stage rows: first node of the stage)
};

/// Canonical mixed-binary convex QP over a scenario tree.
struct OcpProblem {
  Variant variant = Variant::hard;
  double alpha = 0.0;
  ScenarioTree tree;
  GridSpec spec;
  MixedBinaryQp problem;
  VarMap var_map;
  std::vector<RowInfo> eq_rows, ineq_rows;
  int relax_stage_threshold = 4;
  BigMParams big_m;
  double mccormick_M = 0.0;
  std::vector<double> renewable_M;  // per (non-root node, renewable unit), row-major
};

/// Builds (P), (P_cc) or (P_rc). x0 is the measured storage energy and
/// v_prev the input applied at the previous controller execution.
OcpProblem assemble(Variant variant, const ScenarioTree& tree, const GridSpec& spec, const std::vector<double>& x0,
                    const ControlInput& v_prev, const FormulationOptions& options = {});

/// Per-node values read back from a decision vector.
struct NodeSolution {
  ControlInput v;  // empty for leaves
  std::vector<double> x, p_t, p_s, p_r, phi, beta;
  double mu = 0.0;
};

struct DecodedSolution {
  std::vector<NodeSolution> nodes;
};

DecodedSolution decode(const OcpProblem& ocp, const Eigen::VectorXd& z);

/// Writes node values into a decision vector and fills the soft-bound
/// auxiliaries consistently: xi = g (at least eps when g > 0), tau = [g <= 0],
/// and the AV@R duals y = (max(g, 0), max(-g, 0), 0), which satisfy E'y = g.
Eigen::VectorXd encode(const OcpProblem& ocp, const DecodedSolution& sol);

/// Undiscounted operating cost of one interval.
struct StageCost {
  double fuel = 0.0;
  double switching = 0.0;
  double curtailment = 0.0;

  double total() const { return fuel + switching + curtailment; }
};

StageCost stage_cost(const GridSpec& spec, const std::vector<double>& delta, const std::vector<double>& delta_prev,
                     const std::vector<double>& p_t, const std::vector<double>& p_r);

/// Expected discounted cost over the tree, evaluated directly from node
/// values.
double expected_cost(const ScenarioTree& tree, const GridSpec& spec, const ControlInput& v_prev,
                     const DecodedSolution& sol);

/// Largest violation over the rows of one family at z (0 if none).
double family_violation(const OcpProblem& ocp, const Eigen::VectorXd& z, RowFamily family);

/// Signed margin of the soft bound: x - x_soft_max (upper) or x_soft_min - x.
double soft_margin(const GridSpec& spec, int storage, BoundSide side, double x);

/// Smallest distance between a big-M-bounded quantity and its constant at z:
/// M_mu - |mu| for the product linearisation, the slack of every deactivated
/// renewable row, and min(M - g, g - m) for chance margins. A value near zero
/// means a constant is too small.
double min_big_m_slack(const OcpProblem& ocp, const Eigen::VectorXd& z);

/// Plain-text sparse dump (triplet lists plus vectors).
void write_problem(std::ostream& os, const OcpProblem& ocp);

}  // namespace mgmpc
