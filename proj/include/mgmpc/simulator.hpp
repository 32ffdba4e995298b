#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "json.hpp"
#include "mgmpc/formulation.hpp"
#include "mgmpc/grid.hpp"
#include "mgmpc/scenario_tree.hpp"
#include "mgmpc/solver.hpp"

namespace mgmpc {

/// Synthetic stand-in for measured load and irradiance: a repeating daily
/// mean shape and AR(1) errors e(k+1) = phi e(k) + sigma * N(0, 1), one
/// independent error process per renewable unit and per load. PV errors are
/// relative (w_r = shape * (1 + e)) so nights stay dark; load errors add.
struct ProfileModel {
  std::vector<double> pv_shape;    // mean available PV per slot of the day, >= 0
  std::vector<double> load_shape;  // mean load per slot of the day, <= 0
  double phi = 0.8;
  double sigma_pv = 0.15;
  double sigma_load = 0.05;
  std::uint64_t seed = 1;

  int period() const { return static_cast<int>(pv_shape.size()); }
  /// Throws InputError unless both shapes have the same positive length,
  /// signs are respected, phi in [0, 1) and sigmas >= 0.
  void check() const;

  /// Half-hour day (48 slots): clear-sky PV bell between 06:00 and 18:00
  /// peaking at 1.8 pu, and a load between 0.6 and 0.9 pu with a morning and
  /// an evening peak. The peak stays below the conventional unit's rating.
  static ProfileModel diurnal_default();

  bool operator==(const ProfileModel&) const = default;
};

/// Realised disturbances w(k) together with the underlying errors (before
/// clipping), which condition the forecasts.
struct TruthSeries {
  std::vector<Disturbance> w;
  std::vector<Disturbance> error;
};

/// Deterministic in model.seed. PV is clipped to [p_r_min, p_r_max] and loads
/// to nonpositive values.
TruthSeries generate_truth(const ProfileModel& model, const GridSpec& spec, int length);

/// Scenario tree for the intervals k, k+1, ..., k+N-1 (stage j holds w(k+j-1)).
/// `last_error` is the error of interval k-1 (empty means zero). Paths are
/// sampled from the error model, clipped like the truth, and clustered.
ScenarioTree forecast_tree(const ProfileModel& model, const GridSpec& spec, int k, const Disturbance& last_error,
                           const std::vector<int>& branching, int n_samples, std::uint64_t seed);

struct PlantResult {
  std::vector<double> p_t, p_s, p_r;
  double mu = 0.0;
  std::vector<double> x_next;
  bool saturated = false;
  double balance_residual = 0.0;  // sum of all powers plus loads
};

/// Lower-layer response to an applied input: p_r = min(u_r, w_r), the shared
/// droop variable mu closes the balance, storage integrates. Saturated powers
/// are clipped to their boxes and flagged.
PlantResult plant_step(const GridSpec& spec, const ControlInput& v, const Disturbance& w, const std::vector<double>& x);

struct ControllerConfig {
  Variant variant = Variant::risk;
  double alpha = 0.5;
  int horizon = 8;
  std::vector<int> branching{2, 2};  // padded with 1 up to the horizon
  int n_samples = 200;
  int relax_stage_threshold = 4;
  std::vector<BoundSide> sides{BoundSide::upper, BoundSide::lower};
  bool warm_start = true;
  BnBOptions bnb = controller_bnb_defaults();

  /// Inside the loop only the root input is applied, so the search branches
  /// on early stages first and stops at a relative gap of 1e-4.
  static BnBOptions controller_bnb_defaults() {
    BnBOptions o;
    o.rel_gap = 1e-4;
    o.abs_gap = 1e-6;
    o.branching = BranchingRule::earliest_stage;
    return o;
  }
};

struct SimulationSetup {
  GridSpec spec;
  ProfileModel profile;
  ControllerConfig controller;
  int steps = 48;
  std::vector<double> x0{3.0};
  ControlInput v_init;  // input before the first step; defaults to all units on, zero setpoints
  std::uint64_t seed = 1;
};

struct TraceRow;
using StepCallback = std::function<void(const TraceRow&)>;

struct TraceRow {
  int k = 0;
  std::vector<double> x;
  ControlInput v;
  Disturbance w;
  std::vector<double> p_t, p_s, p_r;
  double mu = 0.0;
  double cost = 0.0;
  double viol_upper = 0.0;
  double viol_lower = 0.0;
  double solve_time_s = 0.0;
  int bnb_nodes = 0;
  std::string status;

  bool saturated = false;
  double balance_residual = 0.0;
  std::vector<std::vector<double>> predicted_x;  // stage-1 nodes of the solved tree
  double tree_var_max = 0.0;  // largest stage-wise V@R_alpha of predicted margins
};

struct SimulationTrace {
  std::vector<TraceRow> rows;
  std::vector<double> x_final;
  int n_t = 0, n_s = 0, n_r = 0, n_d = 0;
};

/// Runs the receding-horizon loop; `on_step` (optional) sees every finished row.
SimulationTrace closed_loop(const SimulationSetup& setup, const StepCallback& on_step = {});

struct Metrics {
  int steps = 0;
  double total_cost = 0.0;
  double average_cost = 0.0;
  double renewable_share_pct = 0.0;
  int violation_count = 0;
  double max_violation = 0.0;
  int switching_actions = 0;
  double mean_solve_time_s = 0.0;
  double max_solve_time_s = 0.0;
  int infeasible_steps = 0;
  int saturated_steps = 0;
  double max_balance_residual = 0.0;
  double energy_bookkeeping_error = 0.0;
};

/// Renewable share = sum p_r / sum (p_t + max(p_s, 0) + p_r) over all steps
/// and units, in percent. A step counts as a violation when x(k) leaves
/// [x_soft_min, x_soft_max] by more than 1e-6.
Metrics metrics(const SimulationTrace& trace, const GridSpec& spec);

nlohmann::json metrics_to_json(const Metrics& m, bool include_timing = true);

/// Fixed column order k, x, u_t, u_s, u_r, delta, w_r, w_d, p_t, p_s, p_r, mu,
/// cost, viol_upper, viol_lower, solve_time_s, bnb_nodes, status. Vector
/// columns get an index suffix (x_0, x_1, ...) when a size exceeds one.
/// Without timing the solve_time_s column is written as 0.
void write_trace_csv(std::ostream& os, const SimulationTrace& trace, bool include_timing = true);

}  // namespace mgmpc
