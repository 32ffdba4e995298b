#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

#include "json.hpp"

namespace mgmpc {

struct Line {
  int from_bus = 0;
  int to_bus = 0;
  double susceptance = -20.0;  // pu; only the magnitude enters the DC flow

  bool operator==(const Line&) const = default;
};

/// Bus index of every conventional (t), storage (s), renewable (r) unit and
/// every load (d).
struct BusAssignment {
  std::vector<int> t, s, r, d;

  bool operator==(const BusAssignment&) const = default;
};

/// Physical description of an islanded microgrid plus the operating-cost
/// weights. Powers in pu, energies in pu*h, T_s in hours.
struct GridSpec {
  int n_t = 0, n_s = 0, n_r = 0, n_d = 0, n_e = 0;

  std::vector<double> p_t_min, p_t_max;
  std::vector<double> p_s_min, p_s_max;
  std::vector<double> p_r_min, p_r_max;
  std::vector<double> x_min, x_max;
  std::vector<double> x_soft_min, x_soft_max;
  std::vector<double> K_t, K_s;
  double T_s = 0.5;

  std::vector<double> p_e_min, p_e_max;
  std::vector<Line> topology;
  BusAssignment bus_of;
  int n_bus = 0;

  // Cost weights: fixed fuel c_t, linear fuel c_t', quadratic fuel c_t'',
  // switching c_t^s, curtailment c_r, discount gamma.
  std::vector<double> c_t, c_t_lin, c_t_quad, c_t_switch, c_r;
  double gamma = 0.95;

  bool operator==(const GridSpec&) const = default;
};

/// One broken invariant; `key` names the offending field.
struct GridViolation {
  std::string key;
  std::string message;
};

std::vector<GridViolation> validate_grid(const GridSpec& spec);

/// Throws InputError listing every violation if the spec is invalid.
void require_valid(const GridSpec& spec);

/// Bus-level PTDF: n_e x n_bus, bus 0 is the angle reference. Flow on a line
/// is positive from its from-bus to its to-bus.
Eigen::MatrixXd bus_ptdf(const GridSpec& spec);

/// Unit-level PTDF F of shape n_e x (n_t+n_s+n_r+n_d), mapping
/// [p_t; p_s; p_r; w_d] to line flows.
Eigen::MatrixXd ptdf_matrix(const GridSpec& spec);

/// The islanded test grid with one conventional generator, one storage unit,
/// one PV plant and one load, each on its own bus, joined in a ring of four
/// 1.3 pu lines.
GridSpec case_study_grid();

nlohmann::json grid_to_json(const GridSpec& spec);
GridSpec grid_from_json(const nlohmann::json& doc);

}  // namespace mgmpc
