#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "mgmpc/formulation.hpp"
#include "mgmpc/grid.hpp"
#include "mgmpc/simulator.hpp"

namespace mgmpc {

struct SolverConfig {
  double abs_gap = 1e-6;
  double rel_gap = 1e-4;
  int max_nodes = 20000;
  int node_max_iter = 4000;
  int qp_max_iter = 20000;
  double qp_eps = 1e-6;
  BranchingRule branching = BranchingRule::earliest_stage;

  bool operator==(const SolverConfig&) const = default;
};

/// Everything a solve, simulate or compare run needs. Defaults reproduce the
/// case-study setup: four-bus grid, risk constraints at alpha 0.5, eight
/// half-hour stages with a [2, 2] branching, two days of simulation.
struct RunConfig {
  std::string grid_file;  // as written in the file; empty when the grid is inline
  GridSpec grid = case_study_grid();
  Variant variant = Variant::risk;
  std::optional<double> alpha = 0.5;
  int horizon = 8;
  std::vector<int> branching{2, 2};
  int steps = 96;
  std::uint64_t seed = 1;
  std::vector<double> x0{3.0};
  int start_slot = 0;                          // forecast interval of a single solve
  std::optional<ControlInput> previous_input;  // default: all units on, zero setpoints
  int samples = 200;
  int relax_stage_threshold = 4;
  std::vector<BoundSide> sides{BoundSide::upper, BoundSide::lower};
  bool warm_start = true;
  ProfileModel profile = ProfileModel::diurnal_default();
  SolverConfig solver;
  std::string output_dir = "out";

  bool operator==(const RunConfig&) const = default;
};

struct ConfigIssue {
  std::string key;  // dotted path, e.g. "solver.rel_gap"
  int line = 0;     // 1-based line in the source text, 0 if unknown
  std::string message;
};

class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(std::vector<ConfigIssue> issues);
  const std::vector<ConfigIssue>& issues() const { return issues_; }

 private:
  std::vector<ConfigIssue> issues_;
};

/// Parses and validates. Unknown keys are rejected. A relative grid_file is
/// resolved against `base_dir`. Throws ConfigError listing every problem found.
RunConfig parse_config(const std::string& text, const std::filesystem::path& base_dir = {});
RunConfig load_config(const std::filesystem::path& file);

/// Inverse of parse_config: parsing the dump again yields an equal RunConfig.
/// The grid is written inline unless it came from a file.
nlohmann::json config_to_json(const RunConfig& config);

/// Semantic checks only; an empty result means the config is usable.
std::vector<ConfigIssue> validate_config(const RunConfig& config);

/// Horizon-length branching: the configured factors padded with ones.
std::vector<int> full_branching(const RunConfig& config);

SimulationSetup simulation_setup(const RunConfig& config);

std::string to_string(BoundSide side);
BoundSide bound_side_from_string(const std::string& s);

std::string to_string(BranchingRule rule);
BranchingRule branching_rule_from_string(const std::string& s);

}  // namespace mgmpc
