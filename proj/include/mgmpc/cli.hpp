#pragma once

#include <filesystem>
#include <iosfwd>
#include <vector>

#include "json.hpp"
#include "mgmpc/config.hpp"

namespace mgmpc {

/// Process exit codes of the command-line tool.
enum ExitCode : int {
  exit_ok = 0,
  exit_bad_input = 1,   // malformed config or flags
  exit_infeasible = 2,  // no feasible point found
  exit_not_proven = 3,  // gap or iteration limit reached
};

struct CommandOptions {
  std::filesystem::path out_dir;
  bool timing = true;  // wall-clock fields; off gives byte-identical outputs
};

struct SolveOutcome {
  OcpProblem ocp;
  SolveResult result;
};

/// Builds the forecast tree at config.start_slot, assembles the configured
/// variant and runs branch-and-bound. Throws ConfigError on an invalid config.
SolveOutcome solve_instance(const RunConfig& config);

/// Single tree-based solve at config.start_slot. Writes problem.txt and
/// solution.json (node values, solver statistics).
int cmd_solve(const RunConfig& config, const CommandOptions& options, std::ostream& diag);

/// Closed loop plus metrics. Writes trace.csv and report.json.
int cmd_simulate(const RunConfig& config, const CommandOptions& options, std::ostream& diag);

/// One simulate run per (variant, alpha) on the same seed, each in its own
/// subdirectory, plus compare.csv and compare.json with one row per cell.
int cmd_compare(const RunConfig& config, const std::vector<Variant>& variants, const std::vector<double>& alphas,
                const CommandOptions& options, std::ostream& diag);

/// Solution document written by cmd_solve.
nlohmann::json solution_to_json(const OcpProblem& ocp, const SolveResult& result, bool include_timing);

/// One JSON object per line: {"level", "key", "line", "message"}.
void write_diagnostic(std::ostream& diag, const std::string& level, const std::string& key, int line,
                      const std::string& message);

/// Parses argv and dispatches: mgmpc solve|simulate|compare --config PATH
/// [--seed N] [--out DIR] [--alpha A]... [--variant V]... [--steps K]
/// [--horizon N] [--no-timing].
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& diag);

}  // namespace mgmpc
