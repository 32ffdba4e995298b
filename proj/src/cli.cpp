#include "mgmpc/cli.hpp"

#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>

#include "CLI11.hpp"
#include "mgmpc/error.hpp"

namespace mgmpc {

using nlohmann::json;

namespace {

void open_for_writing(std::ofstream& os, const std::filesystem::path& file) {
  os.open(file, std::ios::binary);
  if (!os) throw InputError("cannot write " + file.string());
}

void write_json_file(const std::filesystem::path& file, const json& doc) {
  std::ofstream os;
  open_for_writing(os, file);
  os << doc.dump(2) << '\n';
}

void prepare_dir(const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw InputError("cannot create output directory " + dir.string() + ": " + ec.message());
}

std::string alpha_label(double a) {
  std::ostringstream os;
  os << a;
  return os.str();
}

std::string cell_name(Variant v, double alpha) {
  return v == Variant::hard ? "hard" : to_string(v) + "_alpha_" + alpha_label(alpha);
}

std::string table_label(Variant v, double alpha) {
  switch (v) {
    case Variant::hard:
      return "Hard bounds";
    case Variant::chance:
      return "Chance-constr., alpha=" + alpha_label(alpha);
    case Variant::risk:
      return "Risk-constr., alpha=" + alpha_label(alpha);
  }
  return "";
}

int report_issues(std::ostream& diag, const std::vector<ConfigIssue>& issues) {
  for (const auto& i : issues) write_diagnostic(diag, "error", i.key, i.line, i.message);
  return exit_bad_input;
}

json input_to_json(const ControlInput& v) {
  return {{"u_t", v.u_t}, {"u_s", v.u_s}, {"u_r", v.u_r}, {"delta", v.delta}};
}

ControlInput previous_or_default(const RunConfig& c) {
  if (c.previous_input) return *c.previous_input;
  ControlInput v;
  v.u_t.assign(c.grid.n_t, 0.0);
  v.u_s.assign(c.grid.n_s, 0.0);
  v.u_r.assign(c.grid.n_r, 0.0);
  v.delta.assign(c.grid.n_t, 1.0);
  return v;
}

// Runs `body`, mapping library exceptions onto the exit-code contract.
template <class F>
int guarded(std::ostream& diag, F&& body) {
  try {
    return body();
  } catch (const ConfigError& e) {
    return report_issues(diag, e.issues());
  } catch (const InputError& e) {
    write_diagnostic(diag, "error", "", 0, e.what());
    return exit_bad_input;
  } catch (const ModelError& e) {
    write_diagnostic(diag, "error", "", 0, e.what());
    return exit_infeasible;
  }
}

}  // namespace

void write_diagnostic(std::ostream& diag, const std::string& level, const std::string& key, int line,
                      const std::string& message) {
  diag << json{{"level", level}, {"key", key}, {"line", line}, {"message", message}}.dump() << '\n';
}

json solution_to_json(const OcpProblem& ocp, const SolveResult& res, bool include_timing) {
  json doc;
  doc["variant"] = to_string(ocp.variant);
  doc["alpha"] = ocp.alpha;
  doc["status"] = to_string(res.status);
  json stats = {{"objective", res.objective}, {"best_bound", res.best_bound}, {"gap", res.gap},
                {"nodes", res.nodes},         {"iterations", res.iterations}, {"unresolved_nodes", res.unresolved_nodes}};
  if (include_timing) stats["solve_time_s"] = res.solve_time_s;
  doc["stats"] = stats;
  doc["num_vars"] = ocp.var_map.num_vars;
  doc["num_binaries"] = ocp.problem.binaries.size();
  if (!res.has_solution()) {
    doc["nodes"] = json::array();
    return doc;
  }
  const DecodedSolution sol = decode(ocp, res.z);
  json nodes = json::array();
  for (int id = 0; id < ocp.tree.node_count(); ++id) {
    const auto& tn = ocp.tree.node(id);
    const auto& ns = sol.nodes[id];
    json n = {{"id", id}, {"stage", tn.stage}, {"ancestor", tn.ancestor}, {"probability", tn.probability}, {"x", ns.x}};
    if (id > 0) {
      n["w_r"] = tn.disturbance.w_r;
      n["w_d"] = tn.disturbance.w_d;
      n["p_t"] = ns.p_t;
      n["p_s"] = ns.p_s;
      n["p_r"] = ns.p_r;
      n["mu"] = ns.mu;
      n["phi"] = ns.phi;
      n["beta"] = ns.beta;
    }
    if (!ocp.tree.is_leaf(id)) n["input"] = input_to_json(ns.v);
    nodes.push_back(std::move(n));
  }
  doc["nodes"] = std::move(nodes);
  return doc;
}

SolveOutcome solve_instance(const RunConfig& config) {
  auto issues = validate_config(config);
  if (!issues.empty()) throw ConfigError(std::move(issues));
  const ScenarioTree tree = forecast_tree(config.profile, config.grid, config.start_slot, {}, full_branching(config),
                                          config.samples, config.seed);
  FormulationOptions fopt;
  fopt.alpha = config.alpha.value_or(0.0);
  fopt.sides = config.sides;
  fopt.relax_stage_threshold = config.relax_stage_threshold;
  SolveOutcome out{assemble(config.variant, tree, config.grid, config.x0, previous_or_default(config), fopt), {}};

  BnBOptions bopt = simulation_setup(config).controller.bnb;
  bopt.relax_stage_threshold = config.relax_stage_threshold;
  out.result = branch_and_bound(out.ocp.problem, bopt);
  return out;
}

int cmd_solve(const RunConfig& config, const CommandOptions& options, std::ostream& diag) {
  return guarded(diag, [&] {
    const auto issues = validate_config(config);
    if (!issues.empty()) return report_issues(diag, issues);
    prepare_dir(options.out_dir);
    const auto [ocp, res] = solve_instance(config);

    {
      std::ofstream os;
      open_for_writing(os, options.out_dir / "problem.txt");
      write_problem(os, ocp);
    }
    write_json_file(options.out_dir / "solution.json", solution_to_json(ocp, res, options.timing));

    switch (res.status) {
      case SolveStatus::optimal:
        return static_cast<int>(exit_ok);
      case SolveStatus::infeasible:
        write_diagnostic(diag, "error", "", 0, "problem is infeasible");
        return static_cast<int>(exit_infeasible);
      default:
        write_diagnostic(diag, "warning", "", 0, "optimality not proven: " + to_string(res.status));
        return static_cast<int>(exit_not_proven);
    }
  });
}

namespace {

// Closed loop for one cell; returns the metrics and writes trace.csv / report.json into `dir`.
Metrics simulate_into(const RunConfig& config, const std::filesystem::path& dir, bool timing, std::ostream& diag) {
  prepare_dir(dir);
  const SimulationTrace trace = closed_loop(simulation_setup(config));
  const Metrics m = metrics(trace, config.grid);
  {
    std::ofstream os;
    open_for_writing(os, dir / "trace.csv");
    write_trace_csv(os, trace, timing);
  }
  json report = {{"variant", to_string(config.variant)},
                 {"alpha", config.alpha.value_or(0.0)},
                 {"seed", config.seed},
                 {"horizon", config.horizon},
                 {"branching", full_branching(config)},
                 {"metrics", metrics_to_json(m, timing)}};
  write_json_file(dir / "report.json", report);
  if (m.infeasible_steps > 0)
    write_diagnostic(diag, "warning", "", 0,
                     std::to_string(m.infeasible_steps) + " step(s) without a solution kept the previous input");
  return m;
}

}  // namespace

int cmd_simulate(const RunConfig& config, const CommandOptions& options, std::ostream& diag) {
  return guarded(diag, [&] {
    const auto issues = validate_config(config);
    if (!issues.empty()) return report_issues(diag, issues);
    simulate_into(config, options.out_dir, options.timing, diag);
    return static_cast<int>(exit_ok);
  });
}

int cmd_compare(const RunConfig& config, const std::vector<Variant>& variants, const std::vector<double>& alphas,
                const CommandOptions& options, std::ostream& diag) {
  return guarded(diag, [&] {
    if (variants.empty()) return report_issues(diag, {{"variant", 0, "compare needs at least one variant"}});
    if (alphas.empty()) return report_issues(diag, {{"alpha", 0, "compare needs at least one alpha"}});

    // Hard bounds ignore alpha, so they contribute a single cell.
    std::vector<RunConfig> cells;
    for (Variant v : variants) {
      for (double a : alphas) {
        RunConfig c = config;
        c.variant = v;
        c.alpha = a;
        cells.push_back(c);
        if (v == Variant::hard) break;
      }
    }
    for (const auto& c : cells) {
      const auto issues = validate_config(c);
      if (!issues.empty()) return report_issues(diag, issues);
    }
    prepare_dir(options.out_dir);

    json rows = json::array();
    std::ostringstream csv;
    csv << std::setprecision(10);
    csv << "label,variant,alpha,average_cost,renewable_share_pct,violation_count,max_violation,switching_actions,"
           "mean_solve_time_s,max_solve_time_s,infeasible_steps\n";
    for (const auto& c : cells) {
      const double a = *c.alpha;
      const Metrics m = simulate_into(c, options.out_dir / cell_name(c.variant, a), options.timing, diag);
      const double mean_t = options.timing ? m.mean_solve_time_s : 0.0;
      const double max_t = options.timing ? m.max_solve_time_s : 0.0;
      csv << '"' << table_label(c.variant, a) << "\"," << to_string(c.variant) << ',' << a << ',' << m.average_cost
          << ',' << m.renewable_share_pct << ',' << m.violation_count << ',' << m.max_violation << ','
          << m.switching_actions << ',' << mean_t << ',' << max_t << ',' << m.infeasible_steps << '\n';
      rows.push_back({{"label", table_label(c.variant, a)},
                      {"variant", to_string(c.variant)},
                      {"alpha", a},
                      {"directory", cell_name(c.variant, a)},
                      {"metrics", metrics_to_json(m, options.timing)}});
    }
    {
      std::ofstream os;
      open_for_writing(os, options.out_dir / "compare.csv");
      os << csv.str();
    }
    write_json_file(options.out_dir / "compare.json", json{{"seed", config.seed}, {"rows", rows}});
    return static_cast<int>(exit_ok);
  });
}

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& diag) {
  CLI::App app{"Scenario-tree MPC for microgrid energy management"};
  app.require_subcommand(1);
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out_dir;
  std::vector<double> alphas;
  std::vector<std::string> variant_names;
  std::optional<int> steps, horizon;
  bool no_timing = false;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "Run configuration (JSON)")->required();
    sub->add_option("--seed", seed, "Random seed for truth and forecasts");
    sub->add_option("--out", out_dir, "Output directory (default: output_dir of the config)");
    sub->add_option("--alpha", alphas, "Risk level; repeatable for compare")->allow_extra_args(false);
    sub->add_option("--variant", variant_names, "hard, chance or risk; repeatable for compare")->allow_extra_args(false);
    sub->add_option("--steps", steps, "Closed-loop steps");
    sub->add_option("--horizon", horizon, "Prediction horizon");
    sub->add_flag("--no-timing", no_timing, "Omit wall-clock fields so outputs are reproducible byte for byte");
  };
  CLI::App* solve = app.add_subcommand("solve", "Solve one scenario-tree problem");
  CLI::App* simulate = app.add_subcommand("simulate", "Run the closed loop");
  CLI::App* compare = app.add_subcommand("compare", "Closed loop for every (variant, alpha) pair");
  for (CLI::App* sub : {solve, simulate, compare}) add_common(sub);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return exit_ok;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return exit_ok;
  } catch (const CLI::ParseError& e) {
    write_diagnostic(diag, "error", "", 0, e.what());
    return exit_bad_input;
  }

  std::vector<Variant> variants;
  for (const auto& name : variant_names) {
    try {
      variants.push_back(variant_from_string(name));
    } catch (const std::exception& e) {
      write_diagnostic(diag, "error", "variant", 0, e.what());
      return exit_bad_input;
    }
  }

  RunConfig config;
  try {
    config = load_config(config_path);
  } catch (const ConfigError& e) {
    return report_issues(diag, e.issues());
  }
  if (seed) config.seed = *seed;
  if (steps) config.steps = *steps;
  if (horizon) config.horizon = *horizon;
  const bool is_compare = compare->parsed();
  if (!is_compare) {
    if (alphas.size() > 1) return report_issues(diag, {{"alpha", 0, "only compare accepts several --alpha values"}});
    if (variants.size() > 1)
      return report_issues(diag, {{"variant", 0, "only compare accepts several --variant values"}});
    if (!alphas.empty()) config.alpha = alphas.front();
    if (!variants.empty()) config.variant = variants.front();
  }

  CommandOptions options;
  options.out_dir = out_dir.empty() ? std::filesystem::path(config.output_dir) : std::filesystem::path(out_dir);
  options.timing = !no_timing;

  if (solve->parsed()) return cmd_solve(config, options, diag);
  if (simulate->parsed()) return cmd_simulate(config, options, diag);
  if (variants.empty()) variants.push_back(config.variant);
  if (alphas.empty()) {
    if (!config.alpha && config.variant != Variant::hard)
      return report_issues(diag, {{"alpha", 0, "compare needs --alpha or an alpha in the config"}});
    alphas.push_back(config.alpha.value_or(0.0));
  }
  return cmd_compare(config, variants, alphas, options, diag);
}

}  // namespace mgmpc
