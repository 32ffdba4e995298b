// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any fails.
//
//   acceptance --cli PATH --config PATH [--only 1,2,...]

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "mgmpc/config.hpp"
#include "mgmpc/formulation.hpp"
#include "mgmpc/risk.hpp"
#include "mgmpc/simulator.hpp"
#include "support.hpp"

using namespace mgmpc;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double a) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

const ControlInput kPrevOn{{0.5}, {0.0}, {1.0}, {1.0}};

SolveResult solve_exact(const OcpProblem& ocp, BranchingRule rule = BranchingRule::most_fractional) {
  BnBOptions opt;
  opt.relax_stage_threshold = ocp.relax_stage_threshold;
  opt.abs_gap = 1e-9;
  opt.rel_gap = 1e-9;
  opt.branching = rule;
  // Checks below use 1e-6 on states; the QP must be solved well inside that.
  opt.qp.eps_abs = 1e-8;
  opt.qp.eps_rel = 1e-8;
  return branch_and_bound(ocp.problem, opt);
}

DiscreteRandomVariable random_variable(std::mt19937& rng) {
  std::uniform_int_distribution<int> size(1, 8);
  std::uniform_real_distribution<double> u(0.05, 1.0);
  std::normal_distribution<double> value(0.0, 2.0);
  DiscreteRandomVariable X;
  const int n = size(rng);
  double total = 0.0;
  for (int i = 0; i < n; ++i) {
    // Occasional ties exercise the atom handling.
    X.values.push_back(i > 0 && u(rng) < 0.15 ? X.values.back() : value(rng));
    X.probs.push_back(u(rng));
    total += X.probs.back();
  }
  for (double& p : X.probs) p /= total;
  return X;
}

double random_alpha(std::mt19937& rng) { return 0.05 * std::uniform_int_distribution<int>(1, 20)(rng); }

// Criteria 1 and 2 share their instances.
struct KernelStats {
  double max_rock = 0.0, max_dual = 0.0, seconds = 0.0;
  int overapprox_failures = 0, strict = 0;
};

const KernelStats& kernel_stats() {
  static const KernelStats stats = [] {
    KernelStats s;
    std::mt19937 rng(2024);
    const auto t0 = Clock::now();
    for (int trial = 0; trial < 200; ++trial) {
      const DiscreteRandomVariable X = random_variable(rng);
      const double alpha = random_alpha(rng);
      const double sup = avar_primal_sup(X, alpha);
      const double rock = avar_rockafellar(X, alpha);
      const Eigen::VectorXd C = Eigen::Map<const Eigen::VectorXd>(X.values.data(), X.values.size());
      const double dual = risk_value_dual(avar_conic_rep(X.probs, alpha), C);
      s.max_rock = std::max(s.max_rock, std::abs(rock - sup));
      s.max_dual = std::max(s.max_dual, std::abs(dual - sup));
      const double var = var_value(X, alpha);
      if (sup < var - 1e-12) ++s.overapprox_failures;
      if (sup > var + 1e-9) ++s.strict;
    }
    s.seconds = seconds_since(t0);
    return s;
  }();
  return stats;
}

Outcome criterion1() {
  const KernelStats& s = kernel_stats();
  const bool ok = s.max_rock <= 1e-9 && s.max_dual <= 1e-6 && s.seconds < 10.0;
  return {ok, "200 instances, max |minimisation - sup| " + fmt("%.2e", s.max_rock) + ", max |dual - sup| " +
                  fmt("%.2e", s.max_dual) + ", " + fmt("%.3f", s.seconds) + " s"};
}

Outcome criterion2() {
  const KernelStats& s = kernel_stats();
  return {s.overapprox_failures == 0 && s.strict > 0,
          std::to_string(s.overapprox_failures) + " instances with AV@R < V@R, " + std::to_string(s.strict) +
              " strict"};
}

ScenarioTree random_tree(std::mt19937& rng, const std::vector<int>& branching) {
  std::uniform_real_distribution<double> pv(0.0, 2.0), load(-1.2, -0.4), spread(0.05, 0.6);
  std::vector<double> base_r, base_d;
  for (std::size_t j = 0; j < branching.size(); ++j) {
    base_r.push_back(pv(rng));
    base_d.push_back(load(rng));
  }
  return testsupport::fan_tree(branching, base_r, base_d, spread(rng), 2.0, &rng);
}

Outcome criterion3() {
  const GridSpec g = case_study_grid();
  std::mt19937 rng(77);
  const std::vector<std::vector<int>> shapes{{2}, {3}, {1, 1}, {2, 1}, {1, 2}, {2, 2}, {1, 1, 1}};
  std::uniform_real_distribution<double> x0(0.5, 3.5), u(0.0, 1.0);
  const auto t0 = Clock::now();
  int instances = 0, mismatches = 0, feasible = 0, max_bin = 0;
  double worst = 0.0;
  while (instances < 50) {
    const auto& shape = shapes[std::uniform_int_distribution<std::size_t>(0, shapes.size() - 1)(rng)];
    const ScenarioTree tree = random_tree(rng, shape);
    const Variant v = static_cast<Variant>(std::uniform_int_distribution<int>(0, 2)(rng));
    FormulationOptions opt;
    opt.alpha = random_alpha(rng);
    const ControlInput prev{{0.5}, {0.0}, {1.0}, {u(rng) < 0.5 ? 0.0 : 1.0}};
    const OcpProblem ocp = assemble(v, tree, g, {x0(rng)}, prev, opt);
    const int nb = static_cast<int>(enforced_binaries(ocp.problem, ocp.relax_stage_threshold).size());
    if (nb > 8) continue;
    ++instances;
    max_bin = std::max(max_bin, nb);
    BnBOptions bopt;
    bopt.relax_stage_threshold = ocp.relax_stage_threshold;
    const SolveResult a = branch_and_bound(ocp.problem, bopt);
    const SolveResult b = exhaustive_solve(ocp.problem, bopt);
    const bool a_ok = a.status == SolveStatus::optimal, b_ok = b.status == SolveStatus::optimal;
    if (a_ok != b_ok) {
      ++mismatches;
      continue;
    }
    if (!a_ok) continue;
    ++feasible;
    const double diff = std::abs(a.objective - b.objective);
    worst = std::max(worst, diff);
    if (diff > 1e-5) ++mismatches;
  }
  const double secs = seconds_since(t0);
  return {mismatches == 0 && feasible > 0 && secs < 120.0,
          "50 instances (" + std::to_string(feasible) + " feasible, up to " + std::to_string(max_bin) +
              " binaries), " + std::to_string(mismatches) + " mismatches, max diff " + fmt("%.2e", worst) + ", " +
              fmt("%.1f", secs) + " s"};
}

// Fixed instance for the ordering criteria: three branches, then two.
ScenarioTree ordering_tree() {
  std::mt19937 rng(17);
  return testsupport::fan_tree({3, 2}, {1.4, 1.6}, {-0.9, -0.8}, 0.5, 2.0, &rng);
}

bool stagewise_chance_ok(const OcpProblem& ocp, const DecodedSolution& sol, double alpha) {
  for (int j = 1; j <= ocp.tree.horizon(); ++j) {
    for (BoundSide side : {BoundSide::upper, BoundSide::lower}) {
      DiscreteRandomVariable X;
      for (int i : ocp.tree.nodes_at(j)) {
        X.values.push_back(soft_margin(ocp.spec, 0, side, sol.nodes[i].x[0]));
        X.probs.push_back(ocp.tree.probability(i));
      }
      if (var_value(X, alpha) > 1e-6) return false;
    }
  }
  return true;
}

Outcome criterion4() {
  const GridSpec g = case_study_grid();
  const ScenarioTree tree = ordering_tree();
  bool ok = true;
  std::ostringstream d;
  for (double alpha : {0.1, 0.2, 0.5}) {
    FormulationOptions opt;
    opt.alpha = alpha;
    const OcpProblem cc = assemble(Variant::chance, tree, g, {2.9}, kPrevOn, opt);
    const OcpProblem rc = assemble(Variant::risk, tree, g, {2.9}, kPrevOn, opt);
    const SolveResult a = solve_exact(cc), b = solve_exact(rc);
    if (a.status != SolveStatus::optimal || b.status != SolveStatus::optimal) {
      ok = false;
      d << " alpha " << alpha << ": not solved;";
      continue;
    }
    const bool order = a.objective <= b.objective + 1e-6;
    const bool chance = stagewise_chance_ok(rc, decode(rc, b.z), alpha);
    ok = ok && order && chance;
    d << " alpha " << alpha << ": cc " << fmt("%.6f", a.objective) << " <= rc " << fmt("%.6f", b.objective)
      << (order ? "" : " VIOLATED") << (chance ? "" : ", V@R check failed") << ";";
  }
  return {ok, d.str()};
}

Outcome criterion5() {
  const GridSpec g = case_study_grid();
  const ScenarioTree tree = ordering_tree();
  bool ok = true;
  std::ostringstream d;
  for (Variant v : {Variant::chance, Variant::risk}) {
    double prev = INFINITY;
    d << ' ' << to_string(v) << ':';
    for (double alpha : {0.05, 0.1, 0.2, 0.5, 1.0}) {
      FormulationOptions opt;
      opt.alpha = alpha;
      const SolveResult r = solve_exact(assemble(v, tree, g, {2.9}, kPrevOn, opt));
      if (r.status != SolveStatus::optimal) {
        ok = false;
        d << " unsolved";
        continue;
      }
      if (r.objective > prev + 1e-6) ok = false;
      prev = r.objective;
      d << ' ' << fmt("%.6f", r.objective);
    }
    d << ';';
  }
  return {ok, d.str()};
}

Outcome criterion6(const RunConfig& base) {
  RunConfig c = base;
  c.variant = Variant::risk;
  c.alpha = 0.5;
  c.horizon = 8;
  c.branching = {2, 2};
  c.steps = 96;
  const SimulationSetup setup = simulation_setup(c);
  const SimulationTrace trace = closed_loop(setup);
  const Metrics m = metrics(trace, c.grid);

  // Conventional unit off in the four highest-PV steps of each day.
  const int day = c.profile.period();
  int off = 0, counted = 0;
  for (int start = 0; start + day <= static_cast<int>(trace.rows.size()); start += day) {
    std::vector<int> idx(day);
    for (int i = 0; i < day; ++i) idx[i] = start + i;
    auto pv = [&](int k) {
      double s = 0.0;
      for (double w : trace.rows[k].w.w_r) s += w;
      return s;
    };
    std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) { return pv(a) > pv(b); });
    for (int i = 0; i < 4; ++i) {
      ++counted;
      bool all_off = true;
      for (double d : trace.rows[idx[i]].v.delta) all_off = all_off && d == 0.0;
      off += all_off;
    }
  }
  // Storage charges while the sun is up: net energy gain over daylight steps.
  double daylight_gain = 0.0;
  for (const auto& r : trace.rows)
    if (c.profile.pv_shape[r.k % day] > 0.0)
      for (double p : r.p_s) daylight_gain -= c.grid.T_s * p;

  const double share_off = counted ? static_cast<double>(off) / counted : 0.0;
  const bool ok = m.steps == 96 && m.mean_solve_time_s < 2.0 && m.max_balance_residual <= 1e-8 &&
                  m.energy_bookkeeping_error <= 1e-9 && counted > 0 && share_off >= 0.8 && daylight_gain > 0.0;
  return {ok, "mean solve " + fmt("%.3f", m.mean_solve_time_s) + " s/step (max " + fmt("%.2f", m.max_solve_time_s) +
                  "), balance residual " + fmt("%.1e", m.max_balance_residual) + ", bookkeeping error " +
                  fmt("%.1e", m.energy_bookkeeping_error) + ", unit off in " + std::to_string(off) + "/" +
                  std::to_string(counted) + " top-PV steps, daylight storage gain " + fmt("%.2f", daylight_gain) +
                  " pu*h, " + std::to_string(m.infeasible_steps) + " unsolved steps, avg cost " +
                  fmt("%.3f", m.average_cost)};
}

Outcome criterion7() {
  const GridSpec g = case_study_grid();
  std::mt19937 rng(5);
  const std::vector<std::vector<int>> shapes{{2}, {3}, {2, 1}, {2, 2}, {3, 1, 1}};
  std::uniform_real_distribution<double> x0(1.2, 2.8);
  int solved = 0;
  double worst = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    const ScenarioTree tree = random_tree(rng, shapes[trial % shapes.size()]);
    FormulationOptions opt;
    opt.alpha = 0.0;
    const OcpProblem ocp = assemble(Variant::chance, tree, g, {x0(rng)}, kPrevOn, opt);
    const SolveResult r = solve_exact(ocp, BranchingRule::earliest_stage);
    if (!r.has_solution()) continue;
    ++solved;
    const DecodedSolution sol = decode(ocp, r.z);
    for (int i = 1; i < tree.node_count(); ++i)
      for (int s = 0; s < g.n_s; ++s)
        worst = std::max({worst, g.x_soft_min[s] - sol.nodes[i].x[s], sol.nodes[i].x[s] - g.x_soft_max[s]});
  }
  return {solved > 0 && worst <= 1e-6, std::to_string(solved) + "/20 instances solved, largest excursion " +
                                           fmt("%.2e", std::max(worst, 0.0)) + " pu*h"};
}

Outcome criterion8() {
  const GridSpec g = case_study_grid();
  std::mt19937 rng(8);
  double worst = 0.0;
  int replays = 0;
  for (int trial = 0; trial < 12; ++trial) {
    const ScenarioTree tree = random_tree(rng, {3, 2});
    FormulationOptions opt;
    opt.alpha = 0.3;
    const Variant v = static_cast<Variant>(trial % 3);
    const OcpProblem ocp = assemble(v, tree, g, {2.0}, kPrevOn, opt);
    const SolveResult r = solve_exact(ocp, BranchingRule::earliest_stage);
    if (!r.has_solution()) continue;
    const DecodedSolution sol = decode(ocp, r.z);
    ControlInput v0 = sol.nodes[0].v;
    for (double& d : v0.delta) d = d >= 0.5 ? 1.0 : 0.0;
    for (int c : tree.children_of(0)) {
      const PlantResult p = plant_step(g, v0, tree.disturbance(c), sol.nodes[0].x);
      const NodeSolution& n = sol.nodes[c];
      for (std::size_t k = 0; k < p.p_t.size(); ++k) worst = std::max(worst, std::abs(p.p_t[k] - n.p_t[k]));
      for (std::size_t k = 0; k < p.p_s.size(); ++k) worst = std::max(worst, std::abs(p.p_s[k] - n.p_s[k]));
      for (std::size_t k = 0; k < p.p_r.size(); ++k) worst = std::max(worst, std::abs(p.p_r[k] - n.p_r[k]));
      ++replays;
    }
  }
  return {replays > 0 && worst <= 1e-6,
          std::to_string(replays) + " stage-1 replays, max power difference " + fmt("%.2e", worst)};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Relative path -> contents of every file below `root`.
std::vector<std::pair<std::string, std::string>> snapshot(const fs::path& root) {
  std::vector<std::pair<std::string, std::string>> files;
  for (const auto& e : fs::recursive_directory_iterator(root))
    if (e.is_regular_file()) files.emplace_back(fs::relative(e.path(), root).string(), slurp(e.path()));
  std::sort(files.begin(), files.end());
  return files;
}

Outcome criterion9(const std::string& cli, const std::string& config) {
  const fs::path work = fs::temp_directory_path() / "mgmpc_acceptance_determinism";
  fs::remove_all(work);
  fs::create_directories(work);
  const std::vector<std::pair<std::string, std::string>> commands{
      {"solve", "solve --horizon 8"},
      {"simulate", "simulate --steps 6"},
      {"compare", "compare --steps 3 --horizon 4 --variant chance --variant risk --alpha 0.1 --alpha 0.5"},
  };
  bool ok = true;
  std::ostringstream d;
  for (const auto& [name, args] : commands) {
    std::vector<std::vector<std::pair<std::string, std::string>>> runs;
    std::vector<std::string> stderr_texts;
    for (int run = 0; run < 2; ++run) {
      const fs::path out = work / (name + std::to_string(run));
      const fs::path err = work / (name + std::to_string(run) + ".stderr");
      const std::string cmd = "\"" + cli + "\" " + args + " --config \"" + config + "\" --seed 11 --no-timing --out \"" +
                              out.string() + "\" > /dev/null 2> \"" + err.string() + "\"";
      const int rc = std::system(cmd.c_str());
      if (rc != 0) {
        ok = false;
        d << ' ' << name << ": exit status " << rc << ';';
      }
      runs.push_back(fs::exists(out) ? snapshot(out) : decltype(snapshot(out)){});
      stderr_texts.push_back(slurp(err));
    }
    const bool same = !runs[0].empty() && runs[0] == runs[1] && stderr_texts[0] == stderr_texts[1];
    ok = ok && same;
    d << ' ' << name << ": " << runs[0].size() << " files " << (same ? "identical" : "DIFFER") << ';';
  }
  fs::remove_all(work);
  return {ok, d.str()};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria"};
  std::string cli_path, config_path;
  std::vector<int> only;
  app.add_option("--cli", cli_path, "Path to the mgmpc executable")->required();
  app.add_option("--config", config_path, "Case-study config")->required()->check(CLI::ExistingFile);
  app.add_option("--only", only, "Run only these criteria")->delimiter(',');
  CLI11_PARSE(app, argc, argv);

  const RunConfig base = load_config(config_path);
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"risk-kernel agreement", criterion1},
      {"AV@R over-approximates V@R", criterion2},
      {"branch-and-bound exactness", criterion3},
      {"chance optimum below risk optimum", criterion4},
      {"cost non-increasing in alpha", criterion5},
      {"closed-loop case study", [&] { return criterion6(base); }},
      {"alpha = 0 keeps predicted states inside the soft bounds", criterion7},
      {"plant replay matches the optimizer", criterion8},
      {"CLI determinism", [&] { return criterion9(cli_path, fs::absolute(config_path).string()); }},
  };
  const std::set<int> selected(only.begin(), only.end());
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i) + 1;
    if (!selected.empty() && !selected.count(id)) continue;
    Outcome o;
    const auto t0 = Clock::now();
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failures += !o.pass;
    const std::string detail = o.detail.substr(std::min(o.detail.find_first_not_of(' '), o.detail.size()));
    std::cout << (o.pass ? "PASS" : "FAIL") << " criterion " << id << " (" << criteria[i].first << "): " << detail
              << " [" << fmt("%.1f", seconds_since(t0)) << " s]" << std::endl;
  }
  return failures == 0 ? 0 : 1;
}
