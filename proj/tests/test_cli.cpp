#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "json.hpp"
#include "mgmpc/cli.hpp"

using namespace mgmpc;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code;
  std::string out, err;
};

Run cli(std::vector<std::string> args) {
  args.insert(args.begin(), "mgmpc");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Scratch directory removed on scope exit.
struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / ("mgmpc_cli_" + name)) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string config(const std::string& name, const json& doc) const {
    std::ofstream(path / name) << doc.dump(2);
    return (path / name).string();
  }
};

std::vector<json> diagnostics(const std::string& err) {
  std::vector<json> out;
  std::istringstream in(err);
  for (std::string line; std::getline(in, line);) out.push_back(json::parse(line));
  return out;
}

}  // namespace

TEST_CASE("solve on a chain tree with hard bounds") {
  TempDir t("solve");
  const auto cfg = t.config("run.json", {{"variant", "hard"}, {"branching", {1}}, {"horizon", 4}});
  const Run r = cli({"solve", "--config", cfg, "--out", (t.path / "o").string()});
  CHECK(r.code == exit_ok);
  const json sol = json::parse(slurp(t.path / "o" / "solution.json"));
  CHECK(sol["status"] == "optimal");
  CHECK(sol["nodes"].size() == 5);
  CHECK(sol["stats"].contains("solve_time_s"));
  CHECK(fs::file_size(t.path / "o" / "problem.txt") > 0);
}

TEST_CASE("config errors exit 1 with JSON-line diagnostics") {
  TempDir t("errors");
  const Run no_alpha = cli({"solve", "--config", t.config("a.json", {{"variant", "chance"}})});
  CHECK(no_alpha.code == exit_bad_input);
  const auto d = diagnostics(no_alpha.err);
  REQUIRE(d.size() == 1);
  CHECK(d[0]["level"] == "error");
  CHECK(d[0]["key"] == "alpha");
  CHECK(d[0].contains("line"));

  const Run bad_x0 = cli({"solve", "--config", t.config("b.json", {{"alpha", 0.5}, {"x0", {4.5}}})});
  CHECK(bad_x0.code == exit_bad_input);
  CHECK(diagnostics(bad_x0.err)[0]["key"] == "x0");

  CHECK(cli({"solve", "--config", (t.path / "missing.json").string()}).code == exit_bad_input);
  CHECK(cli({"solve"}).code == exit_bad_input);
  CHECK(cli({"frobnicate", "--config", "x"}).code == exit_bad_input);
  const auto cfg = t.config("c.json", {{"alpha", 0.5}});
  CHECK(cli({"solve", "--config", cfg, "--variant", "robust"}).code == exit_bad_input);
  CHECK(cli({"solve", "--config", cfg, "--alpha", "0.1", "--alpha", "0.2"}).code == exit_bad_input);
  CHECK(cli({"simulate", "--config", cfg, "--steps", "0"}).code == exit_bad_input);
}

TEST_CASE("unreachable hard bounds exit 2") {
  TempDir t("infeasible");
  // One half-hour step cannot lift an empty store above the soft minimum.
  const auto cfg = t.config("run.json", {{"variant", "hard"}, {"x0", {0.0}}, {"horizon", 1}, {"branching", {1}}});
  const Run r = cli({"solve", "--config", cfg, "--out", (t.path / "o").string()});
  CHECK(r.code == exit_infeasible);
  CHECK(json::parse(slurp(t.path / "o" / "solution.json"))["status"] == "infeasible");
}

TEST_CASE("simulate writes a trace and a report") {
  TempDir t("simulate");
  const auto cfg = t.config("run.json", {{"alpha", 0.5}, {"horizon", 4}});
  const Run r = cli({"simulate", "--config", cfg, "--steps", "1", "--out", (t.path / "o").string()});
  REQUIRE(r.code == exit_ok);
  std::istringstream csv(slurp(t.path / "o" / "trace.csv"));
  std::vector<std::string> lines;
  for (std::string l; std::getline(csv, l);) lines.push_back(l);
  CHECK(lines.size() == 2);
  const json report = json::parse(slurp(t.path / "o" / "report.json"));
  for (const char* key : {"average_cost", "renewable_share_pct", "violation_count", "switching_actions",
                          "mean_solve_time_s", "max_solve_time_s"})
    CHECK(report["metrics"].contains(key));
}

TEST_CASE("same seed, same bytes") {
  TempDir t("determinism");
  const auto cfg = t.config("run.json", {{"alpha", 0.5}, {"horizon", 4}, {"steps", 3}});
  for (const char* cmd : {"solve", "simulate"}) {
    const std::string a = (t.path / (std::string(cmd) + "_a")).string();
    const std::string b = (t.path / (std::string(cmd) + "_b")).string();
    REQUIRE(cli({cmd, "--config", cfg, "--seed", "5", "--out", a, "--no-timing"}).code == exit_ok);
    REQUIRE(cli({cmd, "--config", cfg, "--seed", "5", "--out", b, "--no-timing"}).code == exit_ok);
    for (const auto& entry : fs::directory_iterator(a))
      CHECK(slurp(entry.path()) == slurp(fs::path(b) / entry.path().filename()));
  }
  const std::string c = (t.path / "other_seed").string();
  REQUIRE(cli({"simulate", "--config", cfg, "--seed", "6", "--out", c, "--no-timing"}).code == exit_ok);
  CHECK(slurp(fs::path(c) / "trace.csv") != slurp(t.path / "simulate_a" / "trace.csv"));
}

TEST_CASE("compare table shape") {
  TempDir t("compare");
  const auto cfg = t.config("run.json", {{"alpha", 0.5}, {"horizon", 2}, {"steps", 1}});
  const std::string out = (t.path / "o").string();
  const Run r = cli({"compare", "--config", cfg, "--variant", "chance", "--variant", "risk", "--alpha", "0.1",
                     "--alpha", "0.2", "--alpha", "0.5", "--out", out, "--no-timing"});
  REQUIRE(r.code == exit_ok);
  const json table = json::parse(slurp(fs::path(out) / "compare.json"));
  REQUIRE(table["rows"].size() == 6);
  CHECK(table["rows"][0]["label"] == "Chance-constr., alpha=0.1");
  CHECK(table["rows"][5]["label"] == "Risk-constr., alpha=0.5");
  for (const auto& row : table["rows"]) CHECK(fs::exists(fs::path(out) / row["directory"].get<std::string>() / "trace.csv"));

  const std::string single = (t.path / "single").string();
  REQUIRE(cli({"compare", "--config", cfg, "--out", single}).code == exit_ok);
  CHECK(json::parse(slurp(fs::path(single) / "compare.json"))["rows"].size() == 1);
}

TEST_CASE("the shipped example config is valid") {
  const RunConfig c = load_config(fs::path(MGMPC_CONFIG_DIR) / "case_study.json");
  CHECK(c.variant == Variant::risk);
  CHECK(c.alpha == 0.5);
  CHECK(c.grid == case_study_grid());
}
