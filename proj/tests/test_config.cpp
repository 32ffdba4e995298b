#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "mgmpc/config.hpp"

using namespace mgmpc;

namespace {

std::vector<std::string> keys_of(const ConfigError& e) {
  std::vector<std::string> keys;
  for (const auto& i : e.issues()) keys.push_back(i.key);
  return keys;
}

// Issues raised by parsing `text`; empty when it parses.
std::vector<ConfigIssue> issues_of(const std::string& text) {
  try {
    parse_config(text);
  } catch (const ConfigError& e) {
    return e.issues();
  }
  return {};
}

}  // namespace

TEST_CASE("defaults describe the case study") {
  const RunConfig c = parse_config(R"({"alpha": 0.5})");
  CHECK(c.variant == Variant::risk);
  CHECK(c.horizon == 8);
  CHECK(full_branching(c) == std::vector<int>{2, 2, 1, 1, 1, 1, 1, 1});
  CHECK(c.steps == 96);
  CHECK(c.grid == case_study_grid());
  CHECK(c.solver.branching == BranchingRule::earliest_stage);
}

TEST_CASE("parse, serialize, parse is the identity") {
  RunConfig c = parse_config(R"({"variant": "chance", "alpha": 0.2, "horizon": 4, "branching": [3],
                                 "steps": 7, "seed": 99, "x0": [2.5], "sides": ["lower"],
                                 "previous_input": {"u_t": [0.5], "u_s": [0], "u_r": [1], "delta": [1]},
                                 "profile": {"phi": 0.5, "sigma_pv": 0.1},
                                 "solver": {"rel_gap": 1e-3, "branching": "most_fractional"}})");
  const std::string once = config_to_json(c).dump();
  const RunConfig again = parse_config(once);
  CHECK(again == c);
  CHECK(config_to_json(again).dump() == once);

  const RunConfig d = parse_config(config_to_json(RunConfig{}).dump());
  CHECK(d == RunConfig{});
}

TEST_CASE("grid from a file relative to the config") {
  const auto dir = std::filesystem::temp_directory_path() / "mgmpc_config_test";
  std::filesystem::create_directories(dir);
  {
    std::ofstream(dir / "grid.json") << grid_to_json(case_study_grid()).dump();
    std::ofstream(dir / "run.json") << R"({"grid_file": "grid.json", "variant": "hard"})";
  }
  const RunConfig c = load_config(dir / "run.json");
  CHECK(c.grid == case_study_grid());
  CHECK(c.grid_file == "grid.json");
  const RunConfig again = parse_config(config_to_json(c).dump(), dir);
  CHECK(again == c);
  std::filesystem::remove_all(dir);
}

TEST_CASE("missing alpha is an error for chance and risk only") {
  CHECK(issues_of(R"({"variant": "hard"})").empty());
  const auto issues = issues_of(R"({"variant": "chance"})");
  REQUIRE(issues.size() == 1);
  CHECK(issues[0].key == "alpha");
  CHECK_FALSE(issues_of(R"({"variant": "risk"})").empty());
}

TEST_CASE("semantic errors carry key and line") {
  const std::string text = "{\n  \"alpha\": 0.5,\n  \"x0\": [7.0],\n  \"steps\": 0\n}";
  try {
    parse_config(text);
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    const auto keys = keys_of(e);
    CHECK(std::count(keys.begin(), keys.end(), "x0") == 1);
    CHECK(std::count(keys.begin(), keys.end(), "steps") == 1);
    for (const auto& i : e.issues()) {
      if (i.key == "x0") CHECK(i.line == 3);
      if (i.key == "steps") CHECK(i.line == 4);
    }
  }
}

TEST_CASE("structural errors") {
  auto first_key = [](const std::string& t) {
    const auto i = issues_of(t);
    return i.empty() ? std::string("<none>") : i[0].key;
  };
  CHECK(first_key(R"({"alpha": 0.5, "colour": 1})") == "colour");
  CHECK(first_key(R"({"alpha": 0.5, "solver": {"gap": 1}})") == "solver.gap");
  CHECK(first_key(R"({"alpha": "half"})") == "alpha");
  CHECK(first_key(R"({"variant": "robust", "alpha": 0.5})") == "variant");
  CHECK(first_key(R"({"alpha": 0.5, "grid": "other"})") == "grid");
  CHECK(first_key(R"({"alpha": 0.5, "grid_file": "/nonexistent/grid.json"})") == "grid_file");
  CHECK(first_key(R"({"alpha": 1.5})") == "alpha");
  CHECK(first_key(R"({"alpha": 0.5, "horizon": 0})") == "horizon");
  CHECK(first_key(R"({"alpha": 0.5, "solver": {"branching": "random"}})") == "solver.branching");

  const auto bad_json = issues_of("{\n  \"alpha\": 0.5,\n  oops\n}");
  REQUIRE(bad_json.size() == 1);
  CHECK(bad_json[0].line == 3);
  CHECK_FALSE(issues_of("[1, 2]").empty());
}

TEST_CASE("simulation setup carries the solver options") {
  const RunConfig c = parse_config(R"({"alpha": 0.2, "steps": 5, "seed": 3,
                                      "solver": {"rel_gap": 0.01, "max_nodes": 50, "branching": "most_fractional"}})");
  const SimulationSetup s = simulation_setup(c);
  CHECK(s.steps == 5);
  CHECK(s.seed == 3);
  CHECK(s.controller.alpha == doctest::Approx(0.2));
  CHECK(s.controller.bnb.rel_gap == doctest::Approx(0.01));
  CHECK(s.controller.bnb.max_nodes == 50);
  CHECK(s.controller.bnb.branching == BranchingRule::most_fractional);
}
