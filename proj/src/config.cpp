#include "mgmpc/config.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include "mgmpc/error.hpp"

namespace mgmpc {

namespace {

using nlohmann::json;

std::string join_messages(const std::vector<ConfigIssue>& issues) {
  std::string out;
  for (const auto& i : issues) {
    if (!out.empty()) out += "; ";
    out += i.key.empty() ? i.message : i.key + ": " + i.message;
  }
  return out;
}

// Line of the first occurrence of "key" in the source; good enough to point
// an editor at the right place.
int line_of_key(const std::string& text, const std::string& dotted) {
  if (text.empty() || dotted.empty()) return 0;
  const std::string leaf = dotted.substr(dotted.rfind('.') + 1);
  const std::string bare = leaf.substr(0, leaf.find('['));
  const auto pos = text.find('"' + bare + '"');
  if (pos == std::string::npos) return 0;
  return 1 + static_cast<int>(std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(pos), '\n'));
}

int line_of_byte(const std::string& text, std::size_t byte) {
  byte = std::min(byte, text.size());
  return 1 + static_cast<int>(std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(byte), '\n'));
}

const std::set<std::string> kTopKeys{"grid",          "grid_file",  "variant", "alpha",   "horizon",
                                     "branching",     "steps",      "seed",    "x0",      "start_slot",
                                     "previous_input", "samples",   "relax_stage_threshold", "sides",
                                     "warm_start",    "profile",    "solver",  "output_dir"};
const std::set<std::string> kProfileKeys{"phi", "sigma_pv", "sigma_load", "pv_shape", "load_shape"};
const std::set<std::string> kSolverKeys{"abs_gap", "rel_gap", "max_nodes", "node_max_iter", "qp_max_iter", "qp_eps", "branching"};
const std::set<std::string> kInputKeys{"u_t", "u_s", "u_r", "delta"};

class Reader {
 public:
  explicit Reader(std::vector<ConfigIssue>& issues) : issues_(issues) {}

  void unknown_keys(const json& obj, const std::set<std::string>& allowed, const std::string& prefix) {
    for (const auto& [k, v] : obj.items())
      if (!allowed.count(k)) fail(prefix + k, "unknown key");
  }

  template <class T>
  void read(const json& obj, const std::string& key, const std::string& path, T& out) {
    if (!obj.contains(key)) return;
    try {
      out = obj.at(key).get<T>();
    } catch (const json::exception&) {
      fail(path, "has the wrong type");
    }
  }

  void fail(const std::string& key, const std::string& message) { issues_.push_back({key, 0, message}); }

 private:
  std::vector<ConfigIssue>& issues_;
};

ControlInput input_from_json(const json& j, Reader& r) {
  ControlInput v;
  r.unknown_keys(j, kInputKeys, "previous_input.");
  r.read(j, "u_t", "previous_input.u_t", v.u_t);
  r.read(j, "u_s", "previous_input.u_s", v.u_s);
  r.read(j, "u_r", "previous_input.u_r", v.u_r);
  r.read(j, "delta", "previous_input.delta", v.delta);
  return v;
}

}  // namespace

ConfigError::ConfigError(std::vector<ConfigIssue> issues)
    : std::runtime_error(join_messages(issues)), issues_(std::move(issues)) {}

std::string to_string(BoundSide side) { return side == BoundSide::upper ? "upper" : "lower"; }

BoundSide bound_side_from_string(const std::string& s) {
  if (s == "upper") return BoundSide::upper;
  if (s == "lower") return BoundSide::lower;
  throw InputError("unknown bound side '" + s + "' (expected upper or lower)");
}

std::string to_string(BranchingRule rule) {
  return rule == BranchingRule::earliest_stage ? "earliest_stage" : "most_fractional";
}

BranchingRule branching_rule_from_string(const std::string& s) {
  if (s == "earliest_stage") return BranchingRule::earliest_stage;
  if (s == "most_fractional") return BranchingRule::most_fractional;
  throw InputError("unknown branching rule '" + s + "'");
}

std::vector<int> full_branching(const RunConfig& c) {
  std::vector<int> b = c.branching;
  if (static_cast<int>(b.size()) < c.horizon) b.resize(static_cast<std::size_t>(c.horizon), 1);
  return b;
}

std::vector<ConfigIssue> validate_config(const RunConfig& c) {
  std::vector<ConfigIssue> out;
  auto fail = [&](const std::string& key, const std::string& msg) { out.push_back({key, 0, msg}); };

  const auto grid_issues = validate_grid(c.grid);
  for (const auto& v : grid_issues) fail("grid." + v.key, v.message);
  if (c.variant != Variant::hard) {
    if (!c.alpha)
      fail("alpha", "required for variant " + to_string(c.variant));
    else if (!(*c.alpha >= 0.0 && *c.alpha <= 1.0))
      fail("alpha", "must lie in [0, 1]");
  } else if (c.alpha && !(*c.alpha >= 0.0 && *c.alpha <= 1.0)) {
    fail("alpha", "must lie in [0, 1]");
  }
  if (c.horizon < 1) fail("horizon", "must be at least 1");
  if (static_cast<int>(c.branching.size()) > c.horizon) fail("branching", "longer than the horizon");
  for (int b : c.branching)
    if (b < 1) fail("branching", "factors must be at least 1");
  if (c.steps < 1) fail("steps", "must be at least 1");
  if (c.samples < 1) fail("samples", "must be at least 1");
  if (c.start_slot < 0) fail("start_slot", "must be nonnegative");
  if (c.relax_stage_threshold < 1) fail("relax_stage_threshold", "must be at least 1");
  if (c.sides.empty()) fail("sides", "needs at least one of upper, lower");

  if (static_cast<int>(c.x0.size()) != c.grid.n_s) {
    fail("x0", "needs one entry per storage unit");
  } else if (grid_issues.empty()) {
    for (int s = 0; s < c.grid.n_s; ++s)
      if (!(c.x0[s] >= c.grid.x_min[s] && c.x0[s] <= c.grid.x_max[s]))
        fail("x0", "outside [x_min, x_max] of storage " + std::to_string(s));
  }
  if (c.previous_input) {
    const auto& v = *c.previous_input;
    if (static_cast<int>(v.u_t.size()) != c.grid.n_t || static_cast<int>(v.delta.size()) != c.grid.n_t ||
        static_cast<int>(v.u_s.size()) != c.grid.n_s || static_cast<int>(v.u_r.size()) != c.grid.n_r)
      fail("previous_input", "dimensions do not match the grid");
    for (double d : v.delta)
      if (d != 0.0 && d != 1.0) fail("previous_input.delta", "entries must be 0 or 1");
  }
  try {
    c.profile.check();
  } catch (const InputError& e) {
    fail("profile", e.what());
  }
  if (!(c.solver.abs_gap >= 0.0)) fail("solver.abs_gap", "must be nonnegative");
  if (!(c.solver.rel_gap >= 0.0)) fail("solver.rel_gap", "must be nonnegative");
  if (c.solver.max_nodes < 1) fail("solver.max_nodes", "must be at least 1");
  if (c.solver.node_max_iter < 1) fail("solver.node_max_iter", "must be at least 1");
  if (c.solver.qp_max_iter < 1) fail("solver.qp_max_iter", "must be at least 1");
  if (!(c.solver.qp_eps > 0.0)) fail("solver.qp_eps", "must be positive");
  if (c.output_dir.empty()) fail("output_dir", "must not be empty");
  return out;
}

RunConfig parse_config(const std::string& text, const std::filesystem::path& base_dir) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError({{"", line_of_byte(text, e.byte > 0 ? e.byte - 1 : 0), e.what()}});
  }
  if (!doc.is_object()) throw ConfigError({{"", 1, "config must be a JSON object"}});

  std::vector<ConfigIssue> issues;
  Reader r(issues);
  RunConfig c;
  c.alpha.reset();
  r.unknown_keys(doc, kTopKeys, "");

  if (doc.contains("grid_file") && doc.contains("grid")) r.fail("grid", "give either grid or grid_file, not both");
  if (doc.contains("grid_file")) {
    r.read(doc, "grid_file", "grid_file", c.grid_file);
    const std::filesystem::path p = std::filesystem::path(c.grid_file).is_absolute()
                                        ? std::filesystem::path(c.grid_file)
                                        : base_dir / c.grid_file;
    std::ifstream in(p);
    if (!in) {
      r.fail("grid_file", "cannot open " + p.string());
    } else {
      try {
        c.grid = grid_from_json(json::parse(in));
      } catch (const std::exception& e) {
        r.fail("grid_file", e.what());
      }
    }
  } else if (doc.contains("grid")) {
    const json& g = doc["grid"];
    if (g.is_string()) {
      if (g.get<std::string>() != "case_study") r.fail("grid", "the only named grid is \"case_study\"");
    } else {
      try {
        c.grid = grid_from_json(g);
      } catch (const std::exception& e) {
        r.fail("grid", e.what());
      }
    }
  }

  if (doc.contains("variant")) {
    std::string v;
    r.read(doc, "variant", "variant", v);
    try {
      c.variant = variant_from_string(v);
    } catch (const std::exception& e) {
      r.fail("variant", e.what());
    }
  }
  if (doc.contains("alpha")) {
    double a = 0.0;
    r.read(doc, "alpha", "alpha", a);
    c.alpha = a;
  }
  r.read(doc, "horizon", "horizon", c.horizon);
  r.read(doc, "branching", "branching", c.branching);
  r.read(doc, "steps", "steps", c.steps);
  r.read(doc, "seed", "seed", c.seed);
  r.read(doc, "x0", "x0", c.x0);
  r.read(doc, "start_slot", "start_slot", c.start_slot);
  if (doc.contains("previous_input")) {
    if (doc["previous_input"].is_object())
      c.previous_input = input_from_json(doc["previous_input"], r);
    else
      r.fail("previous_input", "must be an object");
  }
  r.read(doc, "samples", "samples", c.samples);
  r.read(doc, "relax_stage_threshold", "relax_stage_threshold", c.relax_stage_threshold);
  if (doc.contains("sides")) {
    std::vector<std::string> names;
    r.read(doc, "sides", "sides", names);
    c.sides.clear();
    for (const auto& n : names) {
      try {
        c.sides.push_back(bound_side_from_string(n));
      } catch (const std::exception& e) {
        r.fail("sides", e.what());
      }
    }
  }
  r.read(doc, "warm_start", "warm_start", c.warm_start);
  if (doc.contains("profile")) {
    const json& p = doc["profile"];
    if (!p.is_object()) {
      r.fail("profile", "must be an object");
    } else {
      r.unknown_keys(p, kProfileKeys, "profile.");
      r.read(p, "phi", "profile.phi", c.profile.phi);
      r.read(p, "sigma_pv", "profile.sigma_pv", c.profile.sigma_pv);
      r.read(p, "sigma_load", "profile.sigma_load", c.profile.sigma_load);
      r.read(p, "pv_shape", "profile.pv_shape", c.profile.pv_shape);
      r.read(p, "load_shape", "profile.load_shape", c.profile.load_shape);
    }
  }
  if (doc.contains("solver")) {
    const json& s = doc["solver"];
    if (!s.is_object()) {
      r.fail("solver", "must be an object");
    } else {
      r.unknown_keys(s, kSolverKeys, "solver.");
      r.read(s, "abs_gap", "solver.abs_gap", c.solver.abs_gap);
      r.read(s, "rel_gap", "solver.rel_gap", c.solver.rel_gap);
      r.read(s, "max_nodes", "solver.max_nodes", c.solver.max_nodes);
      r.read(s, "node_max_iter", "solver.node_max_iter", c.solver.node_max_iter);
      r.read(s, "qp_max_iter", "solver.qp_max_iter", c.solver.qp_max_iter);
      r.read(s, "qp_eps", "solver.qp_eps", c.solver.qp_eps);
      if (s.contains("branching")) {
        std::string rule;
        r.read(s, "branching", "solver.branching", rule);
        try {
          c.solver.branching = branching_rule_from_string(rule);
        } catch (const std::exception& e) {
          r.fail("solver.branching", e.what());
        }
      }
    }
  }
  r.read(doc, "output_dir", "output_dir", c.output_dir);

  // Semantic checks only make sense once the document is structurally sound.
  if (issues.empty()) issues = validate_config(c);
  if (!issues.empty()) {
    for (auto& i : issues) i.line = line_of_key(text, i.key);
    throw ConfigError(std::move(issues));
  }
  return c;
}

RunConfig load_config(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw ConfigError({{"", 0, "cannot open config file " + file.string()}});
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), file.parent_path());
}

json config_to_json(const RunConfig& c) {
  json j;
  if (c.grid_file.empty())
    j["grid"] = grid_to_json(c.grid);
  else
    j["grid_file"] = c.grid_file;
  j["variant"] = to_string(c.variant);
  if (c.alpha) j["alpha"] = *c.alpha;
  j["horizon"] = c.horizon;
  j["branching"] = c.branching;
  j["steps"] = c.steps;
  j["seed"] = c.seed;
  j["x0"] = c.x0;
  j["start_slot"] = c.start_slot;
  if (c.previous_input) {
    const auto& v = *c.previous_input;
    j["previous_input"] = {{"u_t", v.u_t}, {"u_s", v.u_s}, {"u_r", v.u_r}, {"delta", v.delta}};
  }
  j["samples"] = c.samples;
  j["relax_stage_threshold"] = c.relax_stage_threshold;
  std::vector<std::string> sides;
  for (BoundSide s : c.sides) sides.push_back(to_string(s));
  j["sides"] = sides;
  j["warm_start"] = c.warm_start;
  j["profile"] = {{"phi", c.profile.phi},
                  {"sigma_pv", c.profile.sigma_pv},
                  {"sigma_load", c.profile.sigma_load},
                  {"pv_shape", c.profile.pv_shape},
                  {"load_shape", c.profile.load_shape}};
  j["solver"] = {{"abs_gap", c.solver.abs_gap},         {"rel_gap", c.solver.rel_gap},
                 {"max_nodes", c.solver.max_nodes},     {"node_max_iter", c.solver.node_max_iter},
                 {"qp_max_iter", c.solver.qp_max_iter}, {"qp_eps", c.solver.qp_eps},
                 {"branching", to_string(c.solver.branching)}};
  j["output_dir"] = c.output_dir;
  return j;
}

SimulationSetup simulation_setup(const RunConfig& c) {
  SimulationSetup s;
  s.spec = c.grid;
  s.profile = c.profile;
  s.controller.variant = c.variant;
  s.controller.alpha = c.alpha.value_or(0.0);
  s.controller.horizon = c.horizon;
  s.controller.branching = c.branching;
  s.controller.n_samples = c.samples;
  s.controller.relax_stage_threshold = c.relax_stage_threshold;
  s.controller.sides = c.sides;
  s.controller.warm_start = c.warm_start;
  BnBOptions& b = s.controller.bnb;
  b.abs_gap = c.solver.abs_gap;
  b.rel_gap = c.solver.rel_gap;
  b.max_nodes = c.solver.max_nodes;
  b.node_max_iter = c.solver.node_max_iter;
  b.qp.max_iter = c.solver.qp_max_iter;
  b.qp.eps_abs = c.solver.qp_eps;
  b.qp.eps_rel = c.solver.qp_eps;
  b.branching = c.solver.branching;
  s.steps = c.steps;
  s.x0 = c.x0;
  if (c.previous_input) s.v_init = *c.previous_input;
  s.seed = c.seed;
  return s;
}

}  // namespace mgmpc
