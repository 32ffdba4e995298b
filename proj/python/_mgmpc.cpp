#include <sstream>

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "mgmpc/cli.hpp"
#include "mgmpc/error.hpp"
#include "mgmpc/risk.hpp"

namespace py = pybind11;
using namespace mgmpc;

namespace {

DiscreteRandomVariable rv(std::vector<double> values, std::vector<double> probs) {
  DiscreteRandomVariable X{std::move(values), std::move(probs)};
  X.check();
  return X;
}

RunConfig config_from(const std::string& text, const std::string& base_dir) { return parse_config(text, base_dir); }

std::string issues_text(const ConfigError& e) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& i : e.issues()) out.push_back({{"key", i.key}, {"line", i.line}, {"message", i.message}});
  return out.dump();
}

}  // namespace

PYBIND11_MODULE(_mgmpc, m) {
  m.doc() = "Native core of the mgmpc package; the Python wrappers exchange JSON text with it.";

  static py::exception<ConfigError> config_error(m, "ConfigError", PyExc_ValueError);
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const ConfigError& e) {
      PyErr_SetString(config_error.ptr(), issues_text(e).c_str());
    } catch (const InputError& e) {
      PyErr_SetString(PyExc_ValueError, e.what());
    } catch (const ModelError& e) {
      PyErr_SetString(PyExc_RuntimeError, e.what());
    }
  });

  m.def("var_value", [](std::vector<double> v, std::vector<double> p, double a) { return var_value(rv(v, p), a); });
  m.def("avar", [](std::vector<double> v, std::vector<double> p, double a) { return avar_rockafellar(rv(v, p), a); });
  m.def("avar_primal_sup",
        [](std::vector<double> v, std::vector<double> p, double a) { return avar_primal_sup(rv(v, p), a); });

  m.def("case_study_grid", [] { return grid_to_json(case_study_grid()).dump(); });
  m.def("default_config", [] { return config_to_json(RunConfig{}).dump(); });
  m.def("normalize_config", [](const std::string& text, const std::string& base_dir) {
    return config_to_json(config_from(text, base_dir)).dump();
  });

  m.def(
      "solve",
      [](const std::string& text, const std::string& base_dir) {
        const RunConfig c = config_from(text, base_dir);
        py::gil_scoped_release release;
        const SolveOutcome out = solve_instance(c);
        return solution_to_json(out.ocp, out.result, true).dump();
      },
      py::arg("config"), py::arg("base_dir") = "");

  m.def(
      "simulate",
      [](const std::string& text, const std::string& base_dir, bool timing) {
        const RunConfig c = config_from(text, base_dir);
        py::gil_scoped_release release;
        const SimulationTrace trace = closed_loop(simulation_setup(c));
        std::ostringstream csv;
        write_trace_csv(csv, trace, timing);
        return std::make_pair(metrics_to_json(metrics(trace, c.grid), timing).dump(), csv.str());
      },
      py::arg("config"), py::arg("base_dir") = "", py::arg("timing") = true);

  m.def("run_cli", [](std::vector<std::string> args) {
    args.insert(args.begin(), "mgmpc");
    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    std::ostringstream out, err;
    int code = 0;
    {
      py::gil_scoped_release release;
      code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
    }
    return py::make_tuple(code, out.str(), err.str());
  });
}
