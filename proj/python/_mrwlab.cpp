#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "mrwlab/error.hpp"
#include "mrwlab/ladder_sim.hpp"
#include "mrwlab/ladder_theory.hpp"
#include "mrwlab/reports.hpp"
#include "mrwlab/wiener_hopf.hpp"

namespace py = pybind11;
using namespace mrwlab;

namespace {

nlohmann::json parse(const std::string& text) {
  try {
    return text.empty() ? nlohmann::json::object() : nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(std::string("invalid JSON: ") + e.what());
  }
}

TruncationOptions truncation(std::int64_t depth, double tol, std::int64_t max_depth) {
  TruncationOptions o;
  o.initial_depth = depth;
  o.tol = tol;
  o.max_depth = max_depth;
  return o;
}

py::dict kernel_dict(const LadderKernelResult& k) {
  py::dict d;
  d["direction"] = to_string(k.direction);
  d["depth"] = k.truncation_depth;
  d["converged"] = k.converged;
  d["row_defect"] = k.row_defect;
  d["row_mass"] = k.row_mass();
  d["return_bound"] = k.return_bound;
  d["kernel_json"] = to_json(k.kernel).dump();
  return d;
}

}  // namespace

PYBIND11_MODULE(_mrwlab, m) {
  m.doc() = "Ladder variables of Markov random walks";

  static py::exception<Error> base(m, "MrwError");
  static py::exception<ConfigError> config_exc(m, "ConfigError", base.ptr());
  static py::exception<ModelError> model_exc(m, "ModelError", base.ptr());
  static py::exception<NonConvergenceError> nc_exc(m, "NonConvergenceError", base.ptr());
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const ConfigError& e) {
      py::set_error(config_exc, e.what());
    } catch (const ModelError& e) {
      py::set_error(model_exc, e.what());
    } catch (const NonConvergenceError& e) {
      py::set_error(nc_exc, e.what());
    } catch (const Error& e) {
      py::set_error(base, e.what());
    }
  });

  py::class_<MRWSpec>(m, "Model")
      .def_property_readonly("states", &MRWSpec::state_names)
      .def_property_readonly("transition", &MRWSpec::transition)
      .def_property_readonly("lattice_span", &MRWSpec::lattice_span)
      .def("__len__", &MRWSpec::size)
      .def("index_of", &MRWSpec::index_of)
      .def("to_json", [](const MRWSpec& s) { return to_json(s).dump(); });

  m.def("model_zoo",
        [](const std::string& name, const std::string& params) {
          return model_zoo(name, parse(params));
        },
        py::arg("name"), py::arg("params") = "{}");
  m.def("model_from_json",
        [](const std::string& text) { return validate_spec(raw_model_from_json(parse(text))); },
        py::arg("text"));

  m.def("stationary", [](const MRWSpec& s) { return stationary_distribution(s).pi; });
  m.def("drift",
        [](const MRWSpec& s) { return stationary_drift(s, stationary_distribution(s)).mu; });
  m.def("dual", [](const MRWSpec& s) { return build_dual(s, stationary_distribution(s)); });

  m.def("simulate_ladder",
        [](const MRWSpec& s, std::size_t initial, std::size_t n_steps, std::uint64_t seed) {
          const PathSample path = simulate_path(s, initial, n_steps, seed);
          const LadderExtraction asc = extract_strict_ascending(path);
          py::dict d;
          d["states"] = path.states;
          d["partial_sums"] = path.partial_sums;
          d["epochs"] = asc.epochs;
          d["ladder_states"] = asc.states;
          d["heights"] = asc.heights;
          d["maximality"] = ladder_maximality_holds(path, asc);
          return d;
        },
        py::arg("model"), py::arg("initial_state"), py::arg("n_steps"), py::arg("seed"));

  m.def("ascending_kernel",
        [](const MRWSpec& s, std::int64_t depth, double tol, std::int64_t max_depth) {
          return kernel_dict(strict_ascending_kernel(s, truncation(depth, tol, max_depth)));
        },
        py::arg("model"), py::arg("K") = 0, py::arg("tol") = 1e-10,
        py::arg("K_max") = std::int64_t{1} << 14);
  m.def("descending_kernel",
        [](const MRWSpec& dual, std::int64_t depth, double tol, std::int64_t max_depth) {
          return kernel_dict(weak_descending_kernel(dual, truncation(depth, tol, max_depth)));
        },
        py::arg("dual"), py::arg("K") = 0, py::arg("tol") = 1e-10,
        py::arg("K_max") = std::int64_t{1} << 14);
  m.def("escape_probabilities",
        [](const MRWSpec& dual) {
          const EscapeProbabilities e = escape_probabilities(dual);
          return py::make_tuple(e.lower, e.upper);
        },
        py::arg("dual"));

  m.def("exact_pipeline",
        [](const MRWSpec& s, bool assume_dual_divergence) {
          ExactOptions o;
          o.assume_dual_divergence = assume_dual_divergence;
          const ExactPipeline ex = run_exact_pipeline(s, o);
          py::dict d;
          d["c"] = ex.exact.c;
          d["c_bracket"] = py::make_tuple(ex.exact.c_lower, ex.exact.c_upper);
          d["pi_ladder"] = ex.exact.pi_ladder;
          d["pi_ladder_nullvector"] = ex.nullvector.ladder.pi_ladder;
          d["support"] = ex.exact.support;
          d["factorization_residual"] = ex.factorization.max_entry_total_variation;
          d["mass_residual"] = ex.factorization.mass_residual;
          d["expected_epoch"] = ex.expected.truncated_mean;
          d["nu"] = ex.nu.nu;
          return d;
        },
        py::arg("model"), py::arg("assume_dual_divergence") = false);

  m.def("flower_min_tail_probability",
        [](std::size_t horizon, double depth, double ratio) {
          return flower_min_tail_probability(FlowerWeights{ratio}, horizon, depth);
        },
        py::arg("N"), py::arg("B"), py::arg("ratio") = 0.5);

  // Returns (exit_code, report JSON text, summary). Configuration errors are
  // reported through the exit code like the CLI does.
  m.def("run_command",
        [](const std::string& command, const std::string& config, const std::string& base_dir) {
          ReportBundle b;
          try {
            b = run_command(command, parse_run_config(parse(config), base_dir));
          } catch (const Error& e) {
            b.exit_code = exit_code_for(e.kind());
            b.report = {{"command", command}, {"status", "error"}, {"exit_code", b.exit_code},
                        {"error", {{"kind", "config"}, {"message", e.what()}}}};
            if (e.kind() == ErrorKind::kModel) b.report["error"]["kind"] = "model";
            b.summary = std::string("error: ") + e.what() + "\n";
          }
          return py::make_tuple(b.exit_code, b.report.dump(), b.summary);
        },
        py::arg("command"), py::arg("config"), py::arg("base_dir") = "");
}
