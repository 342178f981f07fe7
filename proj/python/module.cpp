#include <sstream>

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "vqoe/analytic.hpp"
#include "vqoe/error.hpp"
#include "vqoe/experiment.hpp"
#include "vqoe/flowsim.hpp"
#include "vqoe/inference.hpp"
#include "vqoe/markov.hpp"
#include "vqoe/report.hpp"
#include "vqoe/workload.hpp"

namespace py = pybind11;
using namespace vqoe;

namespace {

// nlohmann documents cross the boundary as JSON text and are decoded with
// the json module on the Python side.
py::object to_py(const report::json& doc) {
  return py::module_::import("json").attr("loads")(doc.dump());
}

std::string csv_text(const report::CsvTable& t) {
  std::ostringstream o;
  report::write_csv(o, t);
  return o.str();
}

experiment::ExperimentConfig config_from(const std::string& text) {
  std::istringstream in(text);
  return experiment::parse_config(in);
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Flow-level video QoE engine";

  static py::exception<Error> base(m, "Error");
  static py::exception<DomainError> domain(m, "DomainError", base.ptr());
  static py::exception<NumericalError> numerical(m, "NumericalError", base.ptr());
  static py::exception<IoError> io(m, "IoError", base.ptr());
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      switch (e.kind()) {
        case ErrorKind::validation: py::set_error(domain, e.what()); break;
        case ErrorKind::numerical: py::set_error(numerical, e.what()); break;
        case ErrorKind::io: py::set_error(io, e.what()); break;
      }
    }
  });

  py::class_<markov::SystemConfig>(m, "SystemConfig")
      .def(py::init<>())
      .def_readwrite("capacity_bps", &markov::SystemConfig::capacity_bps)
      .def_readwrite("max_flows", &markov::SystemConfig::max_flows)
      .def_readwrite("bitrate_bps", &markov::SystemConfig::bitrate_bps)
      .def_readwrite("phi1", &markov::SystemConfig::phi1)
      .def_readwrite("phi2", &markov::SystemConfig::phi2)
      .def_readwrite("lambda1", &markov::SystemConfig::lambda1)
      .def_readwrite("lambda2", &markov::SystemConfig::lambda2)
      .def_readwrite("theta1", &markov::SystemConfig::theta1)
      .def_readwrite("theta2", &markov::SystemConfig::theta2)
      .def_readwrite("startup_threshold", &markov::SystemConfig::startup_threshold)
      .def_readwrite("pd_mode", &markov::SystemConfig::pd_mode)
      .def("offered_load", &markov::SystemConfig::offered_load)
      .def("psi", &markov::SystemConfig::psi, py::arg("k"))
      .def("validate", &markov::SystemConfig::validate);

  m.def("reference_config", &markov::reference_config, py::arg("rho") = 0.96);
  m.def("with_load", &markov::with_load, py::arg("cfg"), py::arg("rho"), py::arg("p1"));

  m.def(
      "generator_mc1",
      [](const markov::SystemConfig& cfg, bool pd_refined) {
        return markov::build_mc1(cfg, pd_refined).generator;
      },
      py::arg("cfg"), py::arg("pd_refined") = false);
  m.def("stationary_distribution", &markov::stationary_distribution, py::arg("generator"));

  m.def(
      "solve_qoe",
      [](const markov::SystemConfig& cfg, bool state_indexed, bool force_integration) {
        analytic::SolverOptions o;
        if (state_indexed) o.boundary = analytic::BoundaryRule::state_indexed;
        o.force_integration = force_integration;
        return to_py(report::to_json(analytic::solve_qoe(cfg, o)));
      },
      py::arg("cfg"), py::arg("state_indexed") = false, py::arg("force_integration") = false,
      "Starvation probability and mean DT/VT for both tagged classes, as a dict.");

  m.def(
      "simulate",
      [](const markov::SystemConfig& cfg, const std::string& mode, long target_flows,
         std::uint64_t seed, int replicas) {
        flowsim::SimConfig s;
        s.system = cfg;
        s.mode = flowsim::parse_mode(mode);
        s.target_flows = target_flows;
        s.seed = seed;
        return to_py(report::to_json(flowsim::run_replicas(s, replicas)));
      },
      py::arg("cfg"), py::arg("mode") = "basic", py::arg("target_flows") = 100000,
      py::arg("seed") = 1, py::arg("replicas") = 1);

  m.def(
      "fit_viewing_times",
      [](const std::vector<double>& samples) {
        return to_py(report::to_json(workload::compare_fits(samples)));
      },
      py::arg("samples"), "Fit all three families and rank them by adjusted R^2.");
  m.def(
      "sample_hyperexp",
      [](double p1, double mean1, double mean2, long n, std::uint64_t seed) {
        const auto p = workload::HyperExpParams::from_means(p1, mean1, mean2);
        Rng rng(seed);
        std::vector<double> out(static_cast<std::size_t>(n));
        for (auto& x : out) x = workload::sample_viewing_time(p, rng);
        return out;
      },
      py::arg("p1"), py::arg("mean1"), py::arg("mean2"), py::arg("n"), py::arg("seed") = 1);
  m.def(
      "class_posterior",
      [](double t, double p1, double mean1, double mean2) {
        return inference::class_posterior(t, workload::HyperExpParams::from_means(p1, mean1, mean2));
      },
      py::arg("t"), py::arg("p1") = 0.6, py::arg("mean1") = 94.0, py::arg("mean2") = 1143.0);

  m.def("default_config_text", [] { return experiment::render_config(experiment::default_config()); });
  m.def(
      "solve_csv",
      [](const std::string& config_text) {
        const auto cfg = config_from(config_text);
        cfg.validate("solve");
        return csv_text(experiment::solve_table(experiment::run_solve(cfg)));
      },
      py::arg("config_text"), "Run the config's sweep through the analytic model; CSV text.");
  m.def(
      "simulate_csv",
      [](const std::string& config_text) {
        const auto cfg = config_from(config_text);
        cfg.validate("simulate");
        return csv_text(experiment::simulate_table(experiment::run_simulate(cfg)));
      },
      py::arg("config_text"));
}
