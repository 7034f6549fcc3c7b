#include <sstream>

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "cli.hpp"
#include "masterlq/errors.hpp"
#include "masterlq/hjbfp_1d.hpp"
#include "masterlq/lift_calculus.hpp"
#include "masterlq/mkv_simulator.hpp"
#include "masterlq/parallel.hpp"
#include "masterlq/riccati.hpp"

namespace py = pybind11;
using namespace masterlq;

namespace {

LQModel parse_model(const std::string& text) {
  try {
    return LQModel(model_from_json(nlohmann::json::parse(text)));
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(e.what());
  }
}

SolutionKind parse_kind(const std::string& k) {
  if (k == "mfc") return SolutionKind::MFC;
  if (k == "mfg") return SolutionKind::MFG;
  throw std::invalid_argument("kind must be 'mfc' or 'mfg'");
}

// Reports cross the boundary as JSON text; the Python side decodes them.
std::string reports_json(const std::vector<Report>& rs) {
  ojson out = ojson::array();
  for (const auto& r : rs) out.push_back(r.to_json());
  return out.dump();
}

py::dict riccati(const std::string& model_json, int steps, const std::string& kind) {
  const auto model = parse_model(model_json);
  const auto sol = solve(model, TimeGrid(model.T(), steps), parse_kind(kind));
  std::vector<double> t(steps + 1);
  for (int k = 0; k <= steps; ++k) t[k] = sol.grid.node(k);
  py::dict d;
  d["t"] = t;
  d["P"] = sol.P;
  d["Sigma"] = sol.Sigma;
  if (sol.kind == SolutionKind::MFG) {
    d["Gamma"] = sol.Gamma;
    d["mu"] = sol.mu;
  } else {
    d["lambda"] = sol.lambda;
  }
  return d;
}

std::string lift_identities() {
  std::vector<Report> rs;
  for (const auto& mu : {GaussianMeasure::scalar(0.0, 1.0), GaussianMeasure::scalar(1.0, 4.0)}) {
    for (const auto& F : builtin_functionals()) {
      rs.push_back(check_second_identity(F, mu));
      rs.push_back(check_difference_identity(F, mu));
    }
  }
  return reports_json(rs);
}

py::dict simulate_cost(const std::string& model_json, long particles, int steps,
                       std::uint64_t seed, double mean, double std) {
  const auto model = parse_model(model_json);
  const int n = model.n();
  auto sol = std::make_shared<RiccatiSolution>(solve_mfc(model, TimeGrid(model.T(), steps)));
  const auto X0 = sample_gaussian(particles, Eigen::VectorXd::Constant(n, mean),
                                  std * std * Eigen::MatrixXd::Identity(n, n), seed);
  SimConfig cfg;
  cfg.steps = steps;
  cfg.seed = seed;
  CostEstimate est;
  {
    py::gil_scoped_release release;
    est = estimate_cost(simulate(model, FeedbackPolicy::optimal(model, sol), X0, cfg));
  }
  py::dict d;
  d["J_hat"] = est.J_hat;
  d["stderr"] = est.std_error;
  d["V"] = mfc_value(*sol, X0);
  return d;
}

std::string hjbfp_cross_validation(const std::string& model_json, double m0_mean, double m0_std,
                                   double x_min, double x_max, int Nx, int Nt,
                                   const std::string& kind, double theta) {
  const auto model = parse_model(model_json);
  const auto k = parse_kind(kind);
  const Grids1D grids(SpaceGrid1D(x_min, x_max, Nx), model.T(), Nt);
  const auto pde = picard_solve(Model1D::from_lq(model, m0_mean, m0_std), grids, k, theta, 200);
  const auto sol = solve(model, TimeGrid(model.T(), Nt), k);
  return reports_json({cross_validate_lq(model, sol, pde, grids)});
}

py::tuple run_cli(const std::vector<std::string>& args) {
  std::vector<std::string> full{"masterlq"};
  full.insert(full.end(), args.begin(), args.end());
  std::vector<const char*> argv;
  for (const auto& a : full) argv.push_back(a.c_str());
  std::ostringstream out, err;
  int code;
  {
    py::gil_scoped_release release;
    code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  }
  return py::make_tuple(code, out.str(), err.str());
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Linear-quadratic mean field control and games: Riccati solvers and verifiers.";

  auto base = py::register_exception<Error>(m, "MasterLQError", PyExc_RuntimeError);
  py::register_exception<InvalidModel>(m, "InvalidModel", PyExc_ValueError);
  py::register_exception<DimensionMismatch>(m, "DimensionMismatch", PyExc_ValueError);
  py::register_exception<RiccatiBlowUp>(m, "RiccatiBlowUp", base.ptr());
  py::register_exception<NumericalFailure>(m, "NumericalFailure", base.ptr());
  py::register_exception<CflViolation>(m, "CflViolation", base.ptr());
  py::register_exception<NonConvergence>(m, "NonConvergence", base.ptr());

  m.def("riccati", &riccati, py::arg("model_json"), py::arg("steps") = 1000,
        py::arg("kind") = "mfc", "Solve the backward Riccati system; returns nodal arrays.");
  m.def("lift_identities", &lift_identities, "Lift identity reports as a JSON array.");
  m.def("simulate_cost", &simulate_cost, py::arg("model_json"), py::arg("particles") = 10000,
        py::arg("steps") = 1000, py::arg("seed") = 1, py::arg("mean") = 1.0, py::arg("std") = 1.0,
        "Monte Carlo cost of the optimal MFC feedback against the value function.");
  m.def("hjbfp_cross_validation", &hjbfp_cross_validation, py::arg("model_json"),
        py::arg("m0_mean") = 1.0, py::arg("m0_std") = 0.5, py::arg("x_min") = -4.0,
        py::arg("x_max") = 4.0, py::arg("Nx") = 200, py::arg("Nt") = 2000, py::arg("kind") = "mfg",
        py::arg("theta") = 1.0, py::call_guard<py::gil_scoped_release>());
  m.def("run_cli", &run_cli, py::arg("args"), "Run the command line front end in process.");
  m.def("worker_count", &worker_count);
}
