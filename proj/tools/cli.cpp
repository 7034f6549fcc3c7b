#include "cli.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <memory>
#include <ostream>
#include <sstream>

#include "CLI11.hpp"
#include "masterlq/errors.hpp"
#include "masterlq/hjbfp_1d.hpp"
#include "masterlq/lift_calculus.hpp"
#include "masterlq/lq_model.hpp"
#include "masterlq/master_verifier.hpp"
#include "masterlq/mkv_simulator.hpp"
#include "masterlq/riccati.hpp"

namespace masterlq::cli {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Manifest

ojson RunManifest::to_json() const {
  ojson j;
  j["command"] = command;
  j["model"] = model;
  j["out"] = out;
  j["seed"] = seed;
  j["common_seed"] = common_seed ? ojson(*common_seed) : ojson(nullptr);
  j["steps"] = steps;
  j["particles"] = particles;
  j["grid"] = {{"x_min", x_min}, {"x_max", x_max}, {"Nx", Nx}, {"Nt", Nt}};
  j["suite"] = suite;
  j["kind"] = kind;
  j["theta"] = theta;
  j["max_iter"] = max_iter;
  j["times"] = times;
  j["tolerances"] = ojson::object();
  for (const auto& [k, v] : tolerances) j["tolerances"][k] = v;
  return j;
}

RunManifest RunManifest::from_json(const ojson& j) {
  if (!j.is_object()) throw std::invalid_argument("manifest must be a JSON object");
  RunManifest m;
  try {
    m.command = j.value("command", m.command);
    m.model = j.value("model", m.model);
    m.out = j.value("out", m.out);
    m.seed = j.value("seed", m.seed);
    if (j.contains("common_seed") && !j["common_seed"].is_null()) {
      m.common_seed = j["common_seed"].get<std::uint64_t>();
    }
    m.steps = j.value("steps", m.steps);
    m.particles = j.value("particles", m.particles);
    if (j.contains("grid")) {
      const auto& g = j["grid"];
      m.x_min = g.value("x_min", m.x_min);
      m.x_max = g.value("x_max", m.x_max);
      m.Nx = g.value("Nx", m.Nx);
      m.Nt = g.value("Nt", m.Nt);
    }
    m.suite = j.value("suite", m.suite);
    m.kind = j.value("kind", m.kind);
    m.theta = j.value("theta", m.theta);
    m.max_iter = j.value("max_iter", m.max_iter);
    if (j.contains("times")) m.times = j["times"].get<std::vector<double>>();
    if (j.contains("tolerances")) {
      for (const auto& [k, v] : j["tolerances"].items()) m.tolerances[k] = v.get<double>();
    }
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(std::string("bad manifest: ") + e.what());
  }
  return m;
}

void parse_grid(const std::string& text, RunManifest& m) {
  std::vector<std::string> parts;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) parts.push_back(item);
  if (parts.size() != 4) throw std::invalid_argument("--grid expects xmin,xmax,Nx,Nt");
  try {
    m.x_min = std::stod(parts[0]);
    m.x_max = std::stod(parts[1]);
    m.Nx = std::stoi(parts[2]);
    m.Nt = std::stoi(parts[3]);
  } catch (const std::exception&) {
    throw std::invalid_argument("--grid expects xmin,xmax,Nx,Nt, got '" + text + "'");
  }
}

namespace {

// ---------------------------------------------------------------------------
// Helpers

struct LoadedModel {
  nlohmann::json doc;
  LQModel model;
  double m0_mean = 1.0;
  double m0_std = 1.0;
  double potential_amplitude = 0.0;
  double potential_frequency = 1.0;
};

LoadedModel load_model(const RunManifest& m) {
  if (m.model.empty()) throw std::invalid_argument("--model is required for '" + m.command + "'");
  std::ifstream in(m.model);
  if (!in) throw std::invalid_argument("cannot open model file '" + m.model + "'");
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::parse_error& e) {
    throw std::invalid_argument("malformed JSON in '" + m.model + "': " + e.what());
  }
  LQModel model(model_from_json(doc));
  LoadedModel out{doc, std::move(model)};
  try {
    if (doc.contains("initial")) {
      out.m0_mean = doc["initial"].value("mean", out.m0_mean);
      out.m0_std = doc["initial"].value("std", out.m0_std);
    }
    if (doc.contains("potential")) {
      out.potential_amplitude = doc["potential"].value("amplitude", 0.0);
      out.potential_frequency = doc["potential"].value("frequency", 1.0);
    }
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(std::string("bad 'initial' or 'potential' entry: ") + e.what());
  }
  if (!(out.m0_std > 0)) throw std::invalid_argument("initial std must be > 0");
  return out;
}

Tolerances tolerances(const RunManifest& m) {
  Tolerances t;
  for (const auto& [k, v] : m.tolerances) t.set(k, v);
  return t;
}

SolutionKind parse_kind(const std::string& k) {
  if (k == "mfc") return SolutionKind::MFC;
  if (k == "mfg") return SolutionKind::MFG;
  throw std::invalid_argument("--kind must be mfc or mfg, got '" + k + "'");
}

fs::path out_dir(const RunManifest& m) {
  fs::path p(m.out);
  std::error_code ec;
  fs::create_directories(p, ec);
  if (ec) throw std::invalid_argument("cannot create output directory '" + m.out + "'");
  return p;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::invalid_argument("cannot write '" + path.string() + "'");
  f << text;
}

void write_json(const fs::path& path, const ojson& j) { write_text(path, j.dump(2) + "\n"); }

ojson report_header(const RunManifest& m) {
  ojson j;
  j["manifest"] = m.to_json();
  return j;
}

ParticleEnsemble initial_ensemble(const RunManifest& m, const LoadedModel& lm) {
  if (m.particles < 1) throw std::invalid_argument("--particles must be >= 1");
  const int n = lm.model.n();
  return sample_gaussian(m.particles, VectorXd::Constant(n, lm.m0_mean),
                         lm.m0_std * lm.m0_std * MatrixXd::Identity(n, n), m.seed);
}

SimConfig sim_config(const RunManifest& m) {
  if (m.steps < 1) throw std::invalid_argument("--steps must be >= 1");
  SimConfig c;
  c.steps = m.steps;
  c.seed = m.seed;
  c.common_seed = m.common_seed;
  return c;
}

void print_check(std::ostream& out, const Report& r, const std::string& label = {}) {
  out << (r.pass ? "PASS " : "FAIL ") << r.check;
  if (!label.empty()) out << " " << label;
  out << "\n";
}

// ---------------------------------------------------------------------------
// riccati

int cmd_riccati(const RunManifest& m, std::ostream& out) {
  const auto lm = load_model(m);
  const auto kind = parse_kind(m.kind);
  if (m.steps < 1) throw std::invalid_argument("--steps must be >= 1");
  const auto dir = out_dir(m);
  ojson summary = report_header(m);
  summary["kind"] = to_string(kind);
  try {
    const auto sol = solve(lm.model, TimeGrid(lm.model.T(), m.steps), kind);
    std::ostringstream csv;
    write_csv(csv, sol);
    write_text(dir / ("riccati_" + to_string(kind) + ".csv"), csv.str());
    summary["status"] = "ok";
    summary["P0"] = matrix_to_json(sol.P.front());
    summary["Sigma0"] = matrix_to_json(sol.Sigma.front());
    if (kind == SolutionKind::MFG) {
      summary["Gamma0"] = matrix_to_json(sol.Gamma.front());
      summary["mu0"] = sol.mu.front();
      summary["max_sigma_asymmetry"] = max_sigma_asymmetry(sol);
    } else {
      summary["lambda0"] = sol.lambda.front();
    }
    write_json(dir / "riccati_summary.json", summary);
    out << "riccati " << to_string(kind) << ": ok, K=" << m.steps << "\n";
    return kOk;
  } catch (const RiccatiBlowUp& e) {
    summary["status"] = "blow-up";
    summary["escape_time"] = e.escape_time();
    summary["message"] = e.what();
    write_json(dir / "riccati_summary.json", summary);
    throw;
  }
}

// ---------------------------------------------------------------------------
// verify

ojson run_lift_suite(const Tolerances& tol, bool& all_pass, std::ostream& out) {
  ojson checks = ojson::array();
  auto add = [&](const Report& r) {
    all_pass = all_pass && r.pass;
    print_check(out, r, r.data.value("functional", std::string()) + " " +
                            r.data.value("measure", std::string()));
    checks.push_back(r.to_json());
  };
  const GaussianMeasure measures[] = {GaussianMeasure::scalar(0.0, 1.0),
                                      GaussianMeasure::scalar(1.0, 4.0)};
  for (const auto& F : builtin_functionals()) {
    for (const auto& mu : measures) {
      add(check_second_identity(F, mu, tol));
      add(check_difference_identity(F, mu, tol));
    }
    add(check_buckdahn_relation(F, measures[1], 20, tol));
  }
  const auto X = sample_gaussian(2000, VectorXd::Constant(1, 0.5), MatrixXd::Constant(1, 1, 2.0), 1);
  const auto Y = sample_gaussian(2000, VectorXd::Ones(1), MatrixXd::Identity(1, 1), 2);
  for (const auto& F : builtin_functionals()) add(check_gradient_lift(F, X, Y, {1e-2, 1e-3}, tol));
  const std::vector<double> eps{1e-1, 3e-2, 1e-2, 3e-3, 1e-3};
  const auto Yc = Y.centered().shifted(VectorXd::Ones(1));
  add(check_taylor_remainder(TestFunctional::cubed_mean(), X, Yc, eps, tol));
  add(check_taylor_remainder(TestFunctional::squared_moment(PhiKind::X), X, Yc, eps, tol));
  return checks;
}

ojson run_master_suite(const RunManifest& m, const LoadedModel& lm, const Tolerances& tol,
                       bool& all_pass, std::string& status, std::ostream& out) {
  const auto& model = lm.model;
  const TimeGrid grid(model.T(), std::max(m.steps, 4));
  const auto mfc = solve_mfc(model, grid);
  const auto mfg = solve_mfg(model, grid);
  const int n = model.n();
  const auto X = sample_gaussian(64, VectorXd::Ones(n), 2.0 * MatrixXd::Identity(n, n), m.seed);
  const double bound = tol.get("master_residual");

  ojson checks = ojson::array();
  auto add = [&](Report r) {
    all_pass = all_pass && r.pass;
    print_check(out, r);
    checks.push_back(r.to_json());
  };

  auto residual_check = [&](const char* name, auto&& fn) {
    Report r;
    r.check = name;
    ojson panel = ojson::array();
    double worst = 0.0;
    for (int k : residual_panel(grid)) {
      const double t = grid.node(k);
      ojson row = fn(t, worst);
      row["t"] = t;
      panel.push_back(row);
    }
    r.data["max_residual"] = worst;
    r.data["bound"] = bound;
    r.data["panel"] = panel;
    r.pass = std::isfinite(worst) && worst <= bound;
    return r;
  };

  add(residual_check("master_residual_mfc", [&](double t, double& worst) {
    const auto rr = residual_master_mfc(model, mfc, X, t);
    worst = std::max(worst, rr.residual_norm);
    return rr.to_json();
  }));
  add(residual_check("master_residual_mfg_gradient", [&](double t, double& worst) {
    const auto rr = residual_master_mfg_gradient(model, mfg, X, t);
    worst = std::max(worst, rr.residual_norm);
    return rr.to_json();
  }));
  add(residual_check("master_residual_mfg_scalar", [&](double t, double& worst) {
    ojson rows = ojson::array();
    for (double x : {-1.0, 0.0, 1.0}) {
      const auto rr = residual_master_mfg_scalar(model, mfg, VectorXd::Constant(n, x), X, t);
      worst = std::max(worst, std::abs(rr.residual));
      ojson j = rr.to_json();
      j["x"] = x;
      rows.push_back(j);
    }
    return ojson{{"points", rows}};
  }));
  add(consistency_uncoupling(model, mfc, {}, tol));
  add(consistency_uncoupling(model, mfg, {}, tol));

  // Symmetry of the MFG Sigma against the structural diagnosis.
  const auto diag = check_symmetry_conditions(model);
  const double violation = max_sigma_asymmetry(mfg);
  Report sym;
  sym.check = "symmetry";
  sym.data["symmetry_violation"] = violation;
  sym.data["terminal_symmetric"] = diag.terminal_symmetric;
  sym.data["running_symmetric"] = diag.running_symmetric;
  sym.data["abar_zero"] = diag.abar_zero;
  sym.data["self_adjoint_possible"] = diag.self_adjoint_possible;
  if (violation > tol.get("asymmetry_flag")) {
    status = "expected-asymmetry";
    sym.pass = !diag.self_adjoint_possible;
  } else if (violation <= tol.get("symmetry_violation")) {
    status = "symmetric";
    sym.pass = true;
  } else {
    status = "inconclusive-asymmetry";
    sym.pass = false;
  }
  sym.data["status"] = status;
  add(sym);
  return checks;
}

ojson run_mp_suite(const RunManifest& m, const LoadedModel& lm, const Tolerances& tol,
                   bool& all_pass, std::ostream& out) {
  const auto& model = lm.model;
  const auto X0 = initial_ensemble(m, lm);
  ojson checks = ojson::array();
  auto add = [&](const Report& r, const std::string& label) {
    all_pass = all_pass && r.pass;
    print_check(out, r, label);
    checks.push_back(r.to_json());
  };
  std::vector<double> residuals;
  for (int K : {m.steps, 2 * m.steps}) {
    auto sol = std::make_shared<RiccatiSolution>(solve_mfc(model, TimeGrid(model.T(), K)));
    SimConfig cfg = sim_config(m);
    cfg.steps = K;
    const auto r = check_max_principle(model, sol, X0, cfg, MaxPrincipleMode::DETERMINISTIC, tol);
    residuals.push_back(r.data["residual"].get<double>());
    add(r, "deterministic K=" + std::to_string(K));
  }
  Report ratio;
  ratio.check = "max_principle_dt_halving";
  constexpr double kTrivial = 1e-14;
  if (residuals[0] <= kTrivial && residuals[1] <= kTrivial) {
    ratio.data["ratio"] = nullptr;
    ratio.data["trivial"] = true;
    ratio.pass = true;
  } else {
    const double q = residuals[0] / residuals[1];
    ratio.data["ratio"] = q;
    ratio.data["trivial"] = false;
    ratio.data["observed_order"] = std::log2(q);
    // Some models cancel the leading defect term and converge faster than first order.
    ratio.data["superconvergent"] = q > tol.get("mp_ratio_hi");
    ratio.pass = q >= tol.get("mp_ratio_lo");
  }
  ratio.data["residuals"] = residuals;
  add(ratio, "");
  if (model.spec().sigma > 0 || model.spec().beta > 0) {
    auto sol = std::make_shared<RiccatiSolution>(solve_mfc(model, TimeGrid(model.T(), m.steps)));
    add(check_max_principle(model, sol, X0, sim_config(m), MaxPrincipleMode::STOCHASTIC, tol),
        "stochastic");
  }
  return checks;
}

ojson run_optimality_suite(const RunManifest& m, const LoadedModel& lm, const Tolerances& tol,
                           bool& all_pass, std::ostream& out) {
  const auto& model = lm.model;
  auto sol = std::make_shared<RiccatiSolution>(solve_mfc(model, TimeGrid(model.T(), m.steps)));
  const auto r = check_optimality_gap(model, sol, initial_ensemble(m, lm), sim_config(m),
                                      {0.1, 0.2, 0.4}, std::nullopt, tol);
  all_pass = all_pass && r.pass;
  print_check(out, r);
  return ojson::array({r.to_json()});
}

int cmd_verify(const RunManifest& m, std::ostream& out) {
  const auto tol = tolerances(m);
  bool all_pass = true;
  ojson report = report_header(m);
  report["suite"] = m.suite;
  ojson checks;
  std::string status;
  if (m.suite == "lift") {
    checks = run_lift_suite(tol, all_pass, out);
  } else if (m.suite == "master" || m.suite == "mp" || m.suite == "optimality") {
    const auto lm = load_model(m);
    if (m.suite == "master") {
      checks = run_master_suite(m, lm, tol, all_pass, status, out);
    } else if (m.suite == "mp") {
      checks = run_mp_suite(m, lm, tol, all_pass, out);
    } else {
      checks = run_optimality_suite(m, lm, tol, all_pass, out);
    }
  } else {
    throw std::invalid_argument("--suite must be lift, master, mp or optimality");
  }
  if (!status.empty()) report["status"] = status;
  report["pass"] = all_pass;
  ojson failed = ojson::array();
  for (const auto& c : checks) {
    if (!c["pass"].get<bool>()) failed.push_back(c["check"]);
  }
  report["failed"] = failed;
  report["tolerances"] = tol.to_json();
  report["checks"] = checks;
  write_json(out_dir(m) / ("verify_" + m.suite + ".json"), report);
  out << "verify " << m.suite << ": " << (all_pass ? "pass" : "FAIL") << "\n";
  return all_pass ? kOk : kCheckFailed;
}

// ---------------------------------------------------------------------------
// simulate

int cmd_simulate(const RunManifest& m, std::ostream& out) {
  const auto lm = load_model(m);
  const auto& model = lm.model;
  const auto kind = parse_kind(m.kind);
  const auto cfg = sim_config(m);
  const auto X0 = initial_ensemble(m, lm);
  const auto tol = tolerances(m);
  auto sol = std::make_shared<RiccatiSolution>(solve(model, TimeGrid(model.T(), m.steps), kind));
  const auto traj = simulate(model, FeedbackPolicy::optimal(model, sol), X0, cfg);
  const auto est = estimate_cost(traj);
  const auto dir = out_dir(m);
  std::ostringstream csv;
  write_trajectory_csv(csv, traj);
  write_text(dir / "trajectory.csv", csv.str());

  ojson summary = report_header(m);
  summary["kind"] = to_string(kind);
  summary["J_hat"] = est.J_hat;
  summary["stderr"] = est.std_error;
  bool pass = true;
  if (kind == SolutionKind::MFC) {
    const double V = mfc_value(*sol, X0);
    const double allowance = tol.get("cost_stderr_factor") * est.std_error +
                             tol.get("cost_dt_constant") * traj.grid.h();
    pass = std::abs(est.J_hat - V) <= allowance;
    summary["V_reference"] = V;
    summary["abs_err"] = std::abs(est.J_hat - V);
    summary["allowance"] = allowance;
  } else {
    summary["V_reference"] = nullptr;
  }
  summary["pass"] = pass;
  write_json(dir / "simulate_summary.json", summary);
  out << (pass ? "PASS" : "FAIL") << " simulate J_hat=" << est.J_hat << " stderr=" << est.std_error
      << "\n";
  return pass ? kOk : kCheckFailed;
}

// ---------------------------------------------------------------------------
// hjbfp

std::string slices_csv(const RowMatrixXd& f, const Grids1D& grids, const std::vector<int>& ks) {
  std::string s = "t,x,value\n";
  char buf[96];
  for (int k : ks) {
    const double t = k == grids.Nt ? grids.T : k * grids.dt();
    for (int j = 0; j < grids.space.Nx; ++j) {
      std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g\n", t, grids.space.x(j), f(k, j));
      s += buf;
    }
  }
  return s;
}

int cmd_hjbfp(const RunManifest& m, std::ostream& out) {
  const auto lm = load_model(m);
  const auto& model = lm.model;
  const auto kind = parse_kind(m.kind);
  auto m1 = Model1D::from_lq(model, lm.m0_mean, lm.m0_std);
  m1.potential_amplitude = lm.potential_amplitude;
  m1.potential_frequency = lm.potential_frequency;
  if (kind == SolutionKind::MFC && !m1.is_lq()) {
    throw std::invalid_argument("mean field type control needs LQ data (no potential)");
  }
  const Grids1D grids(SpaceGrid1D(m.x_min, m.x_max, m.Nx), model.T(), m.Nt);
  const auto tol = tolerances(m);
  const auto dir = out_dir(m);
  ojson report = report_header(m);
  report["kind"] = to_string(kind);

  PDEFields f;
  try {
    f = picard_solve(m1, grids, kind, m.theta, m.max_iter, tol.get("hjbfp_picard"));
  } catch (const NonConvergence& e) {
    report["converged"] = false;
    report["history"] = e.history();
    report["pass"] = false;
    write_json(dir / "hjbfp_report.json", report);
    throw;
  }
  std::vector<int> ks;
  const auto times = m.times.empty() ? std::vector<double>{0.0, 0.5 * grids.T, grids.T} : m.times;
  for (double t : times) {
    if (!(t >= 0.0 && t <= grids.T)) {
      throw std::invalid_argument("requested time " + std::to_string(t) + " outside [0, T]");
    }
    ks.push_back(static_cast<int>(std::lround(t / grids.dt())));
  }
  write_text(dir / "hjbfp_u.csv", slices_csv(f.u, grids, ks));
  write_text(dir / "hjbfp_m.csv", slices_csv(f.m, grids, ks));

  report["converged"] = true;
  report["iterations"] = f.iterations;
  report["history"] = f.history;
  report["max_leakage"] = f.max_leakage;
  bool pass = true;
  if (m1.is_lq()) {
    const auto sol = solve(model, TimeGrid(model.T(), m.Nt), kind);
    const auto cv = cross_validate_lq(model, sol, f, grids, tol);
    report["cross_validation"] = cv.to_json();
    pass = cv.pass;
    print_check(out, cv);
  }
  report["pass"] = pass;
  write_json(dir / "hjbfp_report.json", report);
  out << "hjbfp " << to_string(kind) << ": converged in " << f.iterations << " iterations\n";
  return pass ? kOk : kCheckFailed;
}

}  // namespace

// ---------------------------------------------------------------------------
// Dispatch

int execute(const RunManifest& m, std::ostream& out, std::ostream& err) {
  try {
    for (const auto& [k, v] : m.tolerances) Tolerances().set(k, v);
    if (m.command == "riccati") return cmd_riccati(m, out);
    if (m.command == "verify") return cmd_verify(m, out);
    if (m.command == "simulate") return cmd_simulate(m, out);
    if (m.command == "hjbfp") return cmd_hjbfp(m, out);
    err << "error: unknown command '" << m.command << "'\n";
    return kBadInput;
  } catch (const CflViolation& e) {
    err << "error: " << e.what() << "\n";
    return kNumerical;
  } catch (const RiccatiBlowUp& e) {
    err << "error: " << e.what() << "\n";
    return kNumerical;
  } catch (const NumericalFailure& e) {
    err << "error: " << e.what() << "\n";
    return kNumerical;
  } catch (const NonConvergence& e) {
    err << "error: " << e.what() << "\n";
    return kCheckFailed;
  } catch (const InvalidModel& e) {
    err << "error: " << e.what() << "\n";
    return kBadInput;
  } catch (const DimensionMismatch& e) {
    err << "error: " << e.what() << "\n";
    return kBadInput;
  } catch (const std::invalid_argument& e) {
    err << "error: " << e.what() << "\n";
    return kBadInput;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kNumerical;
  }
}

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Linear-quadratic mean field solvers and master-equation verifiers", "masterlq"};
  app.require_subcommand(1);

  RunManifest m;
  std::string manifest_path, grid, seed_text, common_seed_text;
  std::vector<std::string> tol_overrides;
  std::string times_text;

  auto common = [&](CLI::App* sub) {
    sub->add_option("--manifest", manifest_path, "JSON manifest; flags override its fields");
    sub->add_option("--model", m.model, "model JSON file");
    sub->add_option("--out", m.out, "output directory");
    sub->add_option("--seed", seed_text, "base seed (u64)");
    sub->add_option("--common-seed", common_seed_text, "common-noise seed (defaults to --seed)");
    sub->add_option("--steps", m.steps, "time steps K");
    sub->add_option("--particles", m.particles, "particle count N");
    sub->add_option("--grid", grid, "xmin,xmax,Nx,Nt");
    sub->add_option("--kind", m.kind, "mfc or mfg");
    sub->add_option("--tol", tol_overrides, "NAME=VALUE tolerance override (repeatable)");
  };
  auto* riccati = app.add_subcommand("riccati", "solve the Riccati system, write CSV");
  auto* verify = app.add_subcommand("verify", "run a verification suite");
  auto* simulate_cmd = app.add_subcommand("simulate", "particle simulation under optimal feedback");
  auto* hjbfp = app.add_subcommand("hjbfp", "1D HJB-FP Picard solve and Riccati cross-check");
  for (auto* s : {riccati, verify, simulate_cmd, hjbfp}) common(s);
  verify->add_option("--suite", m.suite, "lift, master, mp or optimality");
  hjbfp->add_option("--theta", m.theta, "Picard damping in (0, 1]");
  hjbfp->add_option("--max-iter", m.max_iter, "Picard iteration budget");
  hjbfp->add_option("--times", times_text, "comma-separated output times");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kBadInput;
  }

  CLI::App* sub = app.get_subcommands().front();
  try {
    if (!manifest_path.empty()) {
      std::ifstream in(manifest_path);
      if (!in) throw std::invalid_argument("cannot open manifest '" + manifest_path + "'");
      ojson j;
      try {
        in >> j;
      } catch (const nlohmann::json::parse_error& e) {
        throw std::invalid_argument("malformed manifest: " + std::string(e.what()));
      }
      RunManifest base = RunManifest::from_json(j);
      // Flags given on the command line override the manifest.
      auto given = [&](const char* name) { return sub->get_option_no_throw(name) &&
                                                  sub->get_option(name)->count() > 0; };
      if (!given("--model")) m.model = base.model;
      if (!given("--out")) m.out = base.out;
      if (!given("--steps")) m.steps = base.steps;
      if (!given("--particles")) m.particles = base.particles;
      if (!given("--kind")) m.kind = base.kind;
      if (!given("--suite")) m.suite = base.suite;
      if (!given("--theta")) m.theta = base.theta;
      if (!given("--max-iter")) m.max_iter = base.max_iter;
      if (!given("--seed")) m.seed = base.seed;
      if (!given("--common-seed")) m.common_seed = base.common_seed;
      if (!given("--grid")) {
        m.x_min = base.x_min;
        m.x_max = base.x_max;
        m.Nx = base.Nx;
        m.Nt = base.Nt;
      }
      if (!given("--times")) m.times = base.times;
      m.tolerances = base.tolerances;
    }
    m.command = sub->get_name();
    auto parse_u64 = [](const std::string& s, const char* flag) {
      std::size_t pos = 0;
      unsigned long long v = 0;
      try {
        v = std::stoull(s, &pos);
      } catch (const std::exception&) {
        pos = 0;
      }
      if (pos != s.size() || s.empty() || s[0] == '-') {
        throw std::invalid_argument(std::string(flag) + " expects an unsigned integer");
      }
      return static_cast<std::uint64_t>(v);
    };
    if (!seed_text.empty()) m.seed = parse_u64(seed_text, "--seed");
    if (!common_seed_text.empty()) m.common_seed = parse_u64(common_seed_text, "--common-seed");
    if (!grid.empty()) parse_grid(grid, m);
    if (!times_text.empty()) {
      m.times.clear();
      std::stringstream ss(times_text);
      std::string item;
      while (std::getline(ss, item, ',')) m.times.push_back(std::stod(item));
    }
    for (const auto& o : tol_overrides) {
      const auto eq = o.find('=');
      if (eq == std::string::npos) throw std::invalid_argument("--tol expects NAME=VALUE");
      m.tolerances[o.substr(0, eq)] = std::stod(o.substr(eq + 1));
    }
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kBadInput;
  }
  return execute(m, out, err);
}

}  // namespace masterlq::cli
