// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "cli.hpp"
#include "masterlq/errors.hpp"
#include "masterlq/hjbfp_1d.hpp"
#include "masterlq/lift_calculus.hpp"
#include "masterlq/master_verifier.hpp"
#include "masterlq/mkv_simulator.hpp"
#include "masterlq/riccati.hpp"

using namespace masterlq;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double a) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

MatrixXd s1(double v) { return MatrixXd::Constant(1, 1, v); }

LQModel scalar_lqr(double sigma) {
  auto spec = LQModelSpec::zeros(1, 1);
  spec.B = spec.Q = s1(1.0);
  spec.sigma = sigma;
  return LQModel(spec);
}

LQModel coupled_scalar() {
  auto spec = LQModelSpec::zeros(1, 1);
  spec.B = spec.Q = spec.Qbar = spec.S = spec.Abar = s1(1.0);
  return LQModel(spec);
}

LQModel two_by_two(bool coupled) {
  auto spec = LQModelSpec::zeros(2, 2);
  spec.B = spec.Q = MatrixXd::Identity(2, 2);
  spec.Qbar << 1, 0, 0, 2;
  if (coupled) {
    spec.S << 0, 1, 0, 0;
    spec.Abar << 0.3, 0.0, 0.1, -0.2;
  }
  spec.QT = MatrixXd::Identity(2, 2);
  spec.sigma = 0.4;
  spec.beta = 0.2;
  return LQModel(spec);
}

double max_abs(const MatrixXd& m) { return m.cwiseAbs().maxCoeff(); }

// 1. Scalar LQR against tanh, and the observed RK4 order.
Outcome riccati_closed_form() {
  const auto m = scalar_lqr(0.0);
  auto err = [&](int K) {
    const auto sol = solve_mfc(m, TimeGrid(1.0, K));
    double e = 0.0;
    for (int k = 0; k <= K; ++k) {
      e = std::max(e, std::abs(sol.P[k](0, 0) - std::tanh(1.0 - sol.grid.node(k))));
    }
    return e;
  };
  const double e1000 = err(1000);
  const double order = std::log2(err(20) / err(40));
  return {e1000 <= 1e-8 && order >= 3.8 && order <= 4.2,
          "max error " + fmt("%.2e", e1000) + ", order " + fmt("%.3f", order)};
}

// 2. Terminal conditions on a seeded random model.
Outcome terminal_conditions() {
  std::mt19937_64 gen(20240611);
  std::normal_distribution<double> nd;
  const int n = 3, d = 2;
  auto rnd = [&](int r, int c) {
    MatrixXd M(r, c);
    for (int i = 0; i < r; ++i)
      for (int j = 0; j < c; ++j) M(i, j) = nd(gen);
    return M;
  };
  auto sym = [&](int k) {
    const MatrixXd M = rnd(k, k);
    return MatrixXd(0.5 * (M + M.transpose()));
  };
  auto spec = LQModelSpec::zeros(n, d);
  spec.A = rnd(n, n);
  spec.Abar = rnd(n, n);
  spec.B = rnd(n, d);
  const MatrixXd L = rnd(d, d);
  spec.R = L * L.transpose() + MatrixXd::Identity(d, d);
  spec.Q = sym(n);
  spec.Qbar = sym(n);
  spec.S = rnd(n, n);
  spec.QT = sym(n);
  spec.QbarT = sym(n);
  spec.ST = rnd(n, n);
  spec.sigma = 0.3;
  spec.beta = 0.2;
  spec.T = 0.2;
  const LQModel m(spec);
  const auto mfc = solve_mfc(m, TimeGrid(spec.T, 200));
  const auto mfg = solve_mfg(m, TimeGrid(spec.T, 200));

  const MatrixXd PT = spec.QT + spec.QbarT;
  const MatrixXd SigT = spec.ST.transpose() * spec.QbarT * spec.ST -
                        spec.ST.transpose() * spec.QbarT - spec.QbarT * spec.ST;
  double worst = 0.0;
  worst = std::max(worst, max_abs(mfc.P.back() - PT));
  worst = std::max(worst, max_abs(mfc.Sigma.back() - SigT));
  worst = std::max(worst, std::abs(mfc.lambda.back()));
  worst = std::max(worst, max_abs(mfg.P.back() - PT));
  worst = std::max(worst, max_abs(mfg.Sigma.back() + spec.QbarT * spec.ST));
  worst = std::max(worst, max_abs(mfg.Gamma.back() - spec.ST.transpose() * spec.QbarT * spec.ST));
  worst = std::max(worst, std::abs(mfg.mu.back()));
  const double scale = 1.0 + max_abs(SigT);
  return {worst <= 1e-14 * scale, "max terminal deviation " + fmt("%.2e", worst)};
}

// 3. Lift identities on every built-in functional.
Outcome lift_identities() {
  double worst_rel = 0.0, worst_linear = 0.0;
  bool pass = true;
  for (const auto& mu : {GaussianMeasure::scalar(0.0, 1.0), GaussianMeasure::scalar(1.0, 4.0)}) {
    for (const auto& F : builtin_functionals()) {
      for (const auto& r : {check_second_identity(F, mu), check_difference_identity(F, mu)}) {
        pass = pass && r.pass;
        worst_rel = std::max(worst_rel, r.data["rel_err"].get<double>());
        if (r.data.contains("linear_difference_zero")) {
          worst_linear = std::max(worst_linear, std::abs(r.data["lhs"].get<double>()));
          worst_linear = std::max(worst_linear, std::abs(r.data["rhs"].get<double>()));
        }
      }
    }
  }
  pass = pass && worst_rel < 1e-8 && worst_linear < 1e-10;
  return {pass, "max relative " + fmt("%.2e", worst_rel) + ", linear difference " +
                    fmt("%.2e", worst_linear)};
}

// 4. Taylor remainder of the lift.
Outcome taylor_remainder() {
  const std::vector<double> eps{1e-1, 3e-2, 1e-2, 3e-3, 1e-3};
  const auto X0 = sample_gaussian(2000, s1(0.5).col(0), s1(2.0), 11);
  const auto Y = sample_gaussian(2000, s1(1.0).col(0), s1(1.0), 12).centered().shifted(s1(1.0).col(0));
  const auto cubed = check_taylor_remainder(TestFunctional::cubed_mean(), X0, Y, eps);
  const auto sq = check_taylor_remainder(TestFunctional::squared_moment(PhiKind::X), X0, Y, eps);
  const double slope = cubed.data["slope"].is_number() ? cubed.data["slope"].get<double>() : NAN;
  const double rem = sq.data["max_abs_remainder"].get<double>();
  return {slope >= 2.9 && slope <= 3.1 && rem < 1e-12,
          "cubed slope " + fmt("%.4f", slope) + ", squared remainder " + fmt("%.2e", rem)};
}

// 5. Monte Carlo cost against the value function.
Outcome cost_matching() {
  bool pass = true;
  std::string detail;
  for (double sigma : {0.0, 1.0}) {
    const auto m = scalar_lqr(sigma);
    auto sol = std::make_shared<RiccatiSolution>(solve_mfc(m, TimeGrid(1.0, 1000)));
    const auto X0 = sample_gaussian(100000, s1(1.0).col(0), s1(1.0), 5);
    SimConfig cfg;
    cfg.steps = 1000;
    cfg.seed = 6;
    const auto r = check_cost_matches_value(m, sol, X0, cfg);
    const double lam = sol->lambda.front();
    const bool lam_ok = std::abs(lam - (sigma == 0.0 ? 0.0 : 0.5 * std::log(std::cosh(1.0)))) < 1e-10;
    pass = pass && r.pass && lam_ok;
    detail += (detail.empty() ? "" : "; ") + std::string("sigma=") + fmt("%g", sigma) +
              " |J-V|=" + fmt("%.2e", r.data["abs_err"].get<double>()) + " <= " +
              fmt("%.2e", r.data["allowance"].get<double>());
  }
  return {pass, detail};
}

// 6. Perturbed feedback costs more, quadratically.
Outcome optimality_gap() {
  const auto m = scalar_lqr(0.0);
  auto sol = std::make_shared<RiccatiSolution>(solve_mfc(m, TimeGrid(1.0, 1000)));
  const auto X0 = sample_gaussian(10000, s1(1.0).col(0), s1(1.0), 1);
  SimConfig cfg;
  cfg.steps = 1000;
  cfg.seed = 8;  // perturbation direction seed
  const auto r = check_optimality_gap(m, sol, X0, cfg, {0.1, 0.2, 0.4});
  bool pass = r.pass;
  std::string detail = "ratios";
  for (const auto& q : r.data["ratios"]) {
    const double v = q["ratio"].get<double>();
    pass = pass && v >= 3.2 && v <= 4.8;
    detail += " " + fmt("%.3f", v);
  }
  for (const auto& p : r.data["perturbations"]) pass = pass && p["gap"].get<double>() > 0.0;
  return {pass && r.data["ratios"].size() == 2, detail};
}

// 7. Master equation residuals and detector sensitivity.
Outcome master_residuals() {
  const TimeGrid grid(1.0, 2000);
  double worst = 0.0, corrupted = INFINITY;
  for (const auto& m : {coupled_scalar(), two_by_two(false), two_by_two(true)}) {
    const int n = m.n();
    const auto X = sample_gaussian(64, VectorXd::Ones(n), 2.0 * MatrixXd::Identity(n, n), 2024);
    auto mfc = solve_mfc(m, grid);
    auto mfg = solve_mfg(m, grid);
    for (int k : residual_panel(grid)) {
      const double t = grid.node(k);
      worst = std::max(worst, residual_master_mfc(m, mfc, X, t).residual_norm);
      worst = std::max(worst, residual_master_mfg_gradient(m, mfg, X, t).residual_norm);
    }
    for (auto& P : mfc.P) P.array() += 1e-3;
    for (auto& P : mfg.P) P.array() += 1e-3;
    corrupted = std::min(corrupted, residual_master_mfc(m, mfc, X, 0.5).residual_norm);
    corrupted = std::min(corrupted, residual_master_mfg_gradient(m, mfg, X, 0.5).residual_norm);
  }
  return {worst <= 1e-6 && corrupted > 1e-4,
          "max residual " + fmt("%.2e", worst) + ", corrupted min " + fmt("%.2e", corrupted)};
}

// 8. Symmetry obstruction for the MFG Sigma.
Outcome symmetry() {
  auto spec = LQModelSpec::zeros(2, 2);
  spec.B = spec.Q = spec.R = MatrixXd::Identity(2, 2);
  spec.Qbar << 1, 0, 0, 2;
  spec.S << 0, 1, 0, 0;
  const LQModel asym(spec);
  spec.S.setZero();
  spec.Abar.setZero();
  const LQModel sym(spec);
  const TimeGrid grid(1.0, 1000);
  const bool v_asym = check_symmetry_conditions(asym).self_adjoint_possible;
  const double a_asym = max_sigma_asymmetry(solve_mfg(asym, grid));
  const bool v_sym = check_symmetry_conditions(sym).self_adjoint_possible;
  const double a_sym = max_sigma_asymmetry(solve_mfg(sym, grid));
  return {!v_asym && a_asym > 1e-6 && v_sym && a_sym <= 1e-9,
          "asymmetric " + fmt("%.3e", a_asym) + ", symmetric " + fmt("%.1e", a_sym)};
}

// 9. Deterministic maximum principle, first order in dt.
Outcome maximum_principle() {
  auto spec = LQModelSpec::zeros(2, 1);
  spec.A << 0.0, 1.0, -0.5, 0.0;
  spec.Abar << 0.2, 0.0, 0.0, 0.1;
  spec.B << 0.0, 1.0;
  spec.Q << 1.0, 0.0, 0.0, 0.5;
  spec.Qbar << 0.5, 0.1, 0.1, 0.3;
  spec.S << 1.0, 0.0, 0.5, 1.0;
  spec.QT << 0.5, 0.0, 0.0, 0.5;
  const LQModel m(spec);
  const auto X0 = sample_gaussian(1000, VectorXd::Ones(2), MatrixXd::Identity(2, 2), 15);
  std::vector<double> res;
  bool pass = true;
  double terminal = 0.0;
  for (int K : {500, 1000}) {
    SimConfig cfg;
    cfg.steps = K;
    auto sol = std::make_shared<RiccatiSolution>(solve_mfc(m, TimeGrid(m.T(), K)));
    const auto r = check_max_principle(m, sol, X0, cfg, MaxPrincipleMode::DETERMINISTIC);
    pass = pass && r.pass;
    res.push_back(r.data["residual"].get<double>());
    terminal = std::max(terminal, r.data["terminal_error"].get<double>());
  }
  const double ratio = res[0] / res[1];
  pass = pass && ratio >= 1.7 && ratio <= 2.3 && terminal <= 1e-8;
  return {pass, "residual/dt " + fmt("%.3f", res[0] * 500) + ", ratio " + fmt("%.3f", ratio) +
                    ", terminal " + fmt("%.1e", terminal)};
}

// 10. HJB-FP solver against the Riccati solution.
Outcome hjbfp_cross_validation() {
  auto spec = LQModelSpec::zeros(1, 1);
  spec.Abar = s1(0.5);
  spec.B = spec.Q = spec.Qbar = spec.S = s1(1.0);
  spec.sigma = 0.5;
  spec.T = 0.5;
  const LQModel lq(spec);
  const auto m1 = Model1D::from_lq(lq, 1.0, 0.5);
  std::vector<double> sup;
  double mean = 0.0;
  bool pass = true;
  for (int f : {1, 2}) {
    const Grids1D g(SpaceGrid1D(-4.0, 4.0, 200 * f), spec.T, 2000 * f);
    const auto pde = picard_solve(m1, g, SolutionKind::MFG, 1.0, 200);
    const auto sol = solve_mfg(lq, TimeGrid(spec.T, 2000 * f));
    const auto r = cross_validate_lq(lq, sol, pde, g);
    sup.push_back(r.data["sup_diff"].get<double>());
    if (f == 1) {
      mean = r.data["mean_diff"].get<double>();
      pass = pass && r.pass;
    }
  }
  const double gain = sup[0] / sup[1];
  pass = pass && sup[0] <= 1e-2 && mean <= 1e-2 && gain >= 1.5;
  return {pass, "sup " + fmt("%.2e", sup[0]) + ", mean " + fmt("%.2e", mean) + ", refinement gain " +
                    fmt("%.2f", gain)};
}

// 11. Byte-identical artifacts across runs and worker counts.
std::map<std::string, std::string> snapshot(const std::filesystem::path& dir) {
  std::map<std::string, std::string> files;
  for (const auto& e : std::filesystem::directory_iterator(dir)) {
    std::ifstream in(e.path(), std::ios::binary);
    files[e.path().filename().string()] =
        std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
  }
  return files;
}

Outcome determinism(const std::string& data_dir) {
  namespace fs = std::filesystem;
  const fs::path out = fs::temp_directory_path() / "masterlq_acceptance_determinism";
  std::vector<cli::RunManifest> runs;
  auto add = [&](std::string command, std::string model, auto&& tweak) {
    cli::RunManifest m;
    m.command = std::move(command);
    m.model = data_dir + "/" + model;
    m.out = out.string();
    tweak(m);
    runs.push_back(m);
  };
  add("riccati", "mfg_scalar.json", [](auto& m) { m.kind = "mfg"; });
  add("simulate", "scalar_lqr_sigma1.json", [](auto& m) {
    m.particles = 5000;
    m.seed = 42;
  });
  add("verify", "coupled_scalar.json", [](auto& m) {
    m.suite = "optimality";
    m.particles = 3000;
    m.steps = 200;
  });
  add("hjbfp", "mfg_scalar.json", [](auto& m) {
    m.kind = "mfg";
    m.Nx = 100;
    m.Nt = 500;
  });

  std::vector<std::map<std::string, std::string>> results;
  std::ostringstream sink;
  bool ok = true;
  for (const char* threads : {"1", "4", "4"}) {
    setenv("MASTERLQ_THREADS", threads, 1);
    fs::remove_all(out);
    for (const auto& m : runs) ok = ok && cli::execute(m, sink, sink) == 0;
    results.push_back(snapshot(out));
  }
  unsetenv("MASTERLQ_THREADS");
  fs::remove_all(out);
  const bool same = results[0] == results[1] && results[1] == results[2];
  return {ok && same && results[0].size() >= 6,
          std::to_string(results[0].size()) + " artifacts, 3 runs, workers 1/4/4"};
}

}  // namespace

int main(int argc, char** argv) {
  const std::string data_dir = argc > 1 ? argv[1] : MASTERLQ_DATA_DIR;
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"riccati closed form", riccati_closed_form},
      {"terminal conditions", terminal_conditions},
      {"lift identities", lift_identities},
      {"taylor remainder", taylor_remainder},
      {"cost matching", cost_matching},
      {"optimality gap", optimality_gap},
      {"master residuals", master_residuals},
      {"symmetry obstruction", symmetry},
      {"maximum principle", maximum_principle},
      {"hjb-fp cross-validation", hjbfp_cross_validation},
      {"determinism", [&] { return determinism(data_dir); }},
  };
  int failed = 0;
  int i = 0;
  for (const auto& [name, fn] : criteria) {
    ++i;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::printf("%s %2d %s: %s (%.1fs)\n", o.pass ? "PASS" : "FAIL", i, name.c_str(),
                o.detail.c_str(), secs);
    std::fflush(stdout);
    failed += o.pass ? 0 : 1;
  }
  std::printf("%d/%zu criteria passed\n", static_cast<int>(criteria.size()) - failed,
              criteria.size());
  return failed == 0 ? 0 : 1;
}
