#include <cmath>

#include "doctest.h"
#include "masterlq/errors.hpp"
#include "masterlq/master_verifier.hpp"

using namespace masterlq;

namespace {

MatrixXd s1(double v) { return MatrixXd::Constant(1, 1, v); }

LQModel coupled_scalar(double abar, double sigma = 0.0, double beta = 0.0) {
  auto spec = LQModelSpec::zeros(1, 1);
  spec.B = spec.Q = spec.Qbar = spec.S = s1(1.0);
  spec.Abar = s1(abar);
  spec.sigma = sigma;
  spec.beta = beta;
  return LQModel(spec);
}

LQModel two_by_two(bool symmetric) {
  auto spec = LQModelSpec::zeros(2, 2);
  spec.B = spec.Q = MatrixXd::Identity(2, 2);
  spec.Qbar << 1, 0, 0, 2;
  if (symmetric) {
    spec.S << 0.5, 0, 0, 0.5;
  } else {
    spec.S << 0, 1, 0, 0;
    spec.Abar << 0.3, 0.0, 0.1, -0.2;
  }
  spec.QT << 1, 0, 0, 1;
  spec.sigma = 0.4;
  spec.beta = 0.2;
  return LQModel(spec);
}

std::shared_ptr<const RiccatiSolution> solve_ptr(const LQModel& m, SolutionKind kind, int K) {
  return std::make_shared<RiccatiSolution>(solve(m, TimeGrid(m.T(), K), kind));
}

ParticleEnsemble panel(int n) {
  return sample_gaussian(64, VectorXd::Ones(n), 2.0 * MatrixXd::Identity(n, n), 2024);
}

}  // namespace

TEST_CASE("master field kinds") {
  const auto m = coupled_scalar(1.0);
  const auto mfc = solve_ptr(m, SolutionKind::MFC, 10);
  const auto mfg = solve_ptr(m, SolutionKind::MFG, 10);
  CHECK_NOTHROW(MasterField(MasterField::Kind::MFC, mfc));
  CHECK_THROWS_AS(MasterField(MasterField::Kind::MFC, mfg), KindMismatch);
  CHECK_THROWS_AS(MasterField(MasterField::Kind::MFG_GRADIENT, mfc), KindMismatch);
  CHECK_THROWS_AS(residual_master_mfc(m, *mfg, panel(1), 0.0), KindMismatch);
  CHECK_THROWS_AS(residual_master_mfg_gradient(m, *mfc, panel(1), 0.0), KindMismatch);
  CHECK_THROWS_AS(residual_master_mfg_scalar(m, *mfc, VectorXd::Ones(1), panel(1), 0.0),
                  KindMismatch);
}

TEST_CASE("value and field of the scalar LQR") {
  auto spec = LQModelSpec::zeros(1, 1);
  spec.B = spec.Q = s1(1.0);
  const LQModel m(spec);
  const auto sol = solve_ptr(m, SolutionKind::MFC, 1000);
  const auto X = sample_gaussian(1000, VectorXd::Zero(1), MatrixXd::Identity(1, 1), 1);
  const double ex2 = X.second_moment()(0, 0);
  CHECK(eval_value(*sol, X, 0.0) == doctest::Approx(0.5 * std::tanh(1.0) * ex2).epsilon(1e-10));
  const auto U = eval_master_field(MasterField(MasterField::Kind::MFC, sol), X, 0.0);
  CHECK((U - sol->P[0](0, 0) * X.states()).cwiseAbs().maxCoeff() == 0.0);
  CHECK_THROWS_AS(eval_value(*sol, X, 1.5), std::out_of_range);
}

TEST_CASE("value at T is the expected terminal cost") {
  const auto m = two_by_two(false);
  const auto sol = solve_ptr(m, SolutionKind::MFC, 100);
  const auto X = panel(2);
  const MeanVector y{X.mean()};
  double h = 0.0;
  for (Eigen::Index i = 0; i < X.size(); ++i) {
    h += terminal_cost(m, X.states().row(i).transpose(), y);
  }
  h /= static_cast<double>(X.size());
  CHECK(std::abs(eval_value(*sol, X, 1.0) - h) < 1e-12);
}

TEST_CASE("master field is the lifted gradient of the value") {
  const auto m = two_by_two(false);
  const auto sol = solve_ptr(m, SolutionKind::MFC, 200);
  const auto X = panel(2);
  const double t = 0.3;
  const auto U = eval_master_field(MasterField(MasterField::Kind::MFC, sol), X, t);
  const double N = static_cast<double>(X.size());
  const double h = 1e-5;
  for (int i : {0, 17, 63}) {
    for (int a = 0; a < 2; ++a) {
      RowMatrixXd p = X.states(), q = X.states();
      p(i, a) += h;
      q(i, a) -= h;
      const double fd =
          (eval_value(*sol, ParticleEnsemble(p), t) - eval_value(*sol, ParticleEnsemble(q), t)) /
          (2 * h);
      CHECK(std::abs(fd - U(i, a) / N) / std::max(1e-12, std::abs(U(i, a) / N)) < 1e-6);
    }
  }
}

TEST_CASE("residuals vanish on the Riccati solution") {
  for (const auto& m : {coupled_scalar(1.0), two_by_two(false), two_by_two(true)}) {
    const auto mfc = solve_ptr(m, SolutionKind::MFC, 2000);
    const auto mfg = solve_ptr(m, SolutionKind::MFG, 2000);
    const auto X = panel(m.n());
    for (int k : residual_panel(mfc->grid)) {
      const double t = mfc->grid.node(k);
      const auto a = residual_master_mfc(m, *mfc, X, t);
      CHECK(a.residual_norm <= 1e-6);
      CHECK(a.term_breakdown["idiosyncratic_noise_D2U"].get<double>() == 0.0);
      CHECK(a.term_breakdown["common_noise_D2U"].get<double>() == 0.0);
      CHECK(a.term_breakdown.contains("expectation_copy"));
      const auto b = residual_master_mfg_gradient(m, *mfg, X, t);
      CHECK(b.residual_norm <= 1e-6);
      CHECK_FALSE(b.term_breakdown.contains("expectation_copy"));
    }
    // Off-node times interpolate.
    CHECK(residual_master_mfc(m, *mfc, X, 0.12345).residual_norm <= 1e-6);
  }
}

TEST_CASE("residual detects a corrupted P") {
  const auto m = coupled_scalar(1.0);
  auto bad = solve(m, TimeGrid(1.0, 2000), SolutionKind::MFC);
  for (auto& P : bad.P) P.array() += 1e-3;
  const auto X = panel(1);
  CHECK(residual_master_mfc(m, bad, X, 0.0).residual_norm > 1e-4);
  auto bad_mfg = solve(m, TimeGrid(1.0, 2000), SolutionKind::MFG);
  for (auto& P : bad_mfg.P) P.array() += 1e-3;
  CHECK(residual_master_mfg_gradient(m, bad_mfg, X, 0.0).residual_norm > 1e-4);
}

TEST_CASE("residual shrinks with the Riccati step") {
  const auto m = two_by_two(false);
  const auto X = panel(2);
  const auto coarse = solve(m, TimeGrid(1.0, 20), SolutionKind::MFC);
  const auto fine = solve(m, TimeGrid(1.0, 40), SolutionKind::MFC);
  const double rc = residual_master_mfc(m, coarse, X, 0.5).residual_norm;
  const double rf = residual_master_mfc(m, fine, X, 0.5).residual_norm;
  CHECK(rc / rf >= 8.0);
}

TEST_CASE("zero model gives zero residuals") {
  const LQModel m(LQModelSpec::zeros(2, 1));
  const auto X = panel(2);
  const auto mfc = solve_ptr(m, SolutionKind::MFC, 10);
  const auto mfg = solve_ptr(m, SolutionKind::MFG, 10);
  CHECK(residual_master_mfc(m, *mfc, X, 0.5).residual_norm == 0.0);
  CHECK(residual_master_mfg_gradient(m, *mfg, X, 0.5).residual_norm == 0.0);
  CHECK(residual_master_mfg_scalar(m, *mfg, VectorXd::Ones(2), X, 0.5).residual == 0.0);
  const auto r = consistency_uncoupling(m, *mfg);
  CHECK(r.pass);
  CHECK(r.data["max_residual"].get<double>() == 0.0);
}

TEST_CASE("symmetry violation") {
  const auto X = panel(2);
  const auto asym = solve_ptr(two_by_two(false), SolutionKind::MFG, 1000);
  CHECK(residual_master_mfg_gradient(two_by_two(false), *asym, X, 0.0).symmetry_violation > 1e-6);
  const auto sym = solve_ptr(two_by_two(true), SolutionKind::MFG, 1000);
  CHECK(residual_master_mfg_gradient(two_by_two(true), *sym, X, 0.0).symmetry_violation <= 1e-9);
}

TEST_CASE("scalar master equation") {
  const auto m = coupled_scalar(0.5, 0.0, 1.0);
  const auto sol = solve_ptr(m, SolutionKind::MFG, 2000);
  const auto X = panel(1);
  for (double x : {-2.0, 0.0, 1.5}) {
    for (int k : residual_panel(sol->grid)) {
      const auto r =
          residual_master_mfg_scalar(m, *sol, VectorXd::Constant(1, x), X, sol->grid.node(k));
      CHECK(std::abs(r.residual) <= 1e-6);
      CHECK(r.term_breakdown["lifted_noise_D2U"].get<double>() == 0.0);
    }
    const auto end = residual_master_mfg_scalar(m, *sol, VectorXd::Constant(1, x), X, 1.0);
    CHECK(std::abs(end.terminal_mismatch) < 1e-14);
  }
  // Constant part: mu' + 1/2 tr P + 1/2 tr Gamma + tr Sigma = 0.
  const auto jet = riccati_jet(*sol, 0.5);
  const double c = jet.rate.scalar + 0.5 * jet.value.P.trace() + 0.5 * jet.value.Gamma.trace() +
                   jet.value.Sigma.trace();
  CHECK(std::abs(c) < 1e-6);
}

TEST_CASE("eikonal scalar residual") {
  auto spec = LQModelSpec::zeros(1, 1);
  spec.B = spec.QT = s1(1.0);
  const LQModel m(spec);
  const auto sol = solve_ptr(m, SolutionKind::MFG, 1000);
  const auto X = panel(1);
  for (double t : {0.0, 0.25, 0.6}) {
    CHECK(std::abs(riccati_jet(*sol, t).value.P(0, 0) - 1.0 / (2.0 - t)) < 1e-10);
    const auto r = residual_master_mfg_scalar(m, *sol, VectorXd::Constant(1, 1.3), X, t);
    CHECK(std::abs(r.residual) < 1e-8);
  }
}

TEST_CASE("consistency with the uncoupled HJB") {
  for (const auto& m : {coupled_scalar(0.5), coupled_scalar(0.5, 0.7, 0.4), two_by_two(false)}) {
    for (auto kind : {SolutionKind::MFG, SolutionKind::MFC}) {
      const auto sol = solve(m, TimeGrid(1.0, 2000), kind);
      const auto r = consistency_uncoupling(m, sol);
      CAPTURE(r.to_json().dump());
      CHECK(r.pass);
      CHECK(r.data["terminal_mismatch"].get<double>() < 1e-12);
    }
  }
}

TEST_CASE("residual panel and reports") {
  const auto p = residual_panel(TimeGrid(1.0, 2000));
  CHECK(p == std::vector<int>{0, 500, 1000, 1500, 1999});
  const auto m = coupled_scalar(1.0);
  const auto sol = solve_ptr(m, SolutionKind::MFG, 100);
  const auto j = residual_master_mfg_gradient(m, *sol, panel(1), 0.0).to_json();
  CHECK(j.contains("residual_norm"));
  CHECK(j.contains("symmetry_violation"));
  CHECK(j.contains("term_breakdown"));
}
