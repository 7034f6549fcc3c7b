#include <cmath>

#include "doctest.h"
#include "masterlq/errors.hpp"
#include "masterlq/lift_calculus.hpp"
#include "masterlq/quadrature.hpp"

using namespace masterlq;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

VectorXd v1(double a) { return VectorXd::Constant(1, a); }

GaussianMeasure gaussian2() {
  VectorXd mu(2);
  mu << 0.5, -1.0;
  MatrixXd C(2, 2);
  C << 1.5, 0.4, 0.4, 0.8;
  return GaussianMeasure(mu, C);
}

}  // namespace

TEST_CASE("gauss-hermite rule") {
  const auto r = gauss_hermite(32);
  CHECK(r.nodes.size() == 32);
  double s0 = 0, s2 = 0, s4 = 0, s6 = 0;
  for (std::size_t i = 0; i < r.nodes.size(); ++i) {
    const double x = r.nodes[i];
    s0 += r.weights[i];
    s2 += r.weights[i] * x * x;
    s4 += r.weights[i] * std::pow(x, 4);
    s6 += r.weights[i] * std::pow(x, 6);
  }
  CHECK(std::abs(s0 - 1.0) < 1e-13);
  CHECK(std::abs(s2 - 1.0) < 1e-12);
  CHECK(std::abs(s4 - 3.0) < 1e-11);
  CHECK(std::abs(s6 - 15.0) < 1e-10);
  CHECK_THROWS(gauss_hermite(0));
}

TEST_CASE("gaussian expectations by quadrature") {
  const auto m = gaussian2();
  const double e = gaussian_expectation(
      [](const VectorXd& x) { return x(0) * x(1); }, m.mean(), m.covariance(), 8);
  CHECK(std::abs(e - (0.4 + 0.5 * -1.0)) < 1e-13);
  const double d = gaussian_double_expectation(
      [](const VectorXd& x, const VectorXd& y) { return x.dot(y); }, m.mean(), m.covariance(), 6);
  CHECK(std::abs(d - m.mean().squaredNorm()) < 1e-12);
}

TEST_CASE("gaussian measure") {
  const auto m = GaussianMeasure::scalar(1.0, 4.0);
  CHECK(m.dim() == 1);
  CHECK(m.describe() == "N(1,4)");
  CHECK(m.density(v1(1.0)) == doctest::Approx(1.0 / std::sqrt(8.0 * M_PI)));
  CHECK(m.log_gradient(v1(3.0))(0) == doctest::Approx(-0.5));
  CHECK(m.laplacian_ratio(v1(3.0)) == doctest::Approx(0.25 - 0.25));
  CHECK_THROWS_AS(GaussianMeasure::scalar(0.0, 0.0), std::invalid_argument);
  MatrixXd asym(2, 2);
  asym << 1, 0.5, 0, 1;
  CHECK_THROWS_AS(GaussianMeasure(VectorXd::Zero(2), asym), std::invalid_argument);
  CHECK(gaussian2().describe() == "N(n=2)");
}

TEST_CASE("closed-form values") {
  const auto m = GaussianMeasure::scalar(1.0, 4.0);
  CHECK(TestFunctional::linear(PhiKind::X).F_exact(m) == doctest::Approx(1.0));
  CHECK(TestFunctional::squared_moment(PhiKind::X2).F_exact(m) == doctest::Approx(25.0));
  CHECK(TestFunctional::cubed_mean().F_exact(m) == doctest::Approx(1.0));
  const auto std_normal = GaussianMeasure::scalar(0.0, 1.0);
  CHECK(TestFunctional::linear(PhiKind::EXP_QUADRATIC).F_exact(std_normal) ==
        doctest::Approx(1.0 / std::sqrt(1.5)).epsilon(1e-14));
  CHECK(TestFunctional::linear(PhiKind::X).name() == "LINEAR[x]");
  CHECK(TestFunctional::squared_moment(PhiKind::X2).name() == "SQUARED-MOMENT[x^2]");
  CHECK(TestFunctional::cubed_mean().name() == "CUBED-MEAN");
}

TEST_CASE("phi moments agree with quadrature") {
  for (const auto& m : {GaussianMeasure::scalar(0.3, 2.0), gaussian2()}) {
    for (auto kind : {PhiKind::X, PhiKind::X2, PhiKind::EXP_QUADRATIC}) {
      const Phi phi(kind, m.dim());
      const auto mom = phi.moments(m);
      const double q = gaussian_expectation([&](const VectorXd& x) { return phi.value(x); },
                                            m.mean(), m.covariance(), 40);
      CHECK(std::abs(mom.phi - q) < 1e-12);
      for (int i = 0; i < m.dim(); ++i) {
        const double g = gaussian_expectation(
            [&](const VectorXd& x) { return phi.gradient(x)(i); }, m.mean(), m.covariance(), 40);
        CHECK(std::abs(mom.grad(i) - g) < 1e-12);
        for (int j = 0; j < m.dim(); ++j) {
          const double h = gaussian_expectation(
              [&](const VectorXd& x) { return phi.hessian(x)(i, j); }, m.mean(),
              m.covariance(), 40);
          CHECK(std::abs(mom.hess(i, j) - h) < 1e-12);
        }
      }
    }
  }
}

TEST_CASE("F by density matches the closed form") {
  for (const auto& m : {GaussianMeasure::scalar(0.0, 1.0), GaussianMeasure::scalar(1.0, 4.0)}) {
    for (const auto& F : builtin_functionals()) {
      CHECK(relative_error(F.F_density(m, 64), F.F_exact(m)) < 1e-12);
    }
  }
  CHECK(builtin_functionals().size() == 7);
  CHECK(builtin_functionals(2).front().dim() == 2);
}

TEST_CASE("dFdm is the derivative along mixtures") {
  // F((1-s) m + s delta_xi) has derivative dFdm(xi) - E_m dFdm at s = 0.
  const auto m = GaussianMeasure::scalar(0.5, 2.0);
  const VectorXd xi = v1(1.3);
  for (const auto& F : builtin_functionals()) {
    const auto phi = F.phi();
    const double Ephi = phi.moments(m).phi;
    const double Ex = m.mean()(0);
    auto F_mix = [&](double s) {
      const double e_phi = (1 - s) * Ephi + s * phi.value(xi);
      const double e_x = (1 - s) * Ex + s * xi(0);
      switch (F.kind()) {
        case FunctionalKind::LINEAR: return e_phi;
        case FunctionalKind::SQUARED_MOMENT: return e_phi * e_phi;
        default: return e_x * e_x * e_x;
      }
    };
    const double h = 1e-5;
    const double fd = (F_mix(h) - F_mix(-h)) / (2 * h);
    const double mean_dF = gaussian_expectation(
        [&](const VectorXd& x) { return F.dFdm(m, x); }, m.mean(), m.covariance(), 32);
    CHECK(std::abs(fd - (F.dFdm(m, xi) - mean_dF)) < 1e-8);
  }
}

TEST_CASE("F_lifted converges to F_density at the Monte Carlo rate") {
  const auto m = GaussianMeasure::scalar(1.0, 4.0);
  const auto F = TestFunctional::squared_moment(PhiKind::X);
  double prev = 0.0;
  for (int N : {1000, 10000, 100000}) {
    double err2 = 0.0;
    for (int s = 0; s < 8; ++s) {
      const auto X = sample_gaussian(N, m.mean(), m.covariance(), 100 + s);
      const double e = F.F_lifted(X) - F.F_exact(m);
      err2 += e * e / 8.0;
    }
    const double rms = std::sqrt(err2);
    // sd of (mean x)^2 is about 2 |mu| sqrt(var / N).
    CHECK(rms < 4.0 * 2.0 * std::sqrt(4.0 / N));
    if (prev > 0) CHECK(rms < prev);
    prev = rms;
  }
}

TEST_CASE("second-order identities on every built-in") {
  for (const auto& m : {GaussianMeasure::scalar(0.0, 1.0), GaussianMeasure::scalar(1.0, 4.0)}) {
    for (const auto& F : builtin_functionals()) {
      CAPTURE(F.name());
      CAPTURE(m.describe());
      const auto a = check_second_identity(F, m);
      CHECK(a.pass);
      CHECK(a.data["rel_err"].get<double>() < 1e-8);
      const auto b = check_difference_identity(F, m);
      CHECK(b.pass);
      if (F.kind() == FunctionalKind::LINEAR) {
        CHECK(std::abs(b.data["lhs"].get<double>()) < 1e-10);
        CHECK(b.data["linear_difference_zero"].get<bool>());
      }
    }
  }
}

TEST_CASE("identities in two dimensions") {
  for (const auto& F : builtin_functionals(2)) {
    CAPTURE(F.name());
    CHECK(check_second_identity(F, gaussian2()).pass);
    CHECK(check_difference_identity(F, gaussian2()).pass);
  }
  CHECK_THROWS_AS(check_second_identity(TestFunctional::cubed_mean(2),
                                        GaussianMeasure::scalar(0, 1)),
                  DimensionMismatch);
}

TEST_CASE("trace and noise forms differ by the gradient term") {
  // SQUARED-MOMENT[x] under N(1,4): trace 2|E phi'|^2 = 2, the noise form gives 0.
  const auto m = GaussianMeasure::scalar(1.0, 4.0);
  const auto F = TestFunctional::squared_moment(PhiKind::X);
  CHECK(F.D2F_trace(m) == doctest::Approx(2.0));
  CHECK(F.D2F_noise(m) == doctest::Approx(0.0));
  CHECK(check_difference_identity(F, m).data["rhs"].get<double>() == doctest::Approx(2.0));
}

TEST_CASE("mixed second derivative and symmetry") {
  for (const auto& F : builtin_functionals()) {
    CAPTURE(F.name());
    const auto r = check_buckdahn_relation(F, GaussianMeasure::scalar(1.0, 4.0), 20);
    CHECK(r.pass);
    CHECK(r.data["max_asymmetry"].get<double>() == 0.0);
    CHECK(r.data["grid_points"].get<int>() == 400);
  }
  const auto F = TestFunctional::squared_moment(PhiKind::X2);
  const auto m = GaussianMeasure::scalar(0.0, 1.0);
  CHECK(F.mixed_second_derivative(m, v1(0.5), v1(-1.5))(0, 0) ==
        doctest::Approx(2.0 * 1.0 * -3.0));
}

TEST_CASE("gradient of the lift") {
  for (int n : {1, 2}) {
    const auto m = n == 1 ? GaussianMeasure::scalar(0.5, 2.0) : gaussian2();
    const auto X = sample_gaussian(2000, m.mean(), m.covariance(), 1);
    const auto Y = sample_gaussian(2000, VectorXd::Ones(n), MatrixXd::Identity(n, n), 2);
    for (const auto& F : builtin_functionals(n)) {
      CAPTURE(F.name());
      CHECK(check_gradient_lift(F, X, Y, {1e-2, 1e-3}).pass);
    }
  }
}

TEST_CASE("taylor remainder") {
  const std::vector<double> eps{1e-1, 3e-2, 1e-2, 3e-3, 1e-3};
  const auto X0 = sample_gaussian(1000, v1(0.5), MatrixXd::Constant(1, 1, 1.0), 3);
  const auto Y = sample_gaussian(1000, v1(1.0), MatrixXd::Constant(1, 1, 1.0), 4).centered()
                     .shifted(v1(1.0));
  const auto cubed = check_taylor_remainder(TestFunctional::cubed_mean(), X0, Y, eps);
  CHECK(cubed.pass);
  const double slope = cubed.data["slope"].get<double>();
  CHECK(slope >= 2.9);
  CHECK(slope <= 3.1);
  // E[Y] = 1 exactly, so R = eps^3.
  CHECK(cubed.data["samples"][0]["remainder"].get<double>() == doctest::Approx(1e-3).epsilon(1e-6));

  const auto sq = check_taylor_remainder(TestFunctional::squared_moment(PhiKind::X), X0, Y, eps);
  CHECK(sq.pass);
  CHECK(sq.data["below_noise_floor"].get<bool>());
  CHECK(sq.data["max_abs_remainder"].get<double>() < 1e-12);

  const auto zero = check_taylor_remainder(TestFunctional::cubed_mean(), X0, Y.centered(), eps);
  CHECK(zero.data["max_abs_remainder"].get<double>() < 1e-12);
}

TEST_CASE("vector lift chain rule") {
  MatrixXd P(2, 2), S(2, 2);
  P << 1.0, 0.2, 0.2, 0.7;
  S << 0.3, -0.5, 0.1, 0.0;
  const auto X = sample_gaussian(500, VectorXd::Zero(2), MatrixXd::Identity(2, 2), 5);
  const auto Z = sample_gaussian(500, VectorXd::Ones(2), MatrixXd::Identity(2, 2), 6);
  CHECK(check_vector_lift_chain_rule(P, S, X, Z).pass);
  CHECK_THROWS_AS(check_vector_lift_chain_rule(MatrixXd::Identity(3, 3), S, X, Z),
                  DimensionMismatch);
}
