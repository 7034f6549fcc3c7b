#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

#include "masterlq/lq_model.hpp"
#include "masterlq/particles.hpp"
#include "masterlq/report.hpp"

namespace masterlq {

/// N(mean, covariance) with covariance positive definite.
class GaussianMeasure {
 public:
  /// Throws std::invalid_argument on a shape mismatch or a non-PD covariance.
  GaussianMeasure(Eigen::VectorXd mean, Eigen::MatrixXd covariance);
  static GaussianMeasure scalar(double mean, double variance);

  int dim() const noexcept { return static_cast<int>(mean_.size()); }
  const Eigen::VectorXd& mean() const noexcept { return mean_; }
  const Eigen::MatrixXd& covariance() const noexcept { return cov_; }
  const Eigen::MatrixXd& precision() const noexcept { return prec_; }

  double density(const Eigen::VectorXd& x) const;
  /// Dm(x) / m(x) = -C^{-1}(x - mean)
  Eigen::VectorXd log_gradient(const Eigen::VectorXd& x) const;
  /// Laplacian of m divided by m: |C^{-1}(x - mean)|^2 - tr C^{-1}
  double laplacian_ratio(const Eigen::VectorXd& x) const;

  std::string describe() const;

 private:
  Eigen::VectorXd mean_;
  Eigen::MatrixXd cov_;
  Eigen::MatrixXd prec_;
};

/// phi(x) in the built-in functionals. Coordinates: X is 1.x, X2 is |x|^2,
/// EXP_QUADRATIC is exp(-a |x|^2).
enum class PhiKind { X, X2, EXP_QUADRATIC };
enum class FunctionalKind { LINEAR, SQUARED_MOMENT, CUBED_MEAN };

/// Gaussian moments of phi and its derivatives.
struct PhiMoments {
  double phi = 0.0;
  Eigen::VectorXd grad;
  Eigen::MatrixXd hess;
};

class Phi {
 public:
  Phi(PhiKind kind, int n, double a = 0.25);

  PhiKind kind() const noexcept { return kind_; }
  int dim() const noexcept { return n_; }
  double a() const noexcept { return a_; }

  double value(const Eigen::VectorXd& x) const;
  Eigen::VectorXd gradient(const Eigen::VectorXd& x) const;
  Eigen::MatrixXd hessian(const Eigen::VectorXd& x) const;
  /// E phi, E Dphi, E D^2 phi under a Gaussian, in closed form.
  PhiMoments moments(const GaussianMeasure& m) const;
  std::string name() const;

 private:
  PhiKind kind_;
  int n_;
  double a_;
};

/// A functional of measures with closed-form derivatives in m and in the lift.
class TestFunctional {
 public:
  TestFunctional(FunctionalKind kind, Phi phi);
  static TestFunctional linear(PhiKind phi, int n = 1);
  static TestFunctional squared_moment(PhiKind phi, int n = 1);
  static TestFunctional cubed_mean(int n = 1);

  FunctionalKind kind() const noexcept { return kind_; }
  const Phi& phi() const noexcept { return phi_; }
  int dim() const noexcept { return phi_.dim(); }
  std::string name() const;

  /// F(m) by Gauss-Hermite quadrature.
  double F_density(const GaussianMeasure& m, int order = 32) const;
  /// F(m) in closed form from Gaussian moments.
  double F_exact(const GaussianMeasure& m) const;
  /// F of the empirical law of the ensemble.
  double F_lifted(const ParticleEnsemble& X) const;

  /// dF/dm(m)(xi); `m_mean` and `E_phi` are the first moment of m and the integral of phi.
  double dFdm(const Eigen::VectorXd& xi, const Eigen::VectorXd& m_mean, double E_phi) const;
  double d2Fdm2(const Eigen::VectorXd& xi, const Eigen::VectorXd& eta,
                const Eigen::VectorXd& m_mean) const;
  /// The same closed forms, with m the law of the Gaussian.
  double dFdm(const GaussianMeasure& m, const Eigen::VectorXd& xi) const;
  double d2Fdm2(const GaussianMeasure& m, const Eigen::VectorXd& xi,
                const Eigen::VectorXd& eta) const;
  /// D_x D_y d2F/dm2(x, y), the second derivative in the sense of Buckdahn et al.
  Eigen::MatrixXd mixed_second_derivative(const GaussianMeasure& m, const Eigen::VectorXd& x,
                                          const Eigen::VectorXd& y) const;

  /// Lifted gradient DF(X), one row per particle.
  RowMatrixXd DF_lifted(const ParticleEnsemble& X) const;
  /// D^2F(X)(Y, Z) on ensembles.
  double D2F_form(const ParticleEnsemble& X, const ParticleEnsemble& Y,
                  const ParticleEnsemble& Z) const;
  /// sum_k D^2F(X)(e_k, e_k) for X ~ m, in closed form.
  double D2F_trace(const GaussianMeasure& m) const;
  /// D^2F(X)(N, N) with N standard normal independent of X ~ m, in closed form.
  double D2F_noise(const GaussianMeasure& m) const;

 private:
  FunctionalKind kind_;
  Phi phi_;
};

/// LINEAR and SQUARED-MOMENT for each phi, then CUBED-MEAN.
std::vector<TestFunctional> builtin_functionals(int n = 1);

Report check_gradient_lift(const TestFunctional& F, const ParticleEnsemble& X,
                           const ParticleEnsemble& Y, const std::vector<double>& theta_steps,
                           const Tolerances& tol = {});
Report check_second_identity(const TestFunctional& F, const GaussianMeasure& m,
                             const Tolerances& tol = {});
Report check_difference_identity(const TestFunctional& F, const GaussianMeasure& m,
                                 const Tolerances& tol = {});
/// Grid is `points` evenly spaced on [-2, 2] along the diagonal direction.
Report check_buckdahn_relation(const TestFunctional& F, const GaussianMeasure& m,
                               int points = 20, const Tolerances& tol = {});
Report check_taylor_remainder(const TestFunctional& F, const ParticleEnsemble& X0,
                              const ParticleEnsemble& Y, const std::vector<double>& eps_list,
                              const Tolerances& tol = {});
/// Directional derivative of U(X) = P X + Sigma E[X] against P Z + Sigma E[Z].
Report check_vector_lift_chain_rule(const Eigen::MatrixXd& P, const Eigen::MatrixXd& Sigma,
                                    const ParticleEnsemble& X, const ParticleEnsemble& Z,
                                    const std::vector<double>& theta_steps = {1e-1, 1e-2, 1e-3},
                                    const Tolerances& tol = {});
/// Same, with P and Sigma taken from the MFC Riccati solution at t = 0.
Report check_vector_lift_chain_rule(const LQModel& model, const ParticleEnsemble& X,
                                    const ParticleEnsemble& Z, const Tolerances& tol = {});

/// Default quadrature orders for the cross-order check.
inline constexpr int kQuadratureLow = 32;
inline constexpr int kQuadratureHigh = 64;
inline constexpr double kQuadratureAgreement = 1e-8;

}  // namespace masterlq
