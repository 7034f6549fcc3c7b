#include "masterlq/lift_calculus.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <stdexcept>

#include "masterlq/errors.hpp"
#include "masterlq/quadrature.hpp"
#include "masterlq/riccati.hpp"

namespace masterlq {

using Eigen::MatrixXd;
using Eigen::VectorXd;

// ---------------------------------------------------------------------------
// GaussianMeasure

GaussianMeasure::GaussianMeasure(VectorXd mean, MatrixXd covariance)
    : mean_(std::move(mean)), cov_(std::move(covariance)) {
  const auto n = mean_.size();
  if (n < 1 || cov_.rows() != n || cov_.cols() != n) {
    throw std::invalid_argument("GaussianMeasure: covariance shape does not match mean");
  }
  if (asymmetry_inf_norm(cov_) > kSymmetryTolerance * std::max(1.0, cov_.cwiseAbs().maxCoeff())) {
    throw std::invalid_argument("GaussianMeasure: covariance not symmetric");
  }
  Eigen::LLT<MatrixXd> llt(cov_);
  if (llt.info() != Eigen::Success) {
    throw std::invalid_argument("GaussianMeasure: covariance not positive definite");
  }
  prec_ = llt.solve(MatrixXd::Identity(n, n));
  prec_ = 0.5 * (prec_ + prec_.transpose());
}

GaussianMeasure GaussianMeasure::scalar(double mean, double variance) {
  return GaussianMeasure(VectorXd::Constant(1, mean), MatrixXd::Constant(1, 1, variance));
}

double GaussianMeasure::density(const VectorXd& x) const {
  const VectorXd r = x - mean_;
  const double q = r.dot(prec_ * r);
  const double det = cov_.determinant();
  return std::exp(-0.5 * q) / std::sqrt(std::pow(2.0 * std::numbers::pi, dim()) * det);
}

VectorXd GaussianMeasure::log_gradient(const VectorXd& x) const { return -prec_ * (x - mean_); }

double GaussianMeasure::laplacian_ratio(const VectorXd& x) const {
  return (prec_ * (x - mean_)).squaredNorm() - prec_.trace();
}

std::string GaussianMeasure::describe() const {
  char buf[96];
  if (dim() == 1) {
    std::snprintf(buf, sizeof buf, "N(%g,%g)", mean_(0), cov_(0, 0));
  } else {
    std::snprintf(buf, sizeof buf, "N(n=%d)", dim());
  }
  return buf;
}

// ---------------------------------------------------------------------------
// Phi

Phi::Phi(PhiKind kind, int n, double a) : kind_(kind), n_(n), a_(a) {
  if (n < 1) throw std::invalid_argument("Phi: dimension must be >= 1");
  if (kind == PhiKind::EXP_QUADRATIC && !(a > 0)) throw std::invalid_argument("Phi: a must be > 0");
}

double Phi::value(const VectorXd& x) const {
  switch (kind_) {
    case PhiKind::X: return x.sum();
    case PhiKind::X2: return x.squaredNorm();
    case PhiKind::EXP_QUADRATIC: return std::exp(-a_ * x.squaredNorm());
  }
  return 0.0;
}

VectorXd Phi::gradient(const VectorXd& x) const {
  switch (kind_) {
    case PhiKind::X: return VectorXd::Ones(n_);
    case PhiKind::X2: return 2.0 * x;
    case PhiKind::EXP_QUADRATIC: return -2.0 * a_ * value(x) * x;
  }
  return {};
}

MatrixXd Phi::hessian(const VectorXd& x) const {
  const MatrixXd I = MatrixXd::Identity(n_, n_);
  switch (kind_) {
    case PhiKind::X: return MatrixXd::Zero(n_, n_);
    case PhiKind::X2: return 2.0 * I;
    case PhiKind::EXP_QUADRATIC:
      return value(x) * (4.0 * a_ * a_ * x * x.transpose() - 2.0 * a_ * I);
  }
  return {};
}

PhiMoments Phi::moments(const GaussianMeasure& m) const {
  if (m.dim() != n_) throw DimensionMismatch("Phi::moments: measure dimension differs");
  const VectorXd& mu = m.mean();
  const MatrixXd& C = m.covariance();
  const MatrixXd I = MatrixXd::Identity(n_, n_);
  PhiMoments out;
  switch (kind_) {
    case PhiKind::X:
      out.phi = mu.sum();
      out.grad = VectorXd::Ones(n_);
      out.hess = MatrixXd::Zero(n_, n_);
      break;
    case PhiKind::X2:
      out.phi = mu.squaredNorm() + C.trace();
      out.grad = 2.0 * mu;
      out.hess = 2.0 * I;
      break;
    case PhiKind::EXP_QUADRATIC: {
      // Tilting N(mu, C) by exp(-a|x|^2) gives N(M^{-1}mu, M^{-1}C), M = I + 2aC.
      const MatrixXd M = I + 2.0 * a_ * C;
      const Eigen::PartialPivLU<MatrixXd> lu(M);
      const VectorXd mt = lu.solve(mu);
      MatrixXd Ct = lu.solve(C);
      Ct = 0.5 * (Ct + Ct.transpose());
      out.phi = std::exp(-a_ * mu.dot(mt)) / std::sqrt(M.determinant());
      out.grad = -2.0 * a_ * out.phi * mt;
      out.hess = out.phi * (4.0 * a_ * a_ * (Ct + mt * mt.transpose()) - 2.0 * a_ * I);
      break;
    }
  }
  return out;
}

std::string Phi::name() const {
  switch (kind_) {
    case PhiKind::X: return "x";
    case PhiKind::X2: return "x^2";
    case PhiKind::EXP_QUADRATIC: return "exp-quadratic";
  }
  return "?";
}

// ---------------------------------------------------------------------------
// TestFunctional

TestFunctional::TestFunctional(FunctionalKind kind, Phi phi) : kind_(kind), phi_(phi) {}

TestFunctional TestFunctional::linear(PhiKind phi, int n) {
  return TestFunctional(FunctionalKind::LINEAR, Phi(phi, n));
}
TestFunctional TestFunctional::squared_moment(PhiKind phi, int n) {
  return TestFunctional(FunctionalKind::SQUARED_MOMENT, Phi(phi, n));
}
TestFunctional TestFunctional::cubed_mean(int n) {
  return TestFunctional(FunctionalKind::CUBED_MEAN, Phi(PhiKind::X, n));
}

std::string TestFunctional::name() const {
  switch (kind_) {
    case FunctionalKind::LINEAR: return "LINEAR[" + phi_.name() + "]";
    case FunctionalKind::SQUARED_MOMENT: return "SQUARED-MOMENT[" + phi_.name() + "]";
    case FunctionalKind::CUBED_MEAN: return "CUBED-MEAN";
  }
  return "?";
}

namespace {

void require_dim(const TestFunctional& F, int n, const char* where) {
  if (F.dim() != n) {
    throw DimensionMismatch(std::string(where) + ": functional has dimension " +
                            std::to_string(F.dim()) + ", data has " + std::to_string(n));
  }
}

// Blocked mean over particles of a per-particle scalar.
template <class Fn>
double particle_mean(Eigen::Index N, Fn&& fn) {
  double total = 0.0;
  constexpr Eigen::Index kBlock = 1024;
  for (Eigen::Index b = 0; b < N; b += kBlock) {
    double part = 0.0;
    for (Eigen::Index i = b; i < std::min(N, b + kBlock); ++i) part += fn(i);
    total += part;
  }
  return total / static_cast<double>(N);
}

}  // namespace

double TestFunctional::F_exact(const GaussianMeasure& m) const {
  require_dim(*this, m.dim(), "F_exact");
  switch (kind_) {
    case FunctionalKind::LINEAR: return phi_.moments(m).phi;
    case FunctionalKind::SQUARED_MOMENT: {
      const double e = phi_.moments(m).phi;
      return e * e;
    }
    case FunctionalKind::CUBED_MEAN: return std::pow(m.mean().sum(), 3);
  }
  return 0.0;
}

double TestFunctional::F_density(const GaussianMeasure& m, int order) const {
  require_dim(*this, m.dim(), "F_density");
  if (kind_ == FunctionalKind::CUBED_MEAN) {
    const double s = gaussian_expectation([](const VectorXd& x) { return x.sum(); }, m.mean(),
                                          m.covariance(), order);
    return s * s * s;
  }
  const double e = gaussian_expectation([this](const VectorXd& x) { return phi_.value(x); },
                                        m.mean(), m.covariance(), order);
  return kind_ == FunctionalKind::LINEAR ? e : e * e;
}

double TestFunctional::F_lifted(const ParticleEnsemble& X) const {
  require_dim(*this, X.dim(), "F_lifted");
  if (kind_ == FunctionalKind::CUBED_MEAN) return std::pow(X.mean().sum(), 3);
  const double e = particle_mean(X.size(), [&](Eigen::Index i) {
    return phi_.value(X.particle(i).transpose());
  });
  return kind_ == FunctionalKind::LINEAR ? e : e * e;
}

double TestFunctional::dFdm(const VectorXd& xi, const VectorXd& m_mean, double E_phi) const {
  switch (kind_) {
    case FunctionalKind::LINEAR: return phi_.value(xi);
    case FunctionalKind::SQUARED_MOMENT: return 2.0 * E_phi * phi_.value(xi);
    case FunctionalKind::CUBED_MEAN: {
      const double s = m_mean.sum();
      return 3.0 * s * s * xi.sum();
    }
  }
  return 0.0;
}

double TestFunctional::d2Fdm2(const VectorXd& xi, const VectorXd& eta,
                              const VectorXd& m_mean) const {
  switch (kind_) {
    case FunctionalKind::LINEAR: return 0.0;
    case FunctionalKind::SQUARED_MOMENT: return 2.0 * phi_.value(xi) * phi_.value(eta);
    case FunctionalKind::CUBED_MEAN: return 6.0 * m_mean.sum() * (xi.sum() * eta.sum());
  }
  return 0.0;
}

double TestFunctional::dFdm(const GaussianMeasure& m, const VectorXd& xi) const {
  return dFdm(xi, m.mean(), phi_.moments(m).phi);
}

double TestFunctional::d2Fdm2(const GaussianMeasure& m, const VectorXd& xi,
                              const VectorXd& eta) const {
  return d2Fdm2(xi, eta, m.mean());
}

MatrixXd TestFunctional::mixed_second_derivative(const GaussianMeasure& m, const VectorXd& x,
                                                 const VectorXd& y) const {
  const int n = dim();
  switch (kind_) {
    case FunctionalKind::LINEAR: return MatrixXd::Zero(n, n);
    case FunctionalKind::SQUARED_MOMENT:
      return 2.0 * phi_.gradient(x) * phi_.gradient(y).transpose();
    case FunctionalKind::CUBED_MEAN:
      return 6.0 * m.mean().sum() * MatrixXd::Ones(n, n);
  }
  return {};
}

RowMatrixXd TestFunctional::DF_lifted(const ParticleEnsemble& X) const {
  require_dim(*this, X.dim(), "DF_lifted");
  const auto N = X.size();
  const int n = X.dim();
  RowMatrixXd out(N, n);
  switch (kind_) {
    case FunctionalKind::LINEAR:
      for (Eigen::Index i = 0; i < N; ++i) out.row(i) = phi_.gradient(X.particle(i).transpose());
      break;
    case FunctionalKind::SQUARED_MOMENT: {
      const double e = particle_mean(N, [&](Eigen::Index i) {
        return phi_.value(X.particle(i).transpose());
      });
      for (Eigen::Index i = 0; i < N; ++i) {
        out.row(i) = 2.0 * e * phi_.gradient(X.particle(i).transpose());
      }
      break;
    }
    case FunctionalKind::CUBED_MEAN: {
      const double s = X.mean().sum();
      out.setConstant(3.0 * s * s);
      break;
    }
  }
  return out;
}

double TestFunctional::D2F_form(const ParticleEnsemble& X, const ParticleEnsemble& Y,
                                const ParticleEnsemble& Z) const {
  require_dim(*this, X.dim(), "D2F_form");
  if (Y.size() != X.size() || Z.size() != X.size() || Y.dim() != X.dim() || Z.dim() != X.dim()) {
    throw DimensionMismatch("D2F_form: ensembles differ in size or dimension");
  }
  const auto N = X.size();
  auto hess_term = [&] {
    return particle_mean(N, [&](Eigen::Index i) {
      const VectorXd x = X.particle(i).transpose();
      return Y.particle(i).dot((phi_.hessian(x) * Z.particle(i).transpose()).transpose());
    });
  };
  switch (kind_) {
    case FunctionalKind::LINEAR: return hess_term();
    case FunctionalKind::SQUARED_MOMENT: {
      const double e = particle_mean(N, [&](Eigen::Index i) {
        return phi_.value(X.particle(i).transpose());
      });
      const double gy = particle_mean(N, [&](Eigen::Index i) {
        return phi_.gradient(X.particle(i).transpose()).dot(Y.particle(i).transpose());
      });
      const double gz = particle_mean(N, [&](Eigen::Index i) {
        return phi_.gradient(X.particle(i).transpose()).dot(Z.particle(i).transpose());
      });
      return 2.0 * gy * gz + 2.0 * e * hess_term();
    }
    case FunctionalKind::CUBED_MEAN:
      return 6.0 * X.mean().sum() * Y.mean().sum() * Z.mean().sum();
  }
  return 0.0;
}

double TestFunctional::D2F_trace(const GaussianMeasure& m) const {
  require_dim(*this, m.dim(), "D2F_trace");
  switch (kind_) {
    case FunctionalKind::LINEAR: return phi_.moments(m).hess.trace();
    case FunctionalKind::SQUARED_MOMENT: {
      const auto mo = phi_.moments(m);
      return 2.0 * mo.grad.squaredNorm() + 2.0 * mo.phi * mo.hess.trace();
    }
    case FunctionalKind::CUBED_MEAN: return 6.0 * m.mean().sum() * dim();
  }
  return 0.0;
}

double TestFunctional::D2F_noise(const GaussianMeasure& m) const {
  require_dim(*this, m.dim(), "D2F_noise");
  // N is independent of X with E N = 0 and E N N' = I, so every term
  // pairing a single N with a function of X averages to zero.
  switch (kind_) {
    case FunctionalKind::LINEAR: return phi_.moments(m).hess.trace();
    case FunctionalKind::SQUARED_MOMENT: {
      const auto mo = phi_.moments(m);
      return 2.0 * mo.phi * mo.hess.trace();
    }
    case FunctionalKind::CUBED_MEAN: return 0.0;
  }
  return 0.0;
}

// ---------------------------------------------------------------------------
// Checks

namespace {

// Runs `fn(order)` at both quadrature orders and insists they agree.
template <class Fn>
double cross_order(Fn&& fn) {
  const double lo = fn(kQuadratureLow);
  const double hi = fn(kQuadratureHigh);
  if (!std::isfinite(lo) || !std::isfinite(hi) ||
      std::abs(lo - hi) > kQuadratureAgreement * std::max(1.0, std::abs(hi))) {
    throw NumericalFailure("quadrature non-convergence between orders 32 and 64",
                           kQuadratureHigh);
  }
  return hi;
}

// Double integral of d2F/dm2(xi, eta) Dm(xi).Dm(eta).
double quad_second_term(const TestFunctional& F, const GaussianMeasure& m, int order) {
  if (F.kind() == FunctionalKind::LINEAR) return 0.0;
  if (m.dim() == 1) {
    return gaussian_double_expectation(
        [&](const VectorXd& x, const VectorXd& y) {
          return F.d2Fdm2(x, y, m.mean()) * m.log_gradient(x).dot(m.log_gradient(y));
        },
        m.mean(), m.covariance(), order);
  }
  // Built-in second derivatives factor as k a(xi) a(eta); integrate a Dm componentwise.
  const double k = F.kind() == FunctionalKind::SQUARED_MOMENT ? 2.0 : 6.0 * m.mean().sum();
  auto a = [&](const VectorXd& x) {
    return F.kind() == FunctionalKind::SQUARED_MOMENT ? F.phi().value(x) : x.sum();
  };
  double acc = 0.0;
  for (int c = 0; c < m.dim(); ++c) {
    const double v = gaussian_expectation(
        [&](const VectorXd& x) { return a(x) * m.log_gradient(x)(c); }, m.mean(),
        m.covariance(), order);
    acc += v * v;
  }
  return k * acc;
}

double quad_first_term(const TestFunctional& F, const GaussianMeasure& m, int order) {
  const double e_phi = F.phi().moments(m).phi;
  return gaussian_expectation(
      [&](const VectorXd& x) { return F.dFdm(x, m.mean(), e_phi) * m.laplacian_ratio(x); },
      m.mean(), m.covariance(), order);
}

double inner_mean(const RowMatrixXd& a, const RowMatrixXd& b) {
  return particle_mean(a.rows(), [&](Eigen::Index i) { return a.row(i).dot(b.row(i)); });
}

}  // namespace

std::vector<TestFunctional> builtin_functionals(int n) {
  std::vector<TestFunctional> out;
  for (auto phi : {PhiKind::X, PhiKind::X2, PhiKind::EXP_QUADRATIC}) {
    out.push_back(TestFunctional::linear(phi, n));
    out.push_back(TestFunctional::squared_moment(phi, n));
  }
  out.push_back(TestFunctional::cubed_mean(n));
  return out;
}

Report check_gradient_lift(const TestFunctional& F, const ParticleEnsemble& X,
                           const ParticleEnsemble& Y, const std::vector<double>& theta_steps,
                           const Tolerances& tol) {
  if (X.size() != Y.size() || X.dim() != Y.dim()) {
    throw DimensionMismatch("check_gradient_lift: X and Y differ in size or dimension");
  }
  if (theta_steps.empty()) throw std::invalid_argument("check_gradient_lift: no theta steps");
  const double exact = inner_mean(F.DF_lifted(X), Y.states());
  auto central = [&](double th) {
    return (F.F_lifted(X.axpy(th, Y)) - F.F_lifted(X.axpy(-th, Y))) / (2.0 * th);
  };
  Report r;
  r.check = "gradient_lift";
  ojson steps = ojson::array();
  double max_rel = 0.0;
  double best_rel = 0.0;
  double best_value = 0.0;
  double best_theta = 0.0;
  for (double th : theta_steps) {
    if (!(th > 0)) throw std::invalid_argument("check_gradient_lift: theta must be > 0");
    const double d = central(th);
    const double richardson = (4.0 * central(0.5 * th) - d) / 3.0;
    const double rel = relative_error(d, exact);
    const double rel_r = relative_error(richardson, exact);
    max_rel = std::max(max_rel, rel);
    if (best_theta == 0.0 || th < best_theta) {
      best_theta = th;
      best_rel = rel_r;
      best_value = richardson;
    }
    steps.push_back({{"theta", th}, {"fd", d}, {"richardson", richardson}, {"rel_err", rel},
                     {"richardson_rel_err", rel_r}});
  }
  r.data["functional"] = F.name();
  r.data["measure"] = "ensemble(N=" + std::to_string(X.size()) + ")";
  r.data["lhs"] = best_value;
  r.data["rhs"] = exact;
  r.data["abs_err"] = std::abs(best_value - exact);
  r.data["rel_err"] = best_rel;
  r.data["max_rel_err"] = max_rel;
  r.data["steps"] = steps;
  r.pass = std::isfinite(best_rel) && best_rel <= tol.get("lift_gradient_rel");
  return r;
}

Report check_second_identity(const TestFunctional& F, const GaussianMeasure& m,
                             const Tolerances& tol) {
  require_dim(F, m.dim(), "check_second_identity");
  const double lhs = F.D2F_trace(m);
  const double t1 = cross_order([&](int q) { return quad_first_term(F, m, q); });
  const double t2 = cross_order([&](int q) { return quad_second_term(F, m, q); });
  Report r = identity_report("second_identity", F.name(), m.describe(), lhs, t1 + t2,
                             tol.get("lift_identity_rel"));
  r.data["rhs_laplacian_term"] = t1;
  r.data["rhs_gradient_term"] = t2;
  return r;
}

Report check_difference_identity(const TestFunctional& F, const GaussianMeasure& m,
                                 const Tolerances& tol) {
  require_dim(F, m.dim(), "check_difference_identity");
  const double trace = F.D2F_trace(m);
  const double noise = F.D2F_noise(m);
  const double lhs = trace - noise;
  const double rhs = cross_order([&](int q) { return quad_second_term(F, m, q); });
  Report r = identity_report("difference_identity", F.name(), m.describe(), lhs, rhs,
                             tol.get("lift_identity_rel"));
  r.data["trace_term"] = trace;
  r.data["noise_term"] = noise;
  if (F.kind() == FunctionalKind::LINEAR) {
    const bool zero = std::abs(lhs) <= tol.get("lift_linear_abs") &&
                      std::abs(rhs) <= tol.get("lift_linear_abs");
    r.data["linear_difference_zero"] = zero;
    r.pass = r.pass && zero;
  }
  return r;
}

Report check_buckdahn_relation(const TestFunctional& F, const GaussianMeasure& m, int points,
                               const Tolerances& tol) {
  require_dim(F, m.dim(), "check_buckdahn_relation");
  if (points < 2) throw std::invalid_argument("check_buckdahn_relation: need >= 2 points");
  const int n = F.dim();
  const VectorXd ones = VectorXd::Ones(n);
  constexpr double h = 1e-3;
  auto mixed_fd = [&](const VectorXd& x, const VectorXd& y, int i, int j, double step) {
    VectorXd xp = x, xm = x, yp = y, ym = y;
    xp(i) += step;
    xm(i) -= step;
    yp(j) += step;
    ym(j) -= step;
    return (F.d2Fdm2(m, xp, yp) - F.d2Fdm2(m, xp, ym) - F.d2Fdm2(m, xm, yp) +
            F.d2Fdm2(m, xm, ym)) /
           (4.0 * step * step);
  };
  double max_err = 0.0;
  double max_asym = 0.0;
  double worst_fd = 0.0;
  double worst_exact = 0.0;
  for (int a = 0; a < points; ++a) {
    for (int b = 0; b < points; ++b) {
      const VectorXd x = (-2.0 + 4.0 * a / (points - 1)) * ones;
      const VectorXd y = (-2.0 + 4.0 * b / (points - 1)) * ones;
      max_asym = std::max(max_asym, std::abs(F.d2Fdm2(m, x, y) - F.d2Fdm2(m, y, x)));
      const MatrixXd exact = F.mixed_second_derivative(m, x, y);
      for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
          const double fd = (4.0 * mixed_fd(x, y, i, j, 0.5 * h) - mixed_fd(x, y, i, j, h)) / 3.0;
          const double err = std::abs(fd - exact(i, j));
          if (err >= max_err) {
            max_err = err;
            worst_fd = fd;
            worst_exact = exact(i, j);
          }
        }
      }
    }
  }
  Report r;
  r.check = "buckdahn_relation";
  r.data["functional"] = F.name();
  r.data["measure"] = m.describe();
  r.data["lhs"] = worst_fd;
  r.data["rhs"] = worst_exact;
  r.data["abs_err"] = max_err;
  r.data["rel_err"] = relative_error(worst_fd, worst_exact);
  r.data["grid_points"] = points * points;
  r.data["max_asymmetry"] = max_asym;
  r.pass = max_err <= tol.get("lift_buckdahn_abs") && max_asym == 0.0;
  return r;
}

Report check_taylor_remainder(const TestFunctional& F, const ParticleEnsemble& X0,
                              const ParticleEnsemble& Y, const std::vector<double>& eps_list,
                              const Tolerances& tol) {
  if (X0.size() != Y.size() || X0.dim() != Y.dim()) {
    throw DimensionMismatch("check_taylor_remainder: X0 and Y differ in size or dimension");
  }
  if (eps_list.size() < 2) throw std::invalid_argument("check_taylor_remainder: need >= 2 eps");
  const double f0 = F.F_lifted(X0);
  const double first = inner_mean(F.DF_lifted(X0), Y.states());
  const double second = F.D2F_form(X0, Y, Y);
  const double floor = tol.get("taylor_quadratic_abs");
  ojson samples = ojson::array();
  std::vector<double> lx, ly;
  double max_abs = 0.0;
  for (double eps : eps_list) {
    if (!(eps > 0)) throw std::invalid_argument("check_taylor_remainder: eps must be > 0");
    const double R = F.F_lifted(X0.axpy(eps, Y)) - (f0 + eps * first + 0.5 * eps * eps * second);
    max_abs = std::max(max_abs, std::abs(R));
    samples.push_back({{"eps", eps}, {"remainder", R}});
    if (std::abs(R) > floor) {
      lx.push_back(std::log(eps));
      ly.push_back(std::log(std::abs(R)));
    }
  }
  Report r;
  r.check = "taylor_remainder";
  r.data["functional"] = F.name();
  r.data["measure"] = "ensemble(N=" + std::to_string(X0.size()) + ")";
  r.data["samples"] = samples;
  r.data["max_abs_remainder"] = max_abs;
  if (lx.size() >= 2) {
    const double k = static_cast<double>(lx.size());
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < lx.size(); ++i) {
      sx += lx[i];
      sy += ly[i];
      sxx += lx[i] * lx[i];
      sxy += lx[i] * ly[i];
    }
    const double slope = (k * sxy - sx * sy) / (k * sxx - sx * sx);
    r.data["below_noise_floor"] = false;
    r.data["slope"] = slope;
    r.pass = slope >= tol.get("taylor_slope_lo") && slope <= tol.get("taylor_slope_hi");
  } else {
    r.data["below_noise_floor"] = true;
    r.data["slope"] = nullptr;
    r.pass = max_abs <= floor;
  }
  return r;
}

Report check_vector_lift_chain_rule(const MatrixXd& P, const MatrixXd& Sigma,
                                    const ParticleEnsemble& X, const ParticleEnsemble& Z,
                                    const std::vector<double>& theta_steps,
                                    const Tolerances& tol) {
  const int n = X.dim();
  if (P.rows() != n || P.cols() != n || Sigma.rows() != n || Sigma.cols() != n) {
    throw DimensionMismatch("check_vector_lift_chain_rule: P and Sigma must be n x n");
  }
  if (Z.size() != X.size() || Z.dim() != n) {
    throw DimensionMismatch("check_vector_lift_chain_rule: X and Z differ in size or dimension");
  }
  auto field = [&](const ParticleEnsemble& E) {
    RowMatrixXd U = E.states() * P.transpose();
    U.rowwise() += (Sigma * E.mean()).transpose();
    return U;
  };
  RowMatrixXd expected = Z.states() * P.transpose();
  expected.rowwise() += (Sigma * Z.mean()).transpose();
  const RowMatrixXd U0 = field(X);
  double max_err = 0.0;
  ojson steps = ojson::array();
  for (double th : theta_steps) {
    const RowMatrixXd fd = (field(X.axpy(th, Z)) - U0) / th;
    const double err = (fd - expected).cwiseAbs().maxCoeff();
    max_err = std::max(max_err, err);
    steps.push_back({{"theta", th}, {"max_err", err}});
  }
  Report r;
  r.check = "vector_lift_chain_rule";
  r.data["measure"] = "ensemble(N=" + std::to_string(X.size()) + ")";
  r.data["abs_err"] = max_err;
  r.data["steps"] = steps;
  r.pass = std::isfinite(max_err) && max_err <= tol.get("lift_chain_abs");
  return r;
}

Report check_vector_lift_chain_rule(const LQModel& model, const ParticleEnsemble& X,
                                    const ParticleEnsemble& Z, const Tolerances& tol) {
  const auto sol = solve_mfc(model, TimeGrid(model.T(), 100));
  return check_vector_lift_chain_rule(sol.P.front(), sol.Sigma.front(), X, Z,
                                      {1e-1, 1e-2, 1e-3}, tol);
}

}  // namespace masterlq
