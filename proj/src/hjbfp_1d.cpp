#include "masterlq/hjbfp_1d.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "masterlq/errors.hpp"
#include "masterlq/master_verifier.hpp"

namespace masterlq {

SpaceGrid1D::SpaceGrid1D(double lo, double hi, int n) : x_min(lo), x_max(hi), Nx(n) {
  if (!(lo < hi) || !std::isfinite(lo) || !std::isfinite(hi)) {
    throw std::invalid_argument("space grid needs x_min < x_max");
  }
  if (n < 16) throw std::invalid_argument("space grid needs Nx >= 16");
}

Grids1D::Grids1D(SpaceGrid1D s, double horizon, int steps) : space(s), T(horizon), Nt(steps) {
  if (!(horizon > 0)) throw std::invalid_argument("time horizon must be > 0");
  if (steps < 1) throw std::invalid_argument("Nt must be >= 1");
}

// ---------------------------------------------------------------------------
// Model1D

Model1D Model1D::from_lq(const LQModel& model, double m0_mean, double m0_std) {
  if (model.n() != 1 || model.d() != 1) {
    throw DimensionMismatch("the 1D solver needs n = d = 1, got n=" + std::to_string(model.n()) +
                            ", d=" + std::to_string(model.d()));
  }
  const auto& s = model.spec();
  Model1D m;
  m.A = s.A(0, 0);
  m.Abar = s.Abar(0, 0);
  m.B = s.B(0, 0);
  m.Q = s.Q(0, 0);
  m.Qbar = s.Qbar(0, 0);
  m.S = s.S(0, 0);
  m.R = s.R(0, 0);
  m.QT = s.QT(0, 0);
  m.QbarT = s.QbarT(0, 0);
  m.ST = s.ST(0, 0);
  m.sigma = s.sigma;
  m.T = s.T;
  m.m0_mean = m0_mean;
  m.m0_std = m0_std;
  return m;
}

double Model1D::potential(double x) const {
  return potential_amplitude == 0.0 ? 0.0
                                    : potential_amplitude * std::cos(potential_frequency * x);
}

namespace {

double state_cost(const Model1D& m, double x, double y) {
  const double e = x - m.S * y;
  return 0.5 * (m.Q * x * x + m.Qbar * e * e) + m.potential(x);
}

}  // namespace

double Model1D::hamiltonian(double x, double y, double p) const {
  return state_cost(*this, x, y) + p * (A * x + Abar * y) - 0.5 * B * B * p * p / R;
}

double Model1D::numerical_hamiltonian(double x, double y, double pm, double pp) const {
  const double c = A * x + Abar * y;
  auto phi = [&](double v) {
    const double b = c + B * v;
    return 0.5 * R * v * v + std::max(b, 0.0) * pp + std::min(b, 0.0) * pm;
  };
  // Each branch is a quadratic in v; its minimiser or the kink is optimal.
  double best = phi(-B * pp / R);
  best = std::min(best, phi(-B * pm / R));
  if (B != 0.0) best = std::min(best, phi(-c / B));
  return state_cost(*this, x, y) + best;
}

double Model1D::terminal(double x, double y) const {
  const double e = x - ST * y;
  return 0.5 * (QT * x * x + QbarT * e * e);
}

// ---------------------------------------------------------------------------
// Helpers

namespace {

// Solves a tridiagonal system in place; a is the sub-, b the main, c the super-diagonal.
void thomas(std::vector<double> a, std::vector<double> b, std::vector<double> c,
            double* rhs, int n) {
  for (int i = 1; i < n; ++i) {
    const double w = a[i] / b[i - 1];
    b[i] -= w * c[i - 1];
    rhs[i] -= w * rhs[i - 1];
  }
  rhs[n - 1] /= b[n - 1];
  for (int i = n - 2; i >= 0; --i) rhs[i] = (rhs[i] - c[i] * rhs[i + 1]) / b[i];
}

double slice_mean(const double* m, const SpaceGrid1D& g) {
  double acc = 0.0;
  for (int j = 0; j < g.Nx; ++j) acc += g.x(j) * m[j];
  return acc * g.dx();
}

double central_gradient(const double* u, int j, const SpaceGrid1D& g) {
  const double dx = g.dx();
  if (j == 0) return (u[1] - u[0]) / dx;
  if (j == g.Nx - 1) return (u[j] - u[j - 1]) / dx;
  return (u[j + 1] - u[j - 1]) / (2.0 * dx);
}

// Second-order ENO one-sided differences; first order next to the ends.
double eno2_backward(const double* u, int j, int n, double dx) {
  const double d1 = (u[j] - u[j - 1]) / dx;
  if (j < 2 || j + 1 >= n) return d1;
  const double left = u[j] - 2.0 * u[j - 1] + u[j - 2];
  const double right = u[j + 1] - 2.0 * u[j] + u[j - 1];
  const double c = std::abs(left) <= std::abs(right) ? left : right;
  return d1 + 0.5 * c / dx;
}

double eno2_forward(const double* u, int j, int n, double dx) {
  const double d1 = (u[j + 1] - u[j]) / dx;
  if (j < 1 || j + 2 >= n) return d1;
  const double left = u[j + 1] - 2.0 * u[j] + u[j - 1];
  const double right = u[j + 2] - 2.0 * u[j + 1] + u[j];
  const double c = std::abs(right) <= std::abs(left) ? right : left;
  return d1 - 0.5 * c / dx;
}

void require_finite(const double* v, int n, const char* what, int step) {
  for (int j = 0; j < n; ++j) {
    if (!std::isfinite(v[j])) throw NumericalFailure(std::string("non-finite ") + what, step);
  }
}

}  // namespace

Eigen::VectorXd initial_density(const Model1D& model, const SpaceGrid1D& grid) {
  if (!(model.m0_std > 0)) throw std::invalid_argument("initial density needs std > 0");
  Eigen::VectorXd m(grid.Nx);
  for (int j = 0; j < grid.Nx; ++j) {
    const double z = (grid.x(j) - model.m0_mean) / model.m0_std;
    m(j) = std::exp(-0.5 * z * z);
  }
  return m / (m.sum() * grid.dx());
}

std::vector<double> slice_means(const RowMatrixXd& m, const SpaceGrid1D& grid) {
  std::vector<double> out(m.rows());
  for (Eigen::Index k = 0; k < m.rows(); ++k) out[k] = slice_mean(m.row(k).data(), grid);
  return out;
}

// ---------------------------------------------------------------------------
// Fokker-Planck

RowMatrixXd solve_fp_forward(const RowMatrixXd& drift, double sigma, const Eigen::VectorXd& m0,
                             const Grids1D& grids, double* max_leakage) {
  const auto& g = grids.space;
  const int Nx = g.Nx;
  const int Nt = grids.Nt;
  if (!(sigma > 0)) throw std::invalid_argument("Fokker-Planck solver requires sigma > 0");
  if (drift.rows() != Nt || drift.cols() != Nx || m0.size() != Nx) {
    throw DimensionMismatch("drift must be Nt x Nx and m0 must have Nx entries");
  }
  if ((m0.array() < 0).any()) throw std::invalid_argument("initial density must be >= 0");
  const double dx = g.dx();
  const double dt = grids.dt();
  const double r = 0.5 * sigma * sigma * dt / (dx * dx);

  // Advective Courant number: largest outflow fraction of a cell in one step.
  double courant = 0.0;
  for (int k = 0; k < Nt; ++k) {
    for (int j = 0; j < Nx; ++j) {
      const double right = j + 1 < Nx ? 0.5 * (drift(k, j) + drift(k, j + 1)) : 0.0;
      const double left = j > 0 ? 0.5 * (drift(k, j - 1) + drift(k, j)) : 0.0;
      courant = std::max(courant, dt / dx * (std::max(right, 0.0) - std::min(left, 0.0)));
    }
  }
  if (courant > 1.0) throw CflViolation(courant, dt, dx);

  RowMatrixXd m(Nt + 1, Nx);
  const double mass0 = m0.sum() * dx;
  if (!(mass0 > 0)) throw std::invalid_argument("initial density has zero mass");
  m.row(0) = (m0 / mass0).transpose();
  std::vector<double> a(Nx, -r), b(Nx, 1.0 + 2.0 * r), c(Nx, -r);
  a[0] = 0.0;
  c[Nx - 1] = 0.0;
  b[0] = b[Nx - 1] = 1.0 + r;
  std::vector<double> flux(Nx + 1), next(Nx);
  double leak = 0.0;
  for (int k = 0; k < Nt; ++k) {
    const double* cur = m.row(k).data();
    flux[0] = flux[Nx] = 0.0;
    for (int j = 0; j + 1 < Nx; ++j) {
      const double v = 0.5 * (drift(k, j) + drift(k, j + 1));
      flux[j + 1] = std::max(v, 0.0) * cur[j] + std::min(v, 0.0) * cur[j + 1];
    }
    for (int j = 0; j < Nx; ++j) next[j] = cur[j] - dt / dx * (flux[j + 1] - flux[j]);
    thomas(a, b, c, next.data(), Nx);
    double mass = 0.0;
    for (int j = 0; j < Nx; ++j) {
      next[j] = std::max(next[j], 0.0);
      mass += next[j];
    }
    mass *= dx;
    require_finite(next.data(), Nx, "density", k + 1);
    leak = std::max(leak, std::abs(mass - 1.0));
    for (int j = 0; j < Nx; ++j) m(k + 1, j) = next[j] / mass;
  }
  if (max_leakage) *max_leakage = leak;
  return m;
}

// ---------------------------------------------------------------------------
// Hamilton-Jacobi-Bellman

RowMatrixXd solve_hjb_backward(const RowMatrixXd& m, const Model1D& model, const Grids1D& grids,
                               bool mfc_extra) {
  const auto& g = grids.space;
  const int Nx = g.Nx;
  const int Nt = grids.Nt;
  if (!(model.sigma > 0)) throw std::invalid_argument("HJB solver requires sigma > 0");
  if (m.rows() != Nt + 1 || m.cols() != Nx) {
    throw DimensionMismatch("density must be (Nt + 1) x Nx");
  }
  if (mfc_extra && !model.is_lq()) {
    throw std::invalid_argument("the control-problem coupling term needs LQ data");
  }
  const double dx = g.dx();
  const double dt = grids.dt();
  const double r = 0.5 * model.sigma * model.sigma * dt / (dx * dx);
  const auto ybar = slice_means(m, g);

  RowMatrixXd u(Nt + 1, Nx);
  const double yT = ybar[Nt];
  for (int j = 0; j < Nx; ++j) {
    double v = model.terminal(g.x(j), yT);
    if (mfc_extra) v -= (yT - model.ST * yT) * model.QbarT * model.ST * g.x(j);
    u(Nt, j) = v;
  }

  // Interior unknowns 1..Nx-2; u_0 = 2u_1 - u_2 and u_{N-1} = 2u_{N-2} - u_{N-3}
  // turn the first and last interior rows into identities.
  const int n = Nx - 2;
  std::vector<double> a(n, -r), b(n, 1.0 + 2.0 * r), c(n, -r);
  a[0] = 0.0;
  c[0] = 0.0;
  b[0] = 1.0;
  a[n - 1] = 0.0;
  c[n - 1] = 0.0;
  b[n - 1] = 1.0;
  std::vector<double> rhs(n);
  double courant = 0.0;
  for (int k = Nt - 1; k >= 0; --k) {
    const double* up = u.row(k + 1).data();
    const double y = ybar[k + 1];
    double extra_coef = 0.0;
    if (mfc_extra) {
      double mean_ux = 0.0;
      for (int j = 0; j < Nx; ++j) mean_ux += m(k + 1, j) * central_gradient(up, j, g);
      mean_ux *= dx;
      extra_coef = -model.Qbar * model.S * y + model.S * model.S * model.Qbar * y +
                   model.Abar * mean_ux;
    }
    for (int i = 0; i < n; ++i) {
      const int j = i + 1;
      const double x = g.x(j);
      const double pm = eno2_backward(up, j, Nx, dx);
      const double pp = eno2_forward(up, j, Nx, dx);
      // Drift speed of the minimiser bounds the explicit step.
      const double pc = 0.5 * (pm + pp);
      courant = std::max(courant,
                         dt / dx * std::abs(model.A * x + model.Abar * y -
                                            model.B * model.B * pc / model.R));
      double rate = model.numerical_hamiltonian(x, y, pm, pp);
      if (mfc_extra) rate += extra_coef * x;
      rhs[i] = up[j] + dt * rate;
    }
    if (courant > 1.0) throw CflViolation(courant, dt, dx);
    thomas(a, b, c, rhs.data(), n);
    for (int i = 0; i < n; ++i) u(k, i + 1) = rhs[i];
    u(k, 0) = 2.0 * u(k, 1) - u(k, 2);
    u(k, Nx - 1) = 2.0 * u(k, Nx - 2) - u(k, Nx - 3);
    require_finite(u.row(k).data(), Nx, "value function", k);
  }
  return u;
}

RowMatrixXd optimal_drift(const RowMatrixXd& u, const RowMatrixXd& m, const Model1D& model,
                          const Grids1D& grids) {
  const auto& g = grids.space;
  const auto ybar = slice_means(m, g);
  RowMatrixXd G(grids.Nt, g.Nx);
  for (int k = 0; k < grids.Nt; ++k) {
    const double* uk = u.row(k).data();
    for (int j = 0; j < g.Nx; ++j) {
      G(k, j) = model.A * g.x(j) + model.Abar * ybar[k] -
                model.B * model.B / model.R * central_gradient(uk, j, g);
    }
  }
  return G;
}

// ---------------------------------------------------------------------------
// Picard

PDEFields picard_solve(const Model1D& model, const Grids1D& grids, SolutionKind kind,
                       double theta, int max_iter, double tol) {
  if (!(theta > 0.0 && theta <= 1.0)) throw std::invalid_argument("damping must be in (0, 1]");
  if (max_iter < 1) throw std::invalid_argument("max_iter must be >= 1");
  if (std::abs(grids.T - model.T) > 1e-12 * std::max(1.0, model.T)) {
    throw DimensionMismatch("grid horizon differs from the model horizon");
  }
  const auto m0 = initial_density(model, grids.space);
  const bool mfc = kind == SolutionKind::MFC;

  PDEFields f;
  f.m = m0.transpose().replicate(grids.Nt + 1, 1);
  for (int it = 0; it < max_iter; ++it) {
    f.u = solve_hjb_backward(f.m, model, grids, mfc);
    double leak = 0.0;
    RowMatrixXd m_new = solve_fp_forward(optimal_drift(f.u, f.m, model, grids), model.sigma, m0,
                                         grids, &leak);
    f.max_leakage = std::max(f.max_leakage, leak);
    const double change = (m_new - f.m).cwiseAbs().maxCoeff();
    f.history.push_back(change);
    f.m = theta * m_new + (1.0 - theta) * f.m;
    if (change < tol) {
      f.converged = true;
      f.iterations = static_cast<int>(f.history.size()) - 1;
      return f;
    }
  }
  throw NonConvergence(f.history);
}

// ---------------------------------------------------------------------------
// Cross-validation

Report cross_validate_lq(const LQModel& model, const RiccatiSolution& sol, const PDEFields& pde,
                         const Grids1D& grids, const Tolerances& tol) {
  const auto& g = grids.space;
  if (sol.grid.K() != grids.Nt || std::abs(sol.grid.T() - grids.T) > 1e-12 * grids.T) {
    throw DimensionMismatch("Riccati grid must match the PDE time grid");
  }
  if (pde.u.rows() != grids.Nt + 1 || pde.u.cols() != g.Nx || pde.m.rows() != grids.Nt + 1 ||
      pde.m.cols() != g.Nx) {
    throw DimensionMismatch("PDE fields do not match the grids");
  }
  const auto means = slice_means(pde.m, g);
  const auto flow = mean_flow(model, sol, Eigen::VectorXd::Constant(1, means[0]));
  const double half = 0.5 * std::max(std::abs(g.x_min), std::abs(g.x_max));

  double sup = 0.0, l2 = 0.0, mean_err = 0.0;
  int count = 0;
  Eigen::VectorXd x(1);
  for (int k = 0; k <= grids.Nt; ++k) {
    mean_err = std::max(mean_err, std::abs(means[k] - flow.y[k](0)));
    for (int j = 0; j < g.Nx; ++j) {
      if (std::abs(g.x(j)) > half) continue;
      x(0) = g.x(j);
      const double d = pde.u(k, j) - decoupling_field(model, sol, flow, k, x);
      sup = std::max(sup, std::abs(d));
      l2 += d * d;
      ++count;
    }
  }
  l2 = std::sqrt(l2 / std::max(count, 1));
  Report r;
  r.check = "hjbfp_cross_validation";
  r.data["kind"] = to_string(sol.kind);
  r.data["subdomain_half_width"] = half;
  r.data["sup_diff"] = sup;
  r.data["l2_diff"] = l2;
  r.data["mean_diff"] = mean_err;
  r.pass = sup <= tol.get("hjbfp_sup") && mean_err <= tol.get("hjbfp_mean");
  return r;
}

}  // namespace masterlq
