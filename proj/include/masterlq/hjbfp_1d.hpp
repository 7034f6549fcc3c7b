#pragma once

#include <vector>

#include <Eigen/Dense>

#include "masterlq/lq_model.hpp"
#include "masterlq/particles.hpp"
#include "masterlq/report.hpp"
#include "masterlq/riccati.hpp"

namespace masterlq {

/// Nodes x_j = x_min + j dx, j = 0..Nx-1. Densities are cell averages around x_j.
struct SpaceGrid1D {
  double x_min = -4.0;
  double x_max = 4.0;
  int Nx = 200;

  SpaceGrid1D() = default;
  /// Throws std::invalid_argument unless x_min < x_max and Nx >= 16.
  SpaceGrid1D(double x_min, double x_max, int Nx);

  double dx() const { return (x_max - x_min) / (Nx - 1); }
  double x(int j) const { return j == Nx - 1 ? x_max : x_min + j * dx(); }
};

struct Grids1D {
  SpaceGrid1D space;
  double T = 1.0;
  int Nt = 1000;

  Grids1D(SpaceGrid1D space, double T, int Nt);
  double dt() const { return T / Nt; }
};

/// Scalar LQ data, an optional potential amplitude cos(frequency x) added to
/// the running cost, and a Gaussian initial density.
struct Model1D {
  double A = 0, Abar = 0, B = 1, Q = 0, Qbar = 0, S = 0, R = 1;
  double QT = 0, QbarT = 0, ST = 0;
  double sigma = 0, T = 1;
  double potential_amplitude = 0, potential_frequency = 1;
  double m0_mean = 0, m0_std = 1;

  /// Throws DimensionMismatch unless n = d = 1.
  static Model1D from_lq(const LQModel& model, double m0_mean, double m0_std);
  bool is_lq() const { return potential_amplitude == 0.0; }

  double potential(double x) const;
  /// H(x, y, p) = min_v f + p g with y the first moment.
  double hamiltonian(double x, double y, double p) const;
  /// Upwind numerical Hamiltonian from the backward and forward gradients.
  double numerical_hamiltonian(double x, double y, double p_minus, double p_plus) const;
  double terminal(double x, double y) const;
};

struct PDEFields {
  RowMatrixXd u;  // (Nt + 1) x Nx
  RowMatrixXd m;  // (Nt + 1) x Nx
  std::vector<double> history;  // sup-norm density change per Picard sweep
  int iterations = 0;
  bool converged = false;
  double max_leakage = 0.0;  // largest mass change before renormalisation
};

/// Gaussian m0 sampled on the grid and normalised to unit mass.
Eigen::VectorXd initial_density(const Model1D& model, const SpaceGrid1D& grid);

/// First moment of each slice.
std::vector<double> slice_means(const RowMatrixXd& m, const SpaceGrid1D& grid);

/// Upwind finite volumes for the drift, implicit diffusion, zero-flux ends.
/// `drift` holds the nodal drift of step k in row k (Nt rows).
/// Throws CflViolation when the advective Courant number exceeds one.
RowMatrixXd solve_fp_forward(const RowMatrixXd& drift, double sigma, const Eigen::VectorXd& m0,
                             const Grids1D& grids, double* max_leakage = nullptr);

/// Implicit diffusion with an explicit upwind Hamiltonian on second-order ENO
/// one-sided gradients, marching backward
/// from u(T) = h(x, m(T)); u is extrapolated linearly at both ends.
RowMatrixXd solve_hjb_backward(const RowMatrixXd& m, const Model1D& model, const Grids1D& grids,
                               bool mfc_extra);

/// Optimal drift Ax + Abar y - (B^2/R) u_x for every step (Nt rows).
RowMatrixXd optimal_drift(const RowMatrixXd& u, const RowMatrixXd& m, const Model1D& model,
                          const Grids1D& grids);

/// Damped Picard iteration on the density. `iterations` counts sweeps until the
/// change drops below tol (the confirming sweep is not counted).
/// Throws NonConvergence with the history after max_iter sweeps.
PDEFields picard_solve(const Model1D& model, const Grids1D& grids, SolutionKind kind,
                       double theta, int max_iter, double tol = 1e-6);

/// Compares the PDE value with the Riccati value along the mean flow on |x| <= max|x|/2,
/// and the slice means with the mean ODE.
Report cross_validate_lq(const LQModel& model, const RiccatiSolution& sol, const PDEFields& pde,
                         const Grids1D& grids, const Tolerances& tol = {});

}  // namespace masterlq
