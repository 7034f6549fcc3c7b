#pragma once

#include <memory>
#include <vector>

#include <Eigen/Dense>

#include "masterlq/lq_model.hpp"
#include "masterlq/particles.hpp"
#include "masterlq/report.hpp"
#include "masterlq/riccati.hpp"

namespace masterlq {

/// Linear master field U(X, t) = P(t) X + Sigma(t) E[X].
struct MasterField {
  enum class Kind { MFC, MFG_GRADIENT, MFG_SCALAR };
  Kind kind;
  std::shared_ptr<const RiccatiSolution> sol;

  /// Throws KindMismatch if `kind` does not fit the solution.
  MasterField(Kind kind, std::shared_ptr<const RiccatiSolution> sol);
};

/// Riccati values and their time derivatives at t. Derivatives come from a
/// fourth-order stencil on the stored nodes, interpolated linearly off-node.
struct RiccatiJet {
  RiccatiState value;
  RiccatiState rate;
};

RiccatiJet riccati_jet(const RiccatiSolution& sol, double t);

/// V(X, t) = 1/2 E[X'PX] + 1/2 E[X]'Sigma E[X] + lambda over the empirical law.
double eval_value(const RiccatiSolution& sol, const ParticleEnsemble& X, double t);

/// Rows P(t) x_i + Sigma(t) y.
RowMatrixXd eval_master_field(const MasterField& field, const ParticleEnsemble& X, double t);

struct ResidualReport {
  double residual_norm = 0.0;
  double symmetry_violation = 0.0;  // MFG gradient form only
  ojson term_breakdown = ojson::object();

  ojson to_json() const;
};

/// Max over particles of |dU/dt + D2 terms + DU.G + D_xH + copy term|.
/// The D2 terms are exactly zero for the linear field.
ResidualReport residual_master_mfc(const LQModel& model, const RiccatiSolution& sol,
                                   const ParticleEnsemble& X, double t);
/// Gradient-form MFG master equation; also reports ||Sigma - Sigma'||_inf.
ResidualReport residual_master_mfg_gradient(const LQModel& model, const RiccatiSolution& sol,
                                            const ParticleEnsemble& X, double t);

struct ScalarResidual {
  double residual = 0.0;
  double terminal_mismatch = 0.0;  // U(x, X, T) - h(x, m), only at t = T
  ojson term_breakdown = ojson::object();

  ojson to_json() const;
};

/// Scalar MFG master equation for U(x, X, t) = 1/2 x'Px + x'Sigma y + 1/2 y'Gamma y + mu.
ScalarResidual residual_master_mfg_scalar(const LQModel& model, const RiccatiSolution& sol,
                                          const Eigen::VectorXd& x, const ParticleEnsemble& X,
                                          double t);

/// Mean flow dy/dt = (A + Abar - M(P + Sigma)) y on the Riccati grid, and for MFC
/// the x-independent part c(t) of the decoupling field.
struct MeanFlow {
  std::vector<Eigen::VectorXd> y;
  std::vector<double> c;  // MFC only
};

MeanFlow mean_flow(const LQModel& model, const RiccatiSolution& sol, const Eigen::VectorXd& y0);

/// u(x, t_k) = U(x, m(t_k), t_k) along the mean flow.
double decoupling_field(const LQModel& model, const RiccatiSolution& sol, const MeanFlow& flow,
                        int k, const Eigen::VectorXd& x);

struct UncouplingConfig {
  Eigen::VectorXd y0;  // defaults to ones(n)
  int nx = 50;
  int nt = 50;
  double xmax = 2.0;
};

/// Checks that u(x, t) = U(x, m(t), t) solves the HJB equation of the uncoupled system.
Report consistency_uncoupling(const LQModel& model, const RiccatiSolution& sol,
                              const UncouplingConfig& cfg = {}, const Tolerances& tol = {});

/// Node indices of the residual panel {0, T/4, T/2, 3T/4, T-}.
std::vector<int> residual_panel(const TimeGrid& grid);

}  // namespace masterlq
