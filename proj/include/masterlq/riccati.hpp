#pragma once

#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "masterlq/lq_model.hpp"

namespace masterlq {

enum class SolutionKind { MFC, MFG };

std::string to_string(SolutionKind kind);

/// Uniform grid 0 = t_0 < ... < t_K = T.
class TimeGrid {
 public:
  TimeGrid(double T, int K);

  double T() const noexcept { return T_; }
  int K() const noexcept { return K_; }
  double h() const noexcept { return T_ / K_; }
  /// t_K is exactly T.
  double node(int k) const noexcept { return k == K_ ? T_ : k * h(); }

 private:
  double T_;
  int K_;
};

/// State of the backward Riccati systems. Unused blocks are 0x0.
struct RiccatiState {
  MatrixXd P;
  MatrixXd Sigma;
  MatrixXd Gamma;
  double scalar = 0.0;  // lambda (MFC) or mu (MFG)
};

RiccatiState operator+(const RiccatiState& a, const RiccatiState& b);
RiccatiState operator*(double s, const RiccatiState& a);

struct RiccatiSolution {
  SolutionKind kind;
  TimeGrid grid;
  std::vector<MatrixXd> P;
  std::vector<MatrixXd> Sigma;
  std::vector<MatrixXd> Gamma;   // MFG only
  std::vector<double> lambda;    // MFC only
  std::vector<double> mu;        // MFG only

  RiccatiState state(int k) const;
};

struct RiccatiValue {
  MatrixXd P;
  MatrixXd Sigma;
  std::optional<MatrixXd> Gamma;
  std::optional<double> lambda;
  std::optional<double> mu;
};

inline constexpr double kBlowUpThreshold = 1e12;

/// Classical RK4 applied backward from the terminal value on a uniform grid.
/// Throws NumericalFailure with the node index on non-finite values.
std::vector<MatrixXd> rk4_backward(
    const std::function<MatrixXd(double, const MatrixXd&)>& rhs, const MatrixXd& terminal,
    const TimeGrid& grid);

/// d/dt of (P, Sigma, lambda) for mean field type control.
RiccatiState mfc_rhs(const LQModel& model, const RiccatiState& s);
/// d/dt of (P, Sigma, Gamma, mu) for the mean field game.
RiccatiState mfg_rhs(const LQModel& model, const RiccatiState& s);

RiccatiState mfc_terminal(const LQModel& model);
RiccatiState mfg_terminal(const LQModel& model);

/// Throws RiccatiBlowUp when a norm exceeds kBlowUpThreshold before t = 0.
RiccatiSolution solve_mfc(const LQModel& model, const TimeGrid& grid);
RiccatiSolution solve_mfg(const LQModel& model, const TimeGrid& grid);
RiccatiSolution solve(const LQModel& model, const TimeGrid& grid, SolutionKind kind);

struct SymmetryDiagnosis {
  bool terminal_symmetric;  // QbarT ST == ST' QbarT
  bool running_symmetric;   // Qbar S == S' Qbar
  bool abar_zero;
  bool self_adjoint_possible;
};

SymmetryDiagnosis check_symmetry_conditions(const LQModel& model);

/// Linear interpolation between bracketing nodes, exact at nodes.
RiccatiValue eval_at(const RiccatiSolution& sol, double t);

/// Fourth-order finite-difference time derivative of the stored nodes at node k.
/// Requires K >= 4.
RiccatiState nodal_time_derivative(const RiccatiSolution& sol, int k);

/// Largest ||Sigma(t_k) - Sigma(t_k)'||_inf over the grid.
double max_sigma_asymmetry(const RiccatiSolution& sol);

void write_csv(std::ostream& out, const RiccatiSolution& sol);

}  // namespace masterlq
