#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

#include "json.hpp"

namespace masterlq {

using Eigen::MatrixXd;
using Eigen::VectorXd;

/// Raw data of the linear-quadratic mean field problem.
///
/// Running cost  f(x,m,v) = 1/2 [x'Qx + v'Rv + (x - Sy)'Qbar(x - Sy)]
/// Dynamics      g(x,m,v) = Ax + Abar y + Bv
/// Terminal cost h(x,m)   = 1/2 [x'QT x + (x - ST y)'QbarT(x - ST y)]
/// where y is the first moment of m. Noise is sigma dw + beta db.
struct LQModelSpec {
  int n = 1;
  int d = 1;
  MatrixXd A, Abar, B;
  MatrixXd Q, Qbar, S;
  MatrixXd R;
  MatrixXd QT, QbarT, ST;
  double sigma = 0.0;
  double beta = 0.0;
  double T = 1.0;
  bool convex = false;

  /// All matrices zero except R = I.
  static LQModelSpec zeros(int n, int d);
};

/// First moment of the current measure.
struct MeanVector {
  VectorXd value;
};

struct ValidationReport {
  std::vector<std::string> violations;
  bool valid() const { return violations.empty(); }
};

inline constexpr double kSymmetryTolerance = 1e-12;

ValidationReport validate(const LQModelSpec& spec);

/// Validated model with R^{-1}B' precomputed by Cholesky.
class LQModel {
 public:
  /// Throws InvalidModel listing every violated invariant.
  explicit LQModel(LQModelSpec spec);

  const LQModelSpec& spec() const noexcept { return spec_; }
  int n() const noexcept { return spec_.n; }
  int d() const noexcept { return spec_.d; }
  double T() const noexcept { return spec_.T; }
  double sigma() const noexcept { return spec_.sigma; }
  double beta() const noexcept { return spec_.beta; }

  /// R^{-1} B'  (d x n)
  const MatrixXd& rinv_bt() const noexcept { return rinv_bt_; }
  /// B R^{-1} B'  (n x n)
  const MatrixXd& b_rinv_bt() const noexcept { return b_rinv_bt_; }

 private:
  LQModelSpec spec_;
  MatrixXd rinv_bt_;
  MatrixXd b_rinv_bt_;
};

double running_cost(const LQModel& model, const VectorXd& x, const MeanVector& y,
                    const VectorXd& v);
VectorXd dynamics(const LQModel& model, const VectorXd& x, const MeanVector& y,
                  const VectorXd& v);
double terminal_cost(const LQModel& model, const VectorXd& x, const MeanVector& y);

double hamiltonian(const LQModel& model, const VectorXd& x, const MeanVector& y,
                   const VectorXd& q);
/// Unique minimiser of f + q.g over controls: -R^{-1}B'q.
VectorXd optimal_feedback(const LQModel& model, const VectorXd& x, const MeanVector& y,
                          const VectorXd& q);
/// Optimal drift G = Ax + Abar y - B R^{-1} B' q.
VectorXd drift_G(const LQModel& model, const VectorXd& x, const MeanVector& y,
                 const VectorXd& q);

// Model files: JSON with n, d, T, sigma, beta, convex and row-major matrices.
// Missing matrices default to zero; R is mandatory.
LQModelSpec model_from_json(const nlohmann::json& j);
nlohmann::json model_to_json(const LQModelSpec& spec);
LQModelSpec load_model_file(const std::string& path);

MatrixXd matrix_from_json(const nlohmann::json& j);
nlohmann::json matrix_to_json(const MatrixXd& m);

/// max_i sum_j |M_ij - M_ji|
double asymmetry_inf_norm(const MatrixXd& m);

}  // namespace masterlq
