#pragma once

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "masterlq/lq_model.hpp"
#include "masterlq/particles.hpp"
#include "masterlq/report.hpp"
#include "masterlq/riccati.hpp"

namespace masterlq {

struct SimConfig {
  int steps = 1000;
  std::uint64_t seed = 0;
  /// Seed of the common-noise stream; defaults to `seed`.
  std::optional<std::uint64_t> common_seed;
  /// Keep every ensemble state (steps + 1 of them).
  bool record_snapshots = false;

  std::uint64_t common() const { return common_seed.value_or(seed); }
};

/// Linear feedback v = K1(t) x + K2(t) y.
class FeedbackPolicy {
 public:
  enum class Kind { OPTIMAL_MFC, OPTIMAL_MFG, PERTURBED, CUSTOM_LINEAR };

  /// -R^{-1}B'(P(t) x + Sigma(t) y) from a Riccati solution of either kind.
  static FeedbackPolicy optimal(const LQModel& model, std::shared_ptr<const RiccatiSolution> sol);
  /// Optimal gains shifted by eps (D1, D2).
  static FeedbackPolicy perturbed(const LQModel& model, std::shared_ptr<const RiccatiSolution> sol,
                                  double eps, const MatrixXd& D1, const MatrixXd& D2);
  static FeedbackPolicy custom_linear(MatrixXd K1, MatrixXd K2);
  static FeedbackPolicy zero(int d, int n);

  Kind kind() const noexcept { return kind_; }
  /// (K1, K2) at time t; d x n each.
  std::pair<MatrixXd, MatrixXd> gains(double t) const;
  void check_dimensions(const LQModel& model) const;

 private:
  Kind kind_ = Kind::CUSTOM_LINEAR;
  std::shared_ptr<const RiccatiSolution> sol_;
  MatrixXd rinv_bt_;
  MatrixXd K1_, K2_;  // custom gains or perturbation directions
  double eps_ = 0.0;
};

/// Unit-Frobenius-norm perturbation direction (D1, D2), drawn from the seed.
std::pair<MatrixXd, MatrixXd> perturbation_direction(int d, int n, std::uint64_t seed);

struct Trajectory {
  TimeGrid grid{1.0, 1};
  std::vector<VectorXd> mean;           // empirical mean at t_k, k = 0..steps
  std::vector<MatrixXd> second_moment;  // empirical E[x x'] at t_k
  std::vector<VectorXd> common_path;    // b(t_k), b(0) = 0
  std::vector<double> cost_partial;     // running-cost partial sums, left endpoint
  VectorXd particle_cost;               // per-particle running + terminal cost
  RowMatrixXd final_states;
  std::vector<RowMatrixXd> snapshots;   // only with record_snapshots

  int steps() const { return grid.K(); }
};

/// Euler-Maruyama for dx = g dt + sigma dw + beta db with y the empirical mean.
/// Deterministic in (seed, common seed, N, steps) for every worker count.
Trajectory simulate(const LQModel& model, const FeedbackPolicy& policy,
                    const ParticleEnsemble& X0, const SimConfig& cfg);

struct CostEstimate {
  double J_hat = 0.0;
  double std_error = 0.0;
};

CostEstimate estimate_cost(const Trajectory& traj);

/// V(m, 0) = 1/2 E[x'P x] + 1/2 y'Sigma y + lambda at the empirical law of X0.
double mfc_value(const RiccatiSolution& sol, const ParticleEnsemble& X0);

Report check_cost_matches_value(const LQModel& model, std::shared_ptr<const RiccatiSolution> sol,
                                const ParticleEnsemble& X0, const SimConfig& cfg,
                                const Tolerances& tol = {});

/// With `direction` unset the direction comes from perturbation_direction(cfg.seed).
Report check_optimality_gap(const LQModel& model, std::shared_ptr<const RiccatiSolution> sol,
                            const ParticleEnsemble& X0, const SimConfig& cfg,
                            const std::vector<double>& eps_list,
                            const std::optional<std::pair<MatrixXd, MatrixXd>>& direction = {},
                            const Tolerances& tol = {});

enum class MaxPrincipleMode { DETERMINISTIC, STOCHASTIC };

/// D_X L for each particle (rows), given states X and co-states Z.
RowMatrixXd lagrangian_gradient(const LQModel& model, const RowMatrixXd& X, const RowMatrixXd& Z);
/// L = E[f(x, y, v) + z.g(x, y, v)] over the empirical law.
double lagrangian_value(const LQModel& model, const RowMatrixXd& X, const RowMatrixXd& V,
                        const RowMatrixXd& Z);

Report check_max_principle(const LQModel& model, std::shared_ptr<const RiccatiSolution> sol,
                           const ParticleEnsemble& X0, const SimConfig& cfg, MaxPrincipleMode mode,
                           const Tolerances& tol = {});

/// Rows: t, mean components, second-moment entries, running-cost partial sum.
void write_trajectory_csv(std::ostream& out, const Trajectory& traj);

}  // namespace masterlq
