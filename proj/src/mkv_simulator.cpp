#include "masterlq/mkv_simulator.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>
#include <stdexcept>

#include "masterlq/errors.hpp"
#include "masterlq/parallel.hpp"
#include "masterlq/rng.hpp"

namespace masterlq {

// ---------------------------------------------------------------------------
// FeedbackPolicy

FeedbackPolicy FeedbackPolicy::optimal(const LQModel& model,
                                       std::shared_ptr<const RiccatiSolution> sol) {
  if (!sol) throw std::invalid_argument("FeedbackPolicy::optimal: no Riccati solution");
  FeedbackPolicy p;
  p.kind_ = sol->kind == SolutionKind::MFC ? Kind::OPTIMAL_MFC : Kind::OPTIMAL_MFG;
  p.sol_ = std::move(sol);
  p.rinv_bt_ = model.rinv_bt();
  return p;
}

FeedbackPolicy FeedbackPolicy::perturbed(const LQModel& model,
                                         std::shared_ptr<const RiccatiSolution> sol, double eps,
                                         const MatrixXd& D1, const MatrixXd& D2) {
  FeedbackPolicy p = optimal(model, std::move(sol));
  if (D1.rows() != model.d() || D1.cols() != model.n() || D2.rows() != model.d() ||
      D2.cols() != model.n()) {
    throw DimensionMismatch("perturbation directions must be d x n");
  }
  p.kind_ = Kind::PERTURBED;
  p.K1_ = D1;
  p.K2_ = D2;
  p.eps_ = eps;
  return p;
}

FeedbackPolicy FeedbackPolicy::custom_linear(MatrixXd K1, MatrixXd K2) {
  if (K1.rows() != K2.rows() || K1.cols() != K2.cols()) {
    throw DimensionMismatch("custom feedback gains must have equal shapes");
  }
  FeedbackPolicy p;
  p.kind_ = Kind::CUSTOM_LINEAR;
  p.K1_ = std::move(K1);
  p.K2_ = std::move(K2);
  return p;
}

FeedbackPolicy FeedbackPolicy::zero(int d, int n) {
  return custom_linear(MatrixXd::Zero(d, n), MatrixXd::Zero(d, n));
}

std::pair<MatrixXd, MatrixXd> FeedbackPolicy::gains(double t) const {
  if (kind_ == Kind::CUSTOM_LINEAR) return {K1_, K2_};
  const auto v = eval_at(*sol_, t);
  MatrixXd K1 = -rinv_bt_ * v.P;
  MatrixXd K2 = -rinv_bt_ * v.Sigma;
  if (kind_ == Kind::PERTURBED) {
    K1 += eps_ * K1_;
    K2 += eps_ * K2_;
  }
  return {std::move(K1), std::move(K2)};
}

void FeedbackPolicy::check_dimensions(const LQModel& model) const {
  const auto [K1, K2] = gains(0.0);
  if (K1.rows() != model.d() || K1.cols() != model.n() || K2.rows() != model.d() ||
      K2.cols() != model.n()) {
    throw DimensionMismatch("feedback gains are " + std::to_string(K1.rows()) + "x" +
                            std::to_string(K1.cols()) + ", expected " +
                            std::to_string(model.d()) + "x" + std::to_string(model.n()));
  }
  if (sol_ && std::abs(sol_->grid.T() - model.T()) > 1e-12 * std::max(1.0, model.T())) {
    throw DimensionMismatch("Riccati horizon differs from the model horizon");
  }
}

std::pair<MatrixXd, MatrixXd> perturbation_direction(int d, int n, std::uint64_t seed) {
  std::vector<double> z(2 * d * n);
  fill_normals(seed, NoiseStream::kPerturbation, 0, 0, z.data(), static_cast<int>(z.size()));
  double norm = 0.0;
  for (double v : z) norm += v * v;
  norm = std::sqrt(norm);
  MatrixXd D1(d, n), D2(d, n);
  for (int i = 0; i < d; ++i) {
    for (int j = 0; j < n; ++j) {
      D1(i, j) = z[i * n + j] / norm;
      D2(i, j) = z[d * n + i * n + j] / norm;
    }
  }
  return {D1, D2};
}

// ---------------------------------------------------------------------------
// Simulation

namespace {

// Per-step coefficients: drift x -> Acl x + c, running cost 1/2 x'Mx + l.x + c0.
struct StepCoefficients {
  MatrixXd Acl, M;
  VectorXd c, l;
  double c0 = 0.0;
};

StepCoefficients step_coefficients(const LQModelSpec& s, const MatrixXd& K1, const MatrixXd& K2,
                                   const VectorXd& y) {
  StepCoefficients out;
  out.Acl = s.A + s.B * K1;
  out.c = (s.Abar + s.B * K2) * y;
  out.M = s.Q + s.Qbar + K1.transpose() * s.R * K1;
  out.M = 0.5 * (out.M + out.M.transpose());
  const VectorXd v0 = K2 * y;
  const VectorXd sy = s.S * y;
  out.l = K1.transpose() * (s.R * v0) - s.Qbar * sy;
  out.c0 = 0.5 * (v0.dot(s.R * v0) + sy.dot(s.Qbar * sy));
  return out;
}

// Per-block sums of x, x x' and a scalar, combined in block order afterwards.
struct BlockSums {
  std::vector<VectorXd> first;
  std::vector<MatrixXd> second;
  std::vector<double> scalar;
  std::vector<char> finite;

  BlockSums(std::size_t blocks, int n)
      : first(blocks, VectorXd::Zero(n)),
        second(blocks, MatrixXd::Zero(n, n)),
        scalar(blocks, 0.0),
        finite(blocks, 1) {}

  void reset() {
    for (auto& v : first) v.setZero();
    for (auto& m : second) m.setZero();
    std::fill(scalar.begin(), scalar.end(), 0.0);
  }
};

void accumulate_moments(const double* x, int n, VectorXd& first, MatrixXd& second) {
  for (int a = 0; a < n; ++a) {
    first(a) += x[a];
    for (int b = 0; b < n; ++b) second(a, b) += x[a] * x[b];
  }
}

double quadratic(const MatrixXd& M, const VectorXd& l, double c0, const double* x, int n) {
  double acc = c0;
  for (int a = 0; a < n; ++a) {
    double row = 0.0;
    for (int b = 0; b < n; ++b) row += M(a, b) * x[b];
    acc += 0.5 * x[a] * row + l(a) * x[a];
  }
  return acc;
}

}  // namespace

Trajectory simulate(const LQModel& model, const FeedbackPolicy& policy,
                    const ParticleEnsemble& X0, const SimConfig& cfg) {
  const int n = model.n();
  if (X0.dim() != n) {
    throw DimensionMismatch("initial ensemble has dimension " + std::to_string(X0.dim()) +
                            ", model has n=" + std::to_string(n));
  }
  if (cfg.steps < 1) throw std::invalid_argument("simulate: steps must be >= 1");
  policy.check_dimensions(model);
  const auto& s = model.spec();
  const auto N = static_cast<std::size_t>(X0.size());
  const std::size_t blocks = block_count(N);

  Trajectory traj;
  traj.grid = TimeGrid(model.T(), cfg.steps);
  const double dt = traj.grid.h();
  const double sq = std::sqrt(dt);
  const double sig = s.sigma * sq;
  const double bet = s.beta * sq;

  RowMatrixXd X = X0.states();
  traj.particle_cost = VectorXd::Zero(static_cast<Eigen::Index>(N));
  BlockSums sums(blocks, n);
  parallel_blocks(N, [&](std::size_t b, std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      accumulate_moments(X.data() + i * n, n, sums.first[b], sums.second[b]);
    }
  });
  auto reduce_moments = [&] {
    VectorXd first = VectorXd::Zero(n);
    MatrixXd second = MatrixXd::Zero(n, n);
    for (std::size_t b = 0; b < blocks; ++b) {
      first += sums.first[b];
      second += sums.second[b];
    }
    traj.mean.push_back(first / static_cast<double>(N));
    traj.second_moment.push_back(second / static_cast<double>(N));
  };
  reduce_moments();
  traj.cost_partial.push_back(0.0);
  VectorXd b_path = VectorXd::Zero(n);
  traj.common_path.push_back(b_path);
  if (cfg.record_snapshots) traj.snapshots.push_back(X);

  VectorXd eta(n);
  for (int k = 0; k < cfg.steps; ++k) {
    const double t = traj.grid.node(k);
    const VectorXd y = traj.mean.back();
    const auto [K1, K2] = policy.gains(t);
    const auto co = step_coefficients(s, K1, K2, y);
    if (bet != 0.0) {
      fill_normals(cfg.common(), NoiseStream::kCommon, 0, static_cast<std::uint32_t>(k),
                   eta.data(), n);
    } else {
      eta.setZero();
    }
    b_path += sq * eta;
    sums.reset();
    parallel_blocks(N, [&](std::size_t b, std::size_t begin, std::size_t end) {
      std::vector<double> xi(n, 0.0), drift(n);
      double cost = 0.0;
      bool finite = true;
      for (std::size_t i = begin; i < end; ++i) {
        double* x = X.data() + i * n;
        const double f = quadratic(co.M, co.l, co.c0, x, n);
        traj.particle_cost(static_cast<Eigen::Index>(i)) += f * dt;
        cost += f;
        if (sig != 0.0) {
          fill_normals(cfg.seed, NoiseStream::kIdiosyncratic, static_cast<std::uint32_t>(i),
                       static_cast<std::uint32_t>(k), xi.data(), n);
        }
        for (int a = 0; a < n; ++a) {
          double g = co.c(a);
          for (int c = 0; c < n; ++c) g += co.Acl(a, c) * x[c];
          drift[a] = g;
        }
        for (int a = 0; a < n; ++a) {
          x[a] += drift[a] * dt + sig * xi[a] + bet * eta(a);
          finite = finite && std::isfinite(x[a]);
        }
        accumulate_moments(x, n, sums.first[b], sums.second[b]);
      }
      sums.scalar[b] = cost;
      sums.finite[b] = finite ? 1 : 0;
    });
    for (std::size_t b = 0; b < blocks; ++b) {
      if (!sums.finite[b]) throw NumericalFailure("non-finite particle state at step", k + 1);
    }
    double cost = 0.0;
    for (double c : sums.scalar) cost += c;
    traj.cost_partial.push_back(traj.cost_partial.back() + dt * cost / static_cast<double>(N));
    reduce_moments();
    traj.common_path.push_back(b_path);
    if (cfg.record_snapshots) traj.snapshots.push_back(X);
  }

  // Terminal cost 1/2 x'(QT + QbarT)x - x'QbarT ST y + 1/2 y'ST'QbarT ST y.
  const VectorXd& yT = traj.mean.back();
  MatrixXd MT = s.QT + s.QbarT;
  MT = 0.5 * (MT + MT.transpose());
  const VectorXd sy = s.ST * yT;
  const VectorXd lT = -s.QbarT * sy;
  const double cT = 0.5 * sy.dot(s.QbarT * sy);
  parallel_blocks(N, [&](std::size_t, std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      traj.particle_cost(static_cast<Eigen::Index>(i)) +=
          quadratic(MT, lT, cT, X.data() + i * n, n);
    }
  });
  traj.final_states = std::move(X);
  return traj;
}

CostEstimate estimate_cost(const Trajectory& traj) {
  const auto& c = traj.particle_cost;
  const auto N = c.size();
  if (N < 1) throw std::invalid_argument("estimate_cost: empty trajectory");
  double sum = 0.0;
  for (Eigen::Index b = 0; b < N; b += static_cast<Eigen::Index>(kParallelBlock)) {
    sum += c.segment(b, std::min<Eigen::Index>(kParallelBlock, N - b)).sum();
  }
  const double mean = sum / static_cast<double>(N);
  double ss = 0.0;
  for (Eigen::Index i = 0; i < N; ++i) ss += (c(i) - mean) * (c(i) - mean);
  CostEstimate out;
  out.J_hat = mean;
  out.std_error = N > 1 ? std::sqrt(ss / static_cast<double>(N - 1) / static_cast<double>(N)) : 0.0;
  return out;
}

double mfc_value(const RiccatiSolution& sol, const ParticleEnsemble& X0) {
  if (sol.kind != SolutionKind::MFC) throw KindMismatch("value requires an MFC Riccati solution");
  const MatrixXd& P = sol.P.front();
  if (P.rows() != X0.dim()) throw DimensionMismatch("ensemble dimension differs from P");
  const VectorXd y = X0.mean();
  return 0.5 * (P.cwiseProduct(X0.second_moment())).sum() + 0.5 * y.dot(sol.Sigma.front() * y) +
         sol.lambda.front();
}

Report check_cost_matches_value(const LQModel& model, std::shared_ptr<const RiccatiSolution> sol,
                                const ParticleEnsemble& X0, const SimConfig& cfg,
                                const Tolerances& tol) {
  if (!sol || sol->kind != SolutionKind::MFC) {
    throw KindMismatch("cost matching requires an MFC Riccati solution");
  }
  const double V = mfc_value(*sol, X0);
  const auto traj = simulate(model, FeedbackPolicy::optimal(model, sol), X0, cfg);
  const auto est = estimate_cost(traj);
  const double dt = traj.grid.h();
  const double allowance =
      tol.get("cost_stderr_factor") * est.std_error + tol.get("cost_dt_constant") * dt;
  Report r;
  r.check = "cost_matches_value";
  r.data["J_hat"] = est.J_hat;
  r.data["stderr"] = est.std_error;
  r.data["V_reference"] = V;
  r.data["abs_err"] = std::abs(est.J_hat - V);
  r.data["allowance"] = allowance;
  r.data["dt"] = dt;
  r.data["particles"] = X0.size();
  r.pass = std::abs(est.J_hat - V) <= allowance;
  return r;
}

Report check_optimality_gap(const LQModel& model, std::shared_ptr<const RiccatiSolution> sol,
                            const ParticleEnsemble& X0, const SimConfig& cfg,
                            const std::vector<double>& eps_list,
                            const std::optional<std::pair<MatrixXd, MatrixXd>>& direction,
                            const Tolerances& tol) {
  if (!sol) throw std::invalid_argument("check_optimality_gap: no Riccati solution");
  const auto [D1, D2] = direction ? *direction : perturbation_direction(model.d(), model.n(), cfg.seed);
  const auto base = simulate(model, FeedbackPolicy::optimal(model, sol), X0, cfg);
  const auto J0 = estimate_cost(base);
  const double k = tol.get("cost_stderr_factor");

  Report r;
  r.check = "optimality_gap";
  r.data["J_optimal"] = J0.J_hat;
  r.data["stderr"] = J0.std_error;
  r.data["direction"] = {{"D1", matrix_to_json(D1)}, {"D2", matrix_to_json(D2)}};
  ojson rows = ojson::array();
  bool pass = true;
  std::vector<std::pair<double, double>> gaps;
  for (double eps : eps_list) {
    double gap = 0.0, gap_err = 0.0, J = J0.J_hat;
    if (eps != 0.0) {
      const auto tr =
          simulate(model, FeedbackPolicy::perturbed(model, sol, eps, D1, D2), X0, cfg);
      J = estimate_cost(tr).J_hat;
      Trajectory diff;
      diff.particle_cost = tr.particle_cost - base.particle_cost;
      const auto d = estimate_cost(diff);
      gap = d.J_hat;
      gap_err = d.std_error;
      pass = pass && gap > 0.0 && J >= J0.J_hat - k * J0.std_error;
    }
    gaps.emplace_back(eps, gap);
    rows.push_back({{"eps", eps}, {"J", J}, {"gap", gap}, {"gap_stderr", gap_err}});
  }
  r.data["perturbations"] = rows;

  ojson ratios = ojson::array();
  for (std::size_t i = 0; i < gaps.size(); ++i) {
    for (std::size_t j = 0; j < gaps.size(); ++j) {
      const double e1 = gaps[i].first, e2 = gaps[j].first;
      if (e1 > 0 && std::abs(e2 - 2.0 * e1) <= 1e-12 * e2) {
        const double ratio = gaps[j].second / gaps[i].second;
        const bool ok = ratio >= tol.get("gap_ratio_lo") && ratio <= tol.get("gap_ratio_hi");
        pass = pass && ok;
        ratios.push_back({{"eps", e1}, {"ratio", ratio}, {"pass", ok}});
      }
    }
  }
  r.data["ratios"] = ratios;
  double num = 0.0, den = 0.0;
  for (const auto& [e, g] : gaps) {
    num += g * e * e;
    den += e * e * e * e;
  }
  if (den > 0) {
    const double coef = num / den;
    r.data["quadratic_coefficient"] = coef;
    pass = pass && coef > 0.0;
  }
  r.pass = pass;
  return r;
}

// ---------------------------------------------------------------------------
// Maximum principle

RowMatrixXd lagrangian_gradient(const LQModel& model, const RowMatrixXd& X, const RowMatrixXd& Z) {
  const auto& s = model.spec();
  if (X.cols() != model.n() || Z.cols() != model.n() || X.rows() != Z.rows() || X.rows() < 1) {
    throw DimensionMismatch("lagrangian_gradient: X and Z must be N x n");
  }
  const VectorXd y = blocked_column_sums(X) / static_cast<double>(X.rows());
  const VectorXd zbar = blocked_column_sums(Z) / static_cast<double>(Z.rows());
  const MatrixXd QS = s.Qbar * s.S;
  const VectorXd shift = -QS * y + (s.S.transpose() * QS - s.S.transpose() * s.Qbar) * y +
                         s.Abar.transpose() * zbar;
  RowMatrixXd out = X * (s.Q + s.Qbar).transpose() + Z * s.A;
  out.rowwise() += shift.transpose();
  return out;
}

double lagrangian_value(const LQModel& model, const RowMatrixXd& X, const RowMatrixXd& V,
                        const RowMatrixXd& Z) {
  if (X.rows() != V.rows() || X.rows() != Z.rows() || V.cols() != model.d()) {
    throw DimensionMismatch("lagrangian_value: shapes differ");
  }
  const MeanVector y{blocked_column_sums(X) / static_cast<double>(X.rows())};
  double acc = 0.0;
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    const VectorXd x = X.row(i).transpose();
    const VectorXd v = V.row(i).transpose();
    acc += running_cost(model, x, y, v) + Z.row(i).dot(dynamics(model, x, y, v).transpose());
  }
  return acc / static_cast<double>(X.rows());
}

Report check_max_principle(const LQModel& model, std::shared_ptr<const RiccatiSolution> sol,
                           const ParticleEnsemble& X0, const SimConfig& cfg, MaxPrincipleMode mode,
                           const Tolerances& tol) {
  if (!sol || sol->kind != SolutionKind::MFC) {
    throw KindMismatch("maximum principle check requires an MFC Riccati solution");
  }
  const bool stochastic = mode == MaxPrincipleMode::STOCHASTIC;
  LQModelSpec spec = model.spec();
  if (!stochastic) spec.sigma = spec.beta = 0.0;
  const LQModel m(spec);
  SimConfig c = cfg;
  c.record_snapshots = true;
  const auto traj = simulate(m, FeedbackPolicy::optimal(m, sol), X0, c);
  const int n = m.n();
  const auto N = X0.size();
  const double dt = traj.grid.h();
  const double sq = std::sqrt(dt);

  auto costate = [&](int k) {
    const auto v = eval_at(*sol, traj.grid.node(k));
    RowMatrixXd Z = traj.snapshots[k] * v.P.transpose();
    Z.rowwise() += (v.Sigma * traj.mean[k]).transpose();
    return std::make_pair(Z, v);
  };

  double det_max = 0.0;
  double stoch_sum = 0.0;
  auto [Z, val] = costate(0);
  VectorXd eta(n), w(n);
  for (int k = 0; k < traj.steps(); ++k) {
    auto [Znext, vnext] = costate(k + 1);
    RowMatrixXd r = Znext - Z + dt * lagrangian_gradient(m, traj.snapshots[k], Z);
    if (stochastic) {
      // Subtract K dw = sigma(P dw_i + Sigma mean(dw)) + beta(P + Sigma) db at t_k.
      RowMatrixXd dW(N, n);
      for (Eigen::Index i = 0; i < N; ++i) {
        if (spec.sigma != 0.0) {
          fill_normals(c.seed, NoiseStream::kIdiosyncratic, static_cast<std::uint32_t>(i),
                       static_cast<std::uint32_t>(k), w.data(), n);
          dW.row(i) = sq * w.transpose();
        } else {
          dW.row(i).setZero();
        }
      }
      const VectorXd dw_mean = blocked_column_sums(dW) / static_cast<double>(N);
      r -= spec.sigma * dW * val.P.transpose();
      r.rowwise() -= (spec.sigma * val.Sigma * dw_mean).transpose();
      if (spec.beta != 0.0) {
        fill_normals(c.common(), NoiseStream::kCommon, 0, static_cast<std::uint32_t>(k),
                     eta.data(), n);
        r.rowwise() -= (spec.beta * sq * (val.P + val.Sigma) * eta).transpose();
      }
      stoch_sum += r.rowwise().squaredNorm().sum() / static_cast<double>(N);
    } else {
      det_max = std::max(det_max, r.cwiseAbs().maxCoeff() / dt);
    }
    Z = std::move(Znext);
    val = std::move(vnext);
  }

  // Terminal co-state against D_X h.
  const auto& s = m.spec();
  const RowMatrixXd& XT = traj.snapshots.back();
  const VectorXd& yT = traj.mean.back();
  const MatrixXd QST = s.QbarT * s.ST;
  RowMatrixXd Dh = XT * (s.QT + s.QbarT).transpose();
  Dh.rowwise() += (-QST * yT + (s.ST.transpose() * QST - s.ST.transpose() * s.QbarT) * yT)
                      .transpose();
  const double terminal = (Z - Dh).cwiseAbs().maxCoeff();

  const double residual = stochastic ? std::sqrt(stoch_sum) : det_max;
  const double bound = tol.get("mp_dt_constant") * dt;
  Report r;
  r.check = "max_principle";
  r.data["mode"] = stochastic ? "stochastic" : "deterministic";
  r.data["dt"] = dt;
  r.data["residual"] = residual;
  r.data["residual_over_dt"] = residual / dt;
  r.data["bound"] = bound;
  r.data["terminal_error"] = terminal;
  r.pass = std::isfinite(residual) && residual <= bound && terminal <= tol.get("mp_terminal");
  return r;
}

void write_trajectory_csv(std::ostream& out, const Trajectory& traj) {
  const int n = traj.mean.empty() ? 0 : static_cast<int>(traj.mean.front().size());
  out << "t";
  for (int a = 0; a < n; ++a) out << ",y_" << a;
  for (int a = 0; a < n; ++a) {
    for (int b = a; b < n; ++b) out << ",M_" << a << '_' << b;
  }
  out << ",running_cost\n";
  char buf[32];
  auto put = [&](double v) {
    std::snprintf(buf, sizeof buf, "%.17g", v);
    out << buf;
  };
  for (int k = 0; k <= traj.steps(); ++k) {
    put(traj.grid.node(k));
    for (int a = 0; a < n; ++a) {
      out << ',';
      put(traj.mean[k](a));
    }
    for (int a = 0; a < n; ++a) {
      for (int b = a; b < n; ++b) {
        out << ',';
        put(traj.second_moment[k](a, b));
      }
    }
    out << ',';
    put(traj.cost_partial[k]);
    out << '\n';
  }
}

}  // namespace masterlq
