#include "masterlq/master_verifier.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "masterlq/errors.hpp"

namespace masterlq {

MasterField::MasterField(Kind k, std::shared_ptr<const RiccatiSolution> s)
    : kind(k), sol(std::move(s)) {
  if (!sol) throw std::invalid_argument("MasterField: no Riccati solution");
  const bool wants_mfc = kind == Kind::MFC;
  if (wants_mfc != (sol->kind == SolutionKind::MFC)) {
    throw KindMismatch("master field kind does not match a " + to_string(sol->kind) +
                       " Riccati solution");
  }
}

namespace {

void require_time(const RiccatiSolution& sol, double t) {
  if (!(t >= 0.0 && t <= sol.grid.T())) {
    throw std::out_of_range("t=" + std::to_string(t) + " outside [0, " +
                            std::to_string(sol.grid.T()) + "]");
  }
}

void require_kind(const RiccatiSolution& sol, SolutionKind kind, const char* what) {
  if (sol.kind != kind) {
    throw KindMismatch(std::string(what) + " requires a " + to_string(kind) +
                       " Riccati solution, got " + to_string(sol.kind));
  }
}

RiccatiState lerp(const RiccatiState& a, const RiccatiState& b, double w) {
  return (1.0 - w) * a + w * b;
}

double inf_norm_rows(const RowMatrixXd& m) {
  return m.size() == 0 ? 0.0 : m.cwiseAbs().rowwise().maxCoeff().maxCoeff();
}

}  // namespace

RiccatiJet riccati_jet(const RiccatiSolution& sol, double t) {
  require_time(sol, t);
  const auto& g = sol.grid;
  int k = std::clamp(static_cast<int>(std::floor(t / g.h())), 0, g.K() - 1);
  const double tol = 1e-12 * g.T();
  if (std::abs(t - g.node(k + 1)) <= tol) ++k;
  if (std::abs(t - g.node(k)) <= tol) return {sol.state(k), nodal_time_derivative(sol, k)};
  const double w = (t - g.node(k)) / g.h();
  return {lerp(sol.state(k), sol.state(k + 1), w),
          lerp(nodal_time_derivative(sol, k), nodal_time_derivative(sol, k + 1), w)};
}

double eval_value(const RiccatiSolution& sol, const ParticleEnsemble& X, double t) {
  require_kind(sol, SolutionKind::MFC, "eval_value");
  require_time(sol, t);
  const auto v = eval_at(sol, t);
  if (v.P.rows() != X.dim()) throw DimensionMismatch("eval_value: ensemble dimension differs");
  const VectorXd y = X.mean();
  return 0.5 * v.P.cwiseProduct(X.second_moment()).sum() + 0.5 * y.dot(v.Sigma * y) + *v.lambda;
}

RowMatrixXd eval_master_field(const MasterField& field, const ParticleEnsemble& X, double t) {
  require_time(*field.sol, t);
  const auto v = eval_at(*field.sol, t);
  if (v.P.rows() != X.dim()) {
    throw DimensionMismatch("eval_master_field: ensemble dimension differs");
  }
  RowMatrixXd U = X.states() * v.P.transpose();
  U.rowwise() += (v.Sigma * X.mean()).transpose();
  return U;
}

ojson ResidualReport::to_json() const {
  ojson j;
  j["residual_norm"] = residual_norm;
  j["symmetry_violation"] = symmetry_violation;
  j["term_breakdown"] = term_breakdown;
  return j;
}

ojson ScalarResidual::to_json() const {
  ojson j;
  j["residual"] = residual;
  j["terminal_mismatch"] = terminal_mismatch;
  j["term_breakdown"] = term_breakdown;
  return j;
}

namespace {

// Terms of the lifted master equation for U = P X + Sigma E X, one row per
// particle. `copy` toggles the mean field type control expectation term.
ResidualReport lifted_residual(const LQModel& model, const RiccatiSolution& sol,
                               const ParticleEnsemble& X, double t, bool copy) {
  const auto& s = model.spec();
  if (X.dim() != model.n()) throw DimensionMismatch("residual: ensemble dimension differs");
  const auto jet = riccati_jet(sol, t);
  const MatrixXd& P = jet.value.P;
  const MatrixXd& Sg = jet.value.Sigma;
  const MatrixXd& M = model.b_rinv_bt();
  const RowMatrixXd& x = X.states();
  const VectorXd y = X.mean();

  // dU/dt
  RowMatrixXd dUdt = x * jet.rate.P.transpose();
  dUdt.rowwise() += (jet.rate.Sigma * y).transpose();
  // U and the optimal drift G = AX + Abar E X - M U
  RowMatrixXd U = x * P.transpose();
  U.rowwise() += (Sg * y).transpose();
  RowMatrixXd G = x * s.A.transpose() - U * M.transpose();
  G.rowwise() += (s.Abar * y).transpose();
  const VectorXd EG = blocked_column_sums(G) / static_cast<double>(X.size());
  // DU(X) applied to G: P G + Sigma E G
  RowMatrixXd transport = G * P.transpose();
  transport.rowwise() += (Sg * EG).transpose();
  // D_x H = (Q + Qbar) X - Qbar S E X + A'U
  RowMatrixXd dxH = x * (s.Q + s.Qbar).transpose() + U * s.A;
  dxH.rowwise() -= (s.Qbar * s.S * y).transpose();

  RowMatrixXd total = dUdt + transport + dxH;
  ResidualReport r;
  r.term_breakdown["dU_dt"] = inf_norm_rows(dUdt);
  // Second derivatives of a field linear in X vanish identically.
  r.term_breakdown["idiosyncratic_noise_D2U"] = 0.0;
  r.term_breakdown["common_noise_D2U"] = 0.0;
  r.term_breakdown["transport_DU_G"] = inf_norm_rows(transport);
  r.term_breakdown["D_x_H"] = inf_norm_rows(dxH);
  if (copy) {
    const VectorXd EU = (P + Sg) * y;
    const VectorXd c = (s.S.transpose() * s.Qbar * s.S - s.S.transpose() * s.Qbar) * y +
                       s.Abar.transpose() * EU;
    total.rowwise() += c.transpose();
    r.term_breakdown["expectation_copy"] = c.cwiseAbs().maxCoeff();
  }
  r.residual_norm = inf_norm_rows(total);
  r.term_breakdown["residual"] = r.residual_norm;
  return r;
}

}  // namespace

ResidualReport residual_master_mfc(const LQModel& model, const RiccatiSolution& sol,
                                   const ParticleEnsemble& X, double t) {
  require_kind(sol, SolutionKind::MFC, "residual_master_mfc");
  return lifted_residual(model, sol, X, t, true);
}

ResidualReport residual_master_mfg_gradient(const LQModel& model, const RiccatiSolution& sol,
                                            const ParticleEnsemble& X, double t) {
  require_kind(sol, SolutionKind::MFG, "residual_master_mfg_gradient");
  ResidualReport r = lifted_residual(model, sol, X, t, false);
  r.symmetry_violation = asymmetry_inf_norm(riccati_jet(sol, t).value.Sigma);
  return r;
}

ScalarResidual residual_master_mfg_scalar(const LQModel& model, const RiccatiSolution& sol,
                                          const VectorXd& x, const ParticleEnsemble& X,
                                          double t) {
  require_kind(sol, SolutionKind::MFG, "residual_master_mfg_scalar");
  const auto& s = model.spec();
  if (x.size() != model.n() || X.dim() != model.n()) {
    throw DimensionMismatch("residual_master_mfg_scalar: dimension differs");
  }
  const auto jet = riccati_jet(sol, t);
  const MatrixXd& P = jet.value.P;
  const MatrixXd& Sg = jet.value.Sigma;
  const MatrixXd& Gm = jet.value.Gamma;
  const MatrixXd& M = model.b_rinv_bt();
  const VectorXd y = X.mean();
  const double s2 = s.sigma * s.sigma;
  const double b2 = s.beta * s.beta;

  const double dUdt = 0.5 * x.dot(jet.rate.P * x) + x.dot(jet.rate.Sigma * y) +
                      0.5 * y.dot(jet.rate.Gamma * y) + jet.rate.scalar;
  const double laplacian = 0.5 * (s2 + b2) * P.trace();
  const double common_trace = 0.5 * b2 * Gm.trace();
  const double cross_div = b2 * Sg.trace();
  // D_X U = Sigma'x + Gamma E X paired with E G = (A + Abar - M(P + Sigma)) E X.
  const VectorXd EG = (s.A + s.Abar - M * (P + Sg)) * y;
  const double transport = (Sg.transpose() * x + Gm * y).dot(EG);
  const VectorXd q = P * x + Sg * y;
  const double ham = hamiltonian(model, x, MeanVector{y}, q);

  ScalarResidual r;
  r.residual = dUdt + laplacian + common_trace + cross_div + transport + ham;
  r.term_breakdown["dU_dt"] = dUdt;
  r.term_breakdown["laplacian_x"] = laplacian;
  r.term_breakdown["lifted_noise_D2U"] = 0.0;
  r.term_breakdown["common_noise_trace"] = common_trace;
  r.term_breakdown["cross_divergence"] = cross_div;
  r.term_breakdown["transport"] = transport;
  r.term_breakdown["hamiltonian"] = ham;
  if (std::abs(t - sol.grid.T()) <= 1e-12 * sol.grid.T()) {
    const double U = 0.5 * x.dot(P * x) + x.dot(Sg * y) + 0.5 * y.dot(Gm * y) + jet.value.scalar;
    r.terminal_mismatch = U - terminal_cost(model, x, MeanVector{y});
  }
  return r;
}

MeanFlow mean_flow(const LQModel& model, const RiccatiSolution& sol, const VectorXd& y0) {
  const auto& s = model.spec();
  if (y0.size() != model.n()) throw DimensionMismatch("mean_flow: y0 dimension differs");
  const MatrixXd& M = model.b_rinv_bt();
  const auto& g = sol.grid;
  auto rate = [&](double t, const VectorXd& y) -> VectorXd {
    const auto v = eval_at(sol, std::min(t, g.T()));
    return (s.A + s.Abar - M * (v.P + v.Sigma)) * y;
  };
  MeanFlow flow;
  flow.y.reserve(g.K() + 1);
  flow.y.push_back(y0);
  const double h = g.h();
  for (int k = 0; k < g.K(); ++k) {
    const double t = g.node(k);
    const VectorXd& y = flow.y.back();
    const VectorXd k1 = rate(t, y);
    const VectorXd k2 = rate(t + 0.5 * h, y + 0.5 * h * k1);
    const VectorXd k3 = rate(t + 0.5 * h, y + 0.5 * h * k2);
    const VectorXd k4 = rate(t + h, y + h * k3);
    flow.y.push_back(y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4));
  }
  if (sol.kind == SolutionKind::MFC) {
    // -c' = (s2 + b2)/2 tr P + b2 tr Sigma + 1/2 y'S'Qbar S y - 1/2 y'Sigma'M Sigma y + y'Sigma'Abar y
    const double s2 = s.sigma * s.sigma;
    const double b2 = s.beta * s.beta;
    auto minus_rate = [&](int k) {
      const VectorXd& y = flow.y[k];
      const MatrixXd& P = sol.P[k];
      const MatrixXd& Sg = sol.Sigma[k];
      const VectorXd Sy = Sg * y;
      return 0.5 * (s2 + b2) * P.trace() + b2 * Sg.trace() +
             0.5 * (s.S * y).dot(s.Qbar * s.S * y) - 0.5 * Sy.dot(M * Sy) + Sy.dot(s.Abar * y);
    };
    flow.c.assign(g.K() + 1, 0.0);
    const VectorXd yT = s.ST * flow.y.back();
    flow.c[g.K()] = 0.5 * yT.dot(s.QbarT * yT);
    for (int k = g.K() - 1; k >= 0; --k) {
      flow.c[k] = flow.c[k + 1] + 0.5 * h * (minus_rate(k) + minus_rate(k + 1));
    }
  }
  return flow;
}

double decoupling_field(const LQModel& model, const RiccatiSolution& sol, const MeanFlow& flow,
                        int k, const VectorXd& x) {
  if (x.size() != model.n()) throw DimensionMismatch("decoupling_field: x dimension differs");
  const VectorXd& y = flow.y.at(k);
  const double quad = 0.5 * x.dot(sol.P[k] * x) + x.dot(sol.Sigma[k] * y);
  if (sol.kind == SolutionKind::MFC) return quad + flow.c.at(k);
  return quad + 0.5 * y.dot(sol.Gamma[k] * y) + sol.mu[k];
}

Report consistency_uncoupling(const LQModel& model, const RiccatiSolution& sol,
                              const UncouplingConfig& cfg, const Tolerances& tol) {
  const auto& s = model.spec();
  const int n = model.n();
  if (cfg.nx < 2 || cfg.nt < 2) throw std::invalid_argument("consistency_uncoupling: grid too small");
  const VectorXd y0 = cfg.y0.size() == 0 ? VectorXd::Ones(n) : cfg.y0;
  const auto flow = mean_flow(model, sol, y0);
  const MatrixXd& M = model.b_rinv_bt();
  const auto& g = sol.grid;
  const bool mfc = sol.kind == SolutionKind::MFC;
  const double s2 = s.sigma * s.sigma;
  const double b2 = s.beta * s.beta;

  double worst = 0.0;
  double worst_t = 0.0;
  for (int j = 0; j < cfg.nt; ++j) {
    const int k = static_cast<int>(std::lround(static_cast<double>(j) * g.K() / (cfg.nt - 1)));
    const auto d = nodal_time_derivative(sol, k);
    const MatrixXd& P = sol.P[k];
    const MatrixXd& Sg = sol.Sigma[k];
    const VectorXd& y = flow.y[k];
    const VectorXd ydot = (s.A + s.Abar - M * (P + Sg)) * y;
    for (int i = 0; i < cfg.nx; ++i) {
      const VectorXd x = VectorXd::Constant(n, -cfg.xmax + 2.0 * cfg.xmax * i / (cfg.nx - 1));
      // du/dt along the flow, then -du/dt - noise terms = H (+ MFC copy term).
      double dudt = 0.5 * x.dot(d.P * x) + x.dot(d.Sigma * y) + x.dot(Sg * ydot);
      double noise = 0.5 * (s2 + b2) * P.trace() + b2 * Sg.trace();
      if (mfc) {
        const VectorXd Sy = Sg * y;
        dudt -= 0.5 * (s2 + b2) * P.trace() + b2 * Sg.trace() +
                0.5 * (s.S * y).dot(s.Qbar * s.S * y) - 0.5 * Sy.dot(M * Sy) +
                Sy.dot(s.Abar * y);
      } else {
        const MatrixXd& Gm = sol.Gamma[k];
        dudt += 0.5 * y.dot(d.Gamma * y) + y.dot(Gm * ydot) + d.scalar;
        noise += 0.5 * b2 * Gm.trace();
      }
      const VectorXd q = P * x + Sg * y;
      double rhs = hamiltonian(model, x, MeanVector{y}, q);
      if (mfc) {
        const VectorXd c = (s.S.transpose() * s.Qbar * s.S - s.S.transpose() * s.Qbar) * y +
                           s.Abar.transpose() * (P + Sg) * y;
        rhs += x.dot(c);
      }
      const double res = std::abs(dudt + noise + rhs);
      if (res > worst) {
        worst = res;
        worst_t = g.node(k);
      }
    }
  }
  double terminal = 0.0;
  for (int i = 0; i < cfg.nx; ++i) {
    const VectorXd x = VectorXd::Constant(n, -cfg.xmax + 2.0 * cfg.xmax * i / (cfg.nx - 1));
    const VectorXd& yT = flow.y.back();
    double h = terminal_cost(model, x, MeanVector{yT});
    if (mfc) {
      // Terminal value of the control problem's adjoint: h + x.(-ST'QbarT + ST'QbarT ST) y
      h += x.dot((s.ST.transpose() * s.QbarT * s.ST - s.ST.transpose() * s.QbarT) * yT);
    }
    terminal = std::max(terminal, std::abs(decoupling_field(model, sol, flow, g.K(), x) - h));
  }
  Report r;
  r.check = "consistency_uncoupling";
  r.data["kind"] = to_string(sol.kind);
  r.data["grid"] = {{"nx", cfg.nx}, {"nt", cfg.nt}, {"xmax", cfg.xmax}};
  r.data["max_residual"] = worst;
  r.data["worst_t"] = worst_t;
  r.data["terminal_mismatch"] = terminal;
  const double bound = tol.get("master_residual");
  r.pass = worst <= bound && terminal <= bound;
  return r;
}

std::vector<int> residual_panel(const TimeGrid& grid) {
  const int K = grid.K();
  std::vector<int> out;
  for (double f : {0.0, 0.25, 0.5, 0.75}) out.push_back(static_cast<int>(std::lround(f * K)));
  out.push_back(K - 1);
  return out;
}

}  // namespace masterlq
