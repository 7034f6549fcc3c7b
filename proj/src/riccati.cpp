#include "masterlq/riccati.hpp"

#include <cmath>
#include <cstdio>
#include <ostream>
#include <stdexcept>

#include "masterlq/errors.hpp"

namespace masterlq {

namespace {

double inf_norm(const MatrixXd& m) {
  return m.size() == 0 ? 0.0 : m.cwiseAbs().rowwise().sum().maxCoeff();
}

bool all_finite(const RiccatiState& s) {
  return s.P.allFinite() && s.Sigma.allFinite() && s.Gamma.allFinite() && std::isfinite(s.scalar);
}

void symmetrize(MatrixXd& m) { m = (0.5 * (m + m.transpose())).eval(); }

// One backward pass of classical RK4. `on_node(k, state)` may adjust the
// freshly computed node (projection) and may throw.
template <class Rhs, class OnNode>
std::vector<RiccatiState> integrate_backward(Rhs&& rhs, RiccatiState terminal,
                                             const TimeGrid& grid, OnNode&& on_node) {
  const int K = grid.K();
  const double h = grid.h();
  std::vector<RiccatiState> out(K + 1);
  on_node(K, terminal);
  out[K] = std::move(terminal);
  for (int k = K - 1; k >= 0; --k) {
    const double t = grid.node(k + 1);
    const RiccatiState& y = out[k + 1];
    // Integrating dy/dt = F backward means stepping with -h.
    const RiccatiState k1 = rhs(t, y);
    const RiccatiState k2 = rhs(t - 0.5 * h, y + (-0.5 * h) * k1);
    const RiccatiState k3 = rhs(t - 0.5 * h, y + (-0.5 * h) * k2);
    const RiccatiState k4 = rhs(t - h, y + (-h) * k3);
    RiccatiState next = y + (-h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    on_node(k, next);
    out[k] = std::move(next);
  }
  return out;
}

RiccatiSolution package(SolutionKind kind, const TimeGrid& grid,
                        std::vector<RiccatiState>&& states) {
  RiccatiSolution sol{kind, grid, {}, {}, {}, {}, {}};
  const auto count = states.size();
  sol.P.reserve(count);
  sol.Sigma.reserve(count);
  if (kind == SolutionKind::MFC) {
    sol.lambda.reserve(count);
  } else {
    sol.Gamma.reserve(count);
    sol.mu.reserve(count);
  }
  for (auto& s : states) {
    sol.P.push_back(std::move(s.P));
    sol.Sigma.push_back(std::move(s.Sigma));
    if (kind == SolutionKind::MFC) {
      sol.lambda.push_back(s.scalar);
    } else {
      sol.Gamma.push_back(std::move(s.Gamma));
      sol.mu.push_back(s.scalar);
    }
  }
  return sol;
}

auto blow_up_guard(const TimeGrid& grid, bool symmetrize_sigma) {
  return [&grid, symmetrize_sigma](int k, RiccatiState& s) {
    const double t = grid.node(k);
    if (!all_finite(s)) throw RiccatiBlowUp(t, INFINITY);
    symmetrize(s.P);
    if (symmetrize_sigma) symmetrize(s.Sigma);
    const double norm = std::max(inf_norm(s.P), inf_norm(s.Sigma));
    if (norm > kBlowUpThreshold) throw RiccatiBlowUp(t, norm);
  };
}

}  // namespace

std::string to_string(SolutionKind kind) { return kind == SolutionKind::MFC ? "mfc" : "mfg"; }

TimeGrid::TimeGrid(double T, int K) : T_(T), K_(K) {
  if (!(T > 0) || !std::isfinite(T)) throw std::invalid_argument("time grid needs T > 0");
  if (K < 1) throw std::invalid_argument("time grid needs K >= 1");
}

RiccatiState operator+(const RiccatiState& a, const RiccatiState& b) {
  return {a.P + b.P, a.Sigma + b.Sigma, a.Gamma + b.Gamma, a.scalar + b.scalar};
}

RiccatiState operator*(double s, const RiccatiState& a) {
  return {s * a.P, s * a.Sigma, s * a.Gamma, s * a.scalar};
}

RiccatiState RiccatiSolution::state(int k) const {
  RiccatiState s;
  s.P = P.at(k);
  s.Sigma = Sigma.at(k);
  if (kind == SolutionKind::MFC) {
    s.scalar = lambda.at(k);
  } else {
    s.Gamma = Gamma.at(k);
    s.scalar = mu.at(k);
  }
  return s;
}

std::vector<MatrixXd> rk4_backward(
    const std::function<MatrixXd(double, const MatrixXd&)>& rhs, const MatrixXd& terminal,
    const TimeGrid& grid) {
  auto wrapped = [&rhs](double t, const RiccatiState& s) {
    RiccatiState d;
    d.P = rhs(t, s.P);
    return d;
  };
  auto check = [](int k, RiccatiState& s) {
    if (!s.P.allFinite()) throw NumericalFailure("non-finite value in backward RK4", k);
  };
  RiccatiState term;
  term.P = terminal;
  auto states = integrate_backward(wrapped, term, grid, check);
  std::vector<MatrixXd> out;
  out.reserve(states.size());
  for (auto& s : states) out.push_back(std::move(s.P));
  return out;
}

RiccatiState mfc_rhs(const LQModel& model, const RiccatiState& s) {
  const auto& m = model.spec();
  const MatrixXd& M = model.b_rinv_bt();
  const MatrixXd& P = s.P;
  const MatrixXd& Sg = s.Sigma;
  RiccatiState d;
  d.P = -(P * m.A + m.A.transpose() * P - P * M * P + m.Q + m.Qbar);
  const MatrixXd K = m.A + m.Abar - M * P;
  const MatrixXd QbS = m.Qbar * m.S;
  d.Sigma = -(Sg * K + K.transpose() * Sg - Sg * M * Sg + m.S.transpose() * QbS - QbS -
              QbS.transpose() + P * m.Abar + m.Abar.transpose() * P);
  const double s2 = m.sigma * m.sigma;
  const double b2 = m.beta * m.beta;
  d.scalar = -(0.5 * s2 * P.trace() + 0.5 * b2 * (P + Sg).trace());
  return d;
}

RiccatiState mfg_rhs(const LQModel& model, const RiccatiState& s) {
  const auto& m = model.spec();
  const MatrixXd& M = model.b_rinv_bt();
  const MatrixXd& P = s.P;
  const MatrixXd& Sg = s.Sigma;
  const MatrixXd& G = s.Gamma;
  RiccatiState d;
  d.P = -(P * m.A + m.A.transpose() * P - P * M * P + m.Q + m.Qbar);
  d.Sigma = -(Sg * (m.A + m.Abar - M * P) + (m.A.transpose() - P * M) * Sg - Sg * M * Sg -
              m.Qbar * m.S + P * m.Abar);
  // Only the symmetric part of Gamma enters the quadratic form in E X, so the
  // Sigma products are written with Sigma' on the left to keep Gamma symmetric.
  const MatrixXd N = m.A + m.Abar - M * (P + Sg);
  d.Gamma = -(G * N + N.transpose() * G + m.S.transpose() * m.Qbar * m.S -
              Sg.transpose() * M * Sg + Sg.transpose() * m.Abar + m.Abar.transpose() * Sg);
  const double s2 = m.sigma * m.sigma;
  const double b2 = m.beta * m.beta;
  d.scalar = -(0.5 * (b2 + s2) * P.trace() + 0.5 * b2 * G.trace() + b2 * Sg.trace());
  return d;
}

RiccatiState mfc_terminal(const LQModel& model) {
  const auto& m = model.spec();
  RiccatiState s;
  s.P = m.QT + m.QbarT;
  const MatrixXd QbS = m.QbarT * m.ST;
  s.Sigma = m.ST.transpose() * QbS - (m.ST.transpose() * m.QbarT + QbS);
  s.scalar = 0.0;
  return s;
}

RiccatiState mfg_terminal(const LQModel& model) {
  const auto& m = model.spec();
  RiccatiState s;
  s.P = m.QT + m.QbarT;
  s.Sigma = -(m.QbarT * m.ST);
  s.Gamma = m.ST.transpose() * m.QbarT * m.ST;
  s.scalar = 0.0;
  return s;
}

RiccatiSolution solve_mfc(const LQModel& model, const TimeGrid& grid) {
  auto rhs = [&model](double, const RiccatiState& s) { return mfc_rhs(model, s); };
  auto states = integrate_backward(rhs, mfc_terminal(model), grid, blow_up_guard(grid, true));
  return package(SolutionKind::MFC, grid, std::move(states));
}

RiccatiSolution solve_mfg(const LQModel& model, const TimeGrid& grid) {
  auto rhs = [&model](double, const RiccatiState& s) { return mfg_rhs(model, s); };
  auto states = integrate_backward(rhs, mfg_terminal(model), grid, blow_up_guard(grid, false));
  return package(SolutionKind::MFG, grid, std::move(states));
}

RiccatiSolution solve(const LQModel& model, const TimeGrid& grid, SolutionKind kind) {
  return kind == SolutionKind::MFC ? solve_mfc(model, grid) : solve_mfg(model, grid);
}

SymmetryDiagnosis check_symmetry_conditions(const LQModel& model) {
  const auto& m = model.spec();
  SymmetryDiagnosis d{};
  const MatrixXd term = m.QbarT * m.ST;
  d.terminal_symmetric = inf_norm(term - m.ST.transpose() * m.QbarT) <= kSymmetryTolerance;
  const MatrixXd run = m.Qbar * m.S;
  d.running_symmetric = inf_norm(run - m.S.transpose() * m.Qbar) <= kSymmetryTolerance;
  d.abar_zero = inf_norm(m.Abar) <= kSymmetryTolerance;
  d.self_adjoint_possible = d.terminal_symmetric && d.running_symmetric && d.abar_zero;
  return d;
}

RiccatiValue eval_at(const RiccatiSolution& sol, double t) {
  const auto& g = sol.grid;
  if (!(t >= 0.0 && t <= g.T())) {
    throw std::out_of_range("eval_at: t=" + std::to_string(t) + " outside [0, " +
                            std::to_string(g.T()) + "]");
  }
  int k = static_cast<int>(std::floor(t / g.h()));
  k = std::clamp(k, 0, g.K() - 1);
  auto node_value = [&sol](int j) {
    RiccatiValue v{sol.P[j], sol.Sigma[j], std::nullopt, std::nullopt, std::nullopt};
    if (sol.kind == SolutionKind::MFC) {
      v.lambda = sol.lambda[j];
    } else {
      v.Gamma = sol.Gamma[j];
      v.mu = sol.mu[j];
    }
    return v;
  };
  if (t == g.node(k)) return node_value(k);
  if (t == g.node(k + 1)) return node_value(k + 1);
  const double w = std::clamp((t - g.node(k)) / (g.node(k + 1) - g.node(k)), 0.0, 1.0);
  auto lerp = [w](const auto& a, const auto& b) { return ((1.0 - w) * a + w * b); };
  RiccatiValue v{lerp(sol.P[k], sol.P[k + 1]), lerp(sol.Sigma[k], sol.Sigma[k + 1]),
                 std::nullopt, std::nullopt, std::nullopt};
  if (sol.kind == SolutionKind::MFC) {
    v.lambda = lerp(sol.lambda[k], sol.lambda[k + 1]);
  } else {
    v.Gamma = MatrixXd(lerp(sol.Gamma[k], sol.Gamma[k + 1]));
    v.mu = lerp(sol.mu[k], sol.mu[k + 1]);
  }
  return v;
}

RiccatiState nodal_time_derivative(const RiccatiSolution& sol, int k) {
  const int K = sol.grid.K();
  if (K < 4) throw std::invalid_argument("nodal_time_derivative needs K >= 4");
  if (k < 0 || k > K) throw std::out_of_range("nodal_time_derivative: node out of range");
  // Five-point stencils, fourth order everywhere.
  int base;
  double c[5];
  if (k >= 2 && k <= K - 2) {
    base = k - 2;
    const double w[5] = {1, -8, 0, 8, -1};
    std::copy(w, w + 5, c);
  } else if (k == 0) {
    base = 0;
    const double w[5] = {-25, 48, -36, 16, -3};
    std::copy(w, w + 5, c);
  } else if (k == 1) {
    base = 0;
    const double w[5] = {-3, -10, 18, -6, 1};
    std::copy(w, w + 5, c);
  } else if (k == K - 1) {
    base = K - 4;
    const double w[5] = {-1, 6, -18, 10, 3};
    std::copy(w, w + 5, c);
  } else {
    base = K - 4;
    const double w[5] = {3, -16, 36, -48, 25};
    std::copy(w, w + 5, c);
  }
  const double scale = 1.0 / (12.0 * sol.grid.h());
  RiccatiState d = 0.0 * sol.state(base);
  for (int i = 0; i < 5; ++i) {
    if (c[i] != 0.0) d = d + (c[i] * scale) * sol.state(base + i);
  }
  return d;
}

double max_sigma_asymmetry(const RiccatiSolution& sol) {
  double worst = 0.0;
  for (const auto& s : sol.Sigma) worst = std::max(worst, asymmetry_inf_norm(s));
  return worst;
}

void write_csv(std::ostream& out, const RiccatiSolution& sol) {
  const auto n = sol.P.front().rows();
  auto header_block = [&](const char* name) {
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = 0; j < n; ++j) out << ',' << name << '_' << i << '_' << j;
  };
  out << 't';
  header_block("P");
  header_block("Sigma");
  if (sol.kind == SolutionKind::MFC) {
    out << ",lambda";
  } else {
    header_block("Gamma");
    out << ",mu";
  }
  out << '\n';
  char buf[40];
  auto put = [&](double v) {
    std::snprintf(buf, sizeof buf, "%.17g", v);
    out << buf;
  };
  auto put_block = [&](const MatrixXd& m) {
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = 0; j < n; ++j) {
        out << ',';
        put(m(i, j));
      }
  };
  for (int k = 0; k <= sol.grid.K(); ++k) {
    put(sol.grid.node(k));
    put_block(sol.P[k]);
    put_block(sol.Sigma[k]);
    if (sol.kind == SolutionKind::MFC) {
      out << ',';
      put(sol.lambda[k]);
    } else {
      put_block(sol.Gamma[k]);
      out << ',';
      put(sol.mu[k]);
    }
    out << '\n';
  }
}

}  // namespace masterlq
