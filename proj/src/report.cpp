#include "masterlq/report.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace masterlq {

ojson Report::to_json() const {
  ojson j;
  j["check"] = check;
  j["pass"] = pass;
  for (const auto& [k, v] : data.items()) j[k] = v;
  return j;
}

Report identity_report(const std::string& check, const std::string& functional,
                       const std::string& measure, double lhs, double rhs, double tol) {
  Report r;
  r.check = check;
  const double rel = relative_error(lhs, rhs);
  r.data["functional"] = functional;
  r.data["measure"] = measure;
  r.data["lhs"] = lhs;
  r.data["rhs"] = rhs;
  r.data["abs_err"] = std::abs(lhs - rhs);
  r.data["rel_err"] = rel;
  r.pass = std::isfinite(rel) && rel <= tol;
  return r;
}

double relative_error(double a, double b) {
  return std::abs(a - b) / std::max({1.0, std::abs(a), std::abs(b)});
}

// Defaults table. Names are what --tol NAME=VALUE accepts on the command line.
Tolerances::Tolerances()
    : values_{
          {"lift_identity_rel", 1e-8},      // second-order / difference identities
          {"lift_linear_abs", 1e-10},      // linear functionals: difference is zero
          {"lift_gradient_rel", 1e-6},      // Richardson-extrapolated directional derivative
          {"lift_buckdahn_abs", 1e-6},      // mixed derivative by finite differences
          {"lift_chain_abs", 1e-9},         // linear master field directional derivative
          {"taylor_slope_lo", 2.9},         // remainder order window
          {"taylor_slope_hi", 3.1},
          {"taylor_quadratic_abs", 1e-12},  // remainder of a quadratic functional
          {"master_residual", 1e-6},        // master-equation residual norms
          {"symmetry_violation", 1e-9},     // Sigma asymmetry deemed zero
          {"asymmetry_flag", 1e-6},         // Sigma asymmetry deemed genuine
          {"cost_stderr_factor", 3.0},      // |J - V| <= k stderr + C dt
          {"cost_dt_constant", 10.0},
          {"gap_ratio_lo", 3.2},
          {"gap_ratio_hi", 4.8},
          {"mp_terminal", 1e-8},            // co-state terminal condition
          {"mp_ratio_lo", 1.7},             // residual ratio under dt halving
          {"mp_ratio_hi", 2.3},
          {"mp_dt_constant", 50.0},         // residual <= C dt
          {"hjbfp_sup", 1e-2},              // PDE vs Riccati value
          {"hjbfp_mean", 1e-2},             // PDE first moment vs mean ODE
          {"hjbfp_picard", 1e-6},           // Picard sup-norm stopping tolerance
      } {}

double Tolerances::get(const std::string& name) const {
  auto it = values_.find(name);
  if (it == values_.end()) throw std::invalid_argument("unknown tolerance '" + name + "'");
  return it->second;
}

void Tolerances::set(const std::string& name, double value) {
  auto it = values_.find(name);
  if (it == values_.end()) throw std::invalid_argument("unknown tolerance '" + name + "'");
  if (!(value > 0) || !std::isfinite(value)) {
    throw std::invalid_argument("tolerance '" + name + "' must be positive");
  }
  it->second = value;
}

ojson Tolerances::to_json() const {
  ojson j = ojson::object();
  for (const auto& [k, v] : values_) j[k] = v;
  return j;
}

}  // namespace masterlq
