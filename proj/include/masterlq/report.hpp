#pragma once

#include <map>
#include <string>

#include "json.hpp"

namespace masterlq {

using ojson = nlohmann::ordered_json;

/// Outcome of one verification check. `data` holds the check-specific values
/// in insertion order so serialised reports are stable byte for byte.
struct Report {
  std::string check;
  bool pass = false;
  ojson data = ojson::object();

  ojson to_json() const;
};

/// Report for an identity "lhs = rhs": data holds functional, measure, lhs,
/// rhs, abs_err and rel_err; pass is rel_err <= tol.
Report identity_report(const std::string& check, const std::string& functional,
                       const std::string& measure, double lhs, double rhs, double tol);

/// Relative error with a unit floor on the scale: |a-b| / max(1, |a|, |b|).
double relative_error(double a, double b);

/// Every tolerance used by the verifiers, with overridable defaults.
class Tolerances {
 public:
  Tolerances();

  double get(const std::string& name) const;
  /// Throws std::invalid_argument for unknown names or non-positive values.
  void set(const std::string& name, double value);
  ojson to_json() const;

 private:
  std::map<std::string, double> values_;
};

}  // namespace masterlq
