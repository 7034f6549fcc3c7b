#pragma once

#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace masterlq {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DimensionMismatch : public Error {
 public:
  using Error::Error;
};

class InvalidModel : public Error {
 public:
  explicit InvalidModel(std::vector<std::string> violations)
      : Error(join(violations)), violations_(std::move(violations)) {}

  const std::vector<std::string>& violations() const noexcept { return violations_; }

 private:
  static std::string join(const std::vector<std::string>& v) {
    std::string out = "invalid model:";
    for (const auto& s : v) out += " [" + s + "]";
    return out;
  }
  std::vector<std::string> violations_;
};

/// Finite escape of a Riccati solution while integrating backward.
class RiccatiBlowUp : public Error {
 public:
  RiccatiBlowUp(double escape_time, double norm)
      : Error("Riccati blow-up near t=" + std::to_string(escape_time) +
              " (norm " + std::to_string(norm) + ")"),
        escape_time_(escape_time) {}

  double escape_time() const noexcept { return escape_time_; }

 private:
  double escape_time_;
};

class NumericalFailure : public Error {
 public:
  NumericalFailure(const std::string& what, long index)
      : Error(what + " (index " + std::to_string(index) + ")"), index_(index) {}

  long index() const noexcept { return index_; }

 private:
  long index_;
};

class CflViolation : public Error {
 public:
  CflViolation(double courant, double dt, double dx)
      : Error("CFL violation: advective Courant number " + std::to_string(courant) +
              " > 1 with dt=" + std::to_string(dt) + ", dx=" + std::to_string(dx) +
              "; reduce dt below " + std::to_string(dt / courant)),
        courant_(courant),
        dt_(dt),
        dx_(dx) {}

  double courant() const noexcept { return courant_; }
  double dt() const noexcept { return dt_; }
  double dx() const noexcept { return dx_; }

 private:
  double courant_, dt_, dx_;
};

/// Picard iteration exhausted its budget; carries the sup-norm history.
class NonConvergence : public Error {
 public:
  explicit NonConvergence(std::vector<double> history)
      : Error("Picard iteration did not converge after " + std::to_string(history.size()) +
              " iterations"),
        history_(std::move(history)) {}

  const std::vector<double>& history() const noexcept { return history_; }

 private:
  std::vector<double> history_;
};

class KindMismatch : public Error {
 public:
  using Error::Error;
};

}  // namespace masterlq
