#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "masterlq/report.hpp"

namespace masterlq::cli {

enum ExitCode { kOk = 0, kBadInput = 1, kNumerical = 2, kCheckFailed = 3 };

/// Everything a run depends on. Embedded verbatim in every JSON report.
struct RunManifest {
  std::string command;
  std::string model;
  std::string out = ".";
  std::uint64_t seed = 1;
  std::optional<std::uint64_t> common_seed;
  int steps = 1000;
  long particles = 1000;
  double x_min = -4.0;
  double x_max = 4.0;
  int Nx = 200;
  int Nt = 2000;
  std::string suite;
  std::string kind = "mfc";
  double theta = 0.5;
  int max_iter = 200;
  std::vector<double> times;
  std::map<std::string, double> tolerances;

  ojson to_json() const;
  /// Missing keys keep their defaults. Throws std::invalid_argument on bad types.
  static RunManifest from_json(const ojson& j);
};

/// Parses "xmin,xmax,Nx,Nt".
void parse_grid(const std::string& text, RunManifest& m);

/// Full command line front end; returns the process exit code.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

/// Runs one manifest directly (no argument parsing).
int execute(const RunManifest& manifest, std::ostream& out, std::ostream& err);

}  // namespace masterlq::cli
