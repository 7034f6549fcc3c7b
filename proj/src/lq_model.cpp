#include "masterlq/lq_model.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "masterlq/errors.hpp"

namespace masterlq {

namespace {

std::string shape_of(const MatrixXd& m) {
  return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

void check_shape(std::vector<std::string>& out, const char* name, const MatrixXd& m,
                 int rows, int cols) {
  if (m.rows() != rows || m.cols() != cols) {
    out.push_back(std::string("dimension mismatch: ") + name + " is " + shape_of(m) +
                  ", expected " + std::to_string(rows) + "x" + std::to_string(cols));
  }
}

bool is_psd(const MatrixXd& m) {
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(m, Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff() >= -1e-12;
}

void require(const VectorXd& v, Eigen::Index size, const char* what) {
  if (v.size() != size) {
    throw DimensionMismatch(std::string(what) + " has " + std::to_string(v.size()) +
                            " entries, expected " + std::to_string(size));
  }
}

}  // namespace

LQModelSpec LQModelSpec::zeros(int n, int d) {
  LQModelSpec s;
  s.n = n;
  s.d = d;
  const MatrixXd z = MatrixXd::Zero(n, n);
  s.A = s.Abar = s.Q = s.Qbar = s.S = s.QT = s.QbarT = s.ST = z;
  s.B = MatrixXd::Zero(n, d);
  s.R = MatrixXd::Identity(d, d);
  return s;
}

double asymmetry_inf_norm(const MatrixXd& m) {
  if (m.size() == 0) return 0.0;
  return (m - m.transpose()).cwiseAbs().rowwise().sum().maxCoeff();
}

ValidationReport validate(const LQModelSpec& s) {
  ValidationReport r;
  auto& v = r.violations;
  if (s.n <= 0) v.push_back("n must be positive");
  if (s.d <= 0) v.push_back("d must be positive");
  if (!v.empty()) return r;

  check_shape(v, "A", s.A, s.n, s.n);
  check_shape(v, "Abar", s.Abar, s.n, s.n);
  check_shape(v, "B", s.B, s.n, s.d);
  check_shape(v, "Q", s.Q, s.n, s.n);
  check_shape(v, "Qbar", s.Qbar, s.n, s.n);
  check_shape(v, "S", s.S, s.n, s.n);
  check_shape(v, "R", s.R, s.d, s.d);
  check_shape(v, "QT", s.QT, s.n, s.n);
  check_shape(v, "QbarT", s.QbarT, s.n, s.n);
  check_shape(v, "ST", s.ST, s.n, s.n);
  if (!v.empty()) return r;

  const std::pair<const char*, const MatrixXd*> all[] = {
      {"A", &s.A},   {"Abar", &s.Abar}, {"B", &s.B},   {"Q", &s.Q},         {"Qbar", &s.Qbar},
      {"S", &s.S},   {"R", &s.R},       {"QT", &s.QT}, {"QbarT", &s.QbarT}, {"ST", &s.ST}};
  for (const auto& [name, m] : all) {
    if (!m->allFinite()) v.push_back(std::string(name) + " has non-finite entries");
  }
  if (!std::isfinite(s.sigma) || s.sigma < 0) v.push_back("sigma must be >= 0");
  if (!std::isfinite(s.beta) || s.beta < 0) v.push_back("beta must be >= 0");
  if (!std::isfinite(s.T) || s.T <= 0) v.push_back("T must be > 0");

  if (asymmetry_inf_norm(s.R) > kSymmetryTolerance) {
    v.push_back("R not symmetric");
  } else if (s.R.allFinite()) {
    Eigen::LLT<MatrixXd> llt(s.R);
    bool pd = llt.info() == Eigen::Success;
    if (pd) {
      Eigen::SelfAdjointEigenSolver<MatrixXd> es(s.R, Eigen::EigenvaluesOnly);
      pd = es.eigenvalues().minCoeff() > 0.0;
    }
    if (!pd) v.push_back("R not positive definite");
  }

  const std::pair<const char*, const MatrixXd*> sym[] = {
      {"Q", &s.Q}, {"Qbar", &s.Qbar}, {"QT", &s.QT}, {"QbarT", &s.QbarT}};
  for (const auto& [name, m] : sym) {
    if (asymmetry_inf_norm(*m) > kSymmetryTolerance) {
      v.push_back(std::string(name) + " not symmetric");
    } else if (s.convex && m->allFinite() && !is_psd(*m)) {
      v.push_back(std::string(name) + " not positive semi-definite (convex model)");
    }
  }
  return r;
}

LQModel::LQModel(LQModelSpec spec) : spec_(std::move(spec)) {
  auto report = validate(spec_);
  if (!report.valid()) throw InvalidModel(report.violations);
  Eigen::LLT<MatrixXd> llt(spec_.R);
  rinv_bt_ = llt.solve(spec_.B.transpose());
  b_rinv_bt_ = spec_.B * rinv_bt_;
  b_rinv_bt_ = 0.5 * (b_rinv_bt_ + b_rinv_bt_.transpose()).eval();
}

double running_cost(const LQModel& model, const VectorXd& x, const MeanVector& y,
                    const VectorXd& v) {
  const auto& s = model.spec();
  require(x, s.n, "x");
  require(y.value, s.n, "y");
  require(v, s.d, "v");
  const VectorXd dev = x - s.S * y.value;
  return 0.5 * (x.dot(s.Q * x) + v.dot(s.R * v) + dev.dot(s.Qbar * dev));
}

VectorXd dynamics(const LQModel& model, const VectorXd& x, const MeanVector& y,
                  const VectorXd& v) {
  const auto& s = model.spec();
  require(x, s.n, "x");
  require(y.value, s.n, "y");
  require(v, s.d, "v");
  return s.A * x + s.Abar * y.value + s.B * v;
}

double terminal_cost(const LQModel& model, const VectorXd& x, const MeanVector& y) {
  const auto& s = model.spec();
  require(x, s.n, "x");
  require(y.value, s.n, "y");
  const VectorXd dev = x - s.ST * y.value;
  return 0.5 * (x.dot(s.QT * x) + dev.dot(s.QbarT * dev));
}

double hamiltonian(const LQModel& model, const VectorXd& x, const MeanVector& y,
                   const VectorXd& q) {
  const auto& s = model.spec();
  require(x, s.n, "x");
  require(y.value, s.n, "y");
  require(q, s.n, "q");
  const VectorXd& yv = y.value;
  const VectorXd sy = s.S * yv;
  return 0.5 * x.dot((s.Q + s.Qbar) * x) - x.dot(s.Qbar * sy) + 0.5 * sy.dot(s.Qbar * sy) -
         0.5 * q.dot(model.b_rinv_bt() * q) + q.dot(s.A * x + s.Abar * yv);
}

VectorXd optimal_feedback(const LQModel& model, const VectorXd& x, const MeanVector& y,
                          const VectorXd& q) {
  const auto& s = model.spec();
  require(x, s.n, "x");
  require(y.value, s.n, "y");
  require(q, s.n, "q");
  return -(model.rinv_bt() * q);
}

VectorXd drift_G(const LQModel& model, const VectorXd& x, const MeanVector& y,
                 const VectorXd& q) {
  const auto& s = model.spec();
  require(x, s.n, "x");
  require(y.value, s.n, "y");
  require(q, s.n, "q");
  return s.A * x + s.Abar * y.value - model.b_rinv_bt() * q;
}

MatrixXd matrix_from_json(const nlohmann::json& j) {
  if (j.is_number()) return MatrixXd::Constant(1, 1, j.get<double>());
  if (!j.is_array() || j.empty()) throw std::invalid_argument("matrix must be a non-empty array");
  if (j.front().is_number()) {
    // A flat array is read as a column vector.
    MatrixXd m(j.size(), 1);
    for (std::size_t i = 0; i < j.size(); ++i) m(i, 0) = j[i].get<double>();
    return m;
  }
  const auto rows = j.size();
  const auto cols = j.front().size();
  MatrixXd m(rows, cols);
  for (std::size_t i = 0; i < rows; ++i) {
    if (!j[i].is_array() || j[i].size() != cols) {
      throw std::invalid_argument("ragged matrix row " + std::to_string(i));
    }
    for (std::size_t k = 0; k < cols; ++k) m(i, k) = j[i][k].get<double>();
  }
  return m;
}

nlohmann::json matrix_to_json(const MatrixXd& m) {
  auto out = nlohmann::json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    auto row = nlohmann::json::array();
    for (Eigen::Index k = 0; k < m.cols(); ++k) row.push_back(m(i, k));
    out.push_back(std::move(row));
  }
  return out;
}

LQModelSpec model_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw std::invalid_argument("model document must be a JSON object");
  for (const char* key : {"n", "d", "R"}) {
    if (!j.contains(key)) throw std::invalid_argument(std::string("model is missing key '") + key + "'");
  }
  LQModelSpec s = LQModelSpec::zeros(j.at("n").get<int>(), j.at("d").get<int>());
  if (s.n <= 0 || s.d <= 0) throw std::invalid_argument("n and d must be positive");
  s.T = j.value("T", 1.0);
  s.sigma = j.value("sigma", 0.0);
  s.beta = j.value("beta", 0.0);
  s.convex = j.value("convex", false);
  auto read = [&](const char* key, MatrixXd& dst) {
    if (j.contains(key)) dst = matrix_from_json(j.at(key));
  };
  read("A", s.A);
  read("Abar", s.Abar);
  read("B", s.B);
  read("Q", s.Q);
  read("Qbar", s.Qbar);
  read("S", s.S);
  read("R", s.R);
  read("QT", s.QT);
  read("QbarT", s.QbarT);
  read("ST", s.ST);
  return s;
}

nlohmann::json model_to_json(const LQModelSpec& s) {
  nlohmann::json j;
  j["n"] = s.n;
  j["d"] = s.d;
  j["T"] = s.T;
  j["sigma"] = s.sigma;
  j["beta"] = s.beta;
  j["convex"] = s.convex;
  j["A"] = matrix_to_json(s.A);
  j["Abar"] = matrix_to_json(s.Abar);
  j["B"] = matrix_to_json(s.B);
  j["Q"] = matrix_to_json(s.Q);
  j["Qbar"] = matrix_to_json(s.Qbar);
  j["S"] = matrix_to_json(s.S);
  j["R"] = matrix_to_json(s.R);
  j["QT"] = matrix_to_json(s.QT);
  j["QbarT"] = matrix_to_json(s.QbarT);
  j["ST"] = matrix_to_json(s.ST);
  return j;
}

LQModelSpec load_model_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open model file '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::parse_error& e) {
    throw std::invalid_argument("malformed JSON in '" + path + "': " + e.what());
  }
  return model_from_json(j);
}

}  // namespace masterlq
