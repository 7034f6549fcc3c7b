#include "masterlq/quadrature.hpp"

#include <cmath>
#include <map>
#include <mutex>
#include <stdexcept>

namespace masterlq {

namespace {

struct TensorRule {
  std::vector<Eigen::VectorXd> points;  // standard-normal coordinates
  std::vector<double> weights;
};

TensorRule tensor_rule(int order, int dim) {
  const auto rule = gauss_hermite(order);
  TensorRule out;
  std::vector<int> idx(dim, 0);
  while (true) {
    Eigen::VectorXd z(dim);
    double w = 1.0;
    for (int k = 0; k < dim; ++k) {
      z(k) = rule.nodes[idx[k]];
      w *= rule.weights[idx[k]];
    }
    out.points.push_back(std::move(z));
    out.weights.push_back(w);
    int k = 0;
    while (k < dim && ++idx[k] == order) idx[k++] = 0;
    if (k == dim) break;
  }
  return out;
}

Eigen::MatrixXd cholesky_factor(const Eigen::MatrixXd& cov) {
  Eigen::LLT<Eigen::MatrixXd> llt(cov);
  if (llt.info() != Eigen::Success) throw std::invalid_argument("covariance not positive definite");
  return llt.matrixL();
}

}  // namespace

GaussHermiteRule gauss_hermite(int order) {
  if (order < 1) throw std::invalid_argument("gauss_hermite: order must be >= 1");
  static std::mutex cache_mutex;
  static std::map<int, GaussHermiteRule> cache;
  std::lock_guard lock(cache_mutex);
  if (auto it = cache.find(order); it != cache.end()) return it->second;

  // x He_k = He_{k+1} + k He_{k-1}: symmetric Jacobi matrix with sqrt(k) off the diagonal.
  Eigen::MatrixXd J = Eigen::MatrixXd::Zero(order, order);
  for (int k = 1; k < order; ++k) J(k, k - 1) = J(k - 1, k) = std::sqrt(static_cast<double>(k));
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(J);
  GaussHermiteRule rule;
  rule.nodes.resize(order);
  rule.weights.resize(order);
  double total = 0.0;
  for (int i = 0; i < order; ++i) {
    rule.nodes[i] = es.eigenvalues()(i);
    const double v0 = es.eigenvectors()(0, i);
    rule.weights[i] = v0 * v0;
    total += rule.weights[i];
  }
  for (auto& w : rule.weights) w /= total;
  cache.emplace(order, rule);
  return rule;
}

double gaussian_expectation(const std::function<double(const Eigen::VectorXd&)>& f,
                            const Eigen::VectorXd& mean, const Eigen::MatrixXd& cov, int order) {
  const int n = static_cast<int>(mean.size());
  if (n < 1 || n > 3) throw std::invalid_argument("gaussian_expectation supports 1 <= n <= 3");
  const Eigen::MatrixXd L = cholesky_factor(cov);
  const auto rule = tensor_rule(order, n);
  double acc = 0.0;
  for (std::size_t i = 0; i < rule.points.size(); ++i) {
    acc += rule.weights[i] * f(mean + L * rule.points[i]);
  }
  return acc;
}

double gaussian_double_expectation(
    const std::function<double(const Eigen::VectorXd&, const Eigen::VectorXd&)>& f,
    const Eigen::VectorXd& mean, const Eigen::MatrixXd& cov, int order) {
  const int n = static_cast<int>(mean.size());
  if (n < 1 || n > 2) throw std::invalid_argument("gaussian_double_expectation supports n <= 2");
  const Eigen::MatrixXd L = cholesky_factor(cov);
  const auto rule = tensor_rule(order, n);
  std::vector<Eigen::VectorXd> xs;
  xs.reserve(rule.points.size());
  for (const auto& z : rule.points) xs.push_back(mean + L * z);
  double acc = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    double inner = 0.0;
    for (std::size_t j = 0; j < xs.size(); ++j) inner += rule.weights[j] * f(xs[i], xs[j]);
    acc += rule.weights[i] * inner;
  }
  return acc;
}

}  // namespace masterlq
