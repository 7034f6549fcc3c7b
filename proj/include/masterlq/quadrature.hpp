#pragma once

#include <functional>
#include <vector>

#include <Eigen/Dense>

namespace masterlq {

/// Gauss-Hermite rule for the standard normal weight (weights sum to one).
struct GaussHermiteRule {
  std::vector<double> nodes;
  std::vector<double> weights;
};

/// Golub-Welsch construction from the probabilists' Hermite recurrence.
GaussHermiteRule gauss_hermite(int order);

/// E f(X) for X ~ N(mean, cov) with a tensor-product rule (order^n points).
double gaussian_expectation(const std::function<double(const Eigen::VectorXd&)>& f,
                            const Eigen::VectorXd& mean, const Eigen::MatrixXd& cov, int order);

/// E f(X, Y) for independent X, Y ~ N(mean, cov) (order^(2n) points).
double gaussian_double_expectation(
    const std::function<double(const Eigen::VectorXd&, const Eigen::VectorXd&)>& f,
    const Eigen::VectorXd& mean, const Eigen::MatrixXd& cov, int order);

}  // namespace masterlq
