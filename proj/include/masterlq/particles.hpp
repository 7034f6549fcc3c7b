#pragma once

#include <cstdint>

#include <Eigen/Dense>

namespace masterlq {

using RowMatrixXd = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// N samples in R^n standing in for a lifted random variable X and its law.
class ParticleEnsemble {
 public:
  ParticleEnsemble() = default;
  /// Throws std::invalid_argument on an empty or non-finite ensemble.
  explicit ParticleEnsemble(RowMatrixXd states, std::uint64_t seed = 0);

  Eigen::Index size() const noexcept { return states_.rows(); }
  int dim() const noexcept { return static_cast<int>(states_.cols()); }
  std::uint64_t seed() const noexcept { return seed_; }

  const RowMatrixXd& states() const noexcept { return states_; }
  auto particle(Eigen::Index i) const { return states_.row(i); }

  /// Empirical mean, summed in fixed blocks so the result is schedule independent.
  Eigen::VectorXd mean() const;
  /// Empirical E[X X'].
  Eigen::MatrixXd second_moment() const;

  ParticleEnsemble shifted(const Eigen::VectorXd& by) const;
  /// X + theta Y, sample-wise.
  ParticleEnsemble axpy(double theta, const ParticleEnsemble& other) const;
  /// Subtracts the empirical mean (exactly zero mean up to roundoff).
  ParticleEnsemble centered() const;

 private:
  RowMatrixXd states_;
  std::uint64_t seed_ = 0;
};

/// Samples N(mean, cov) through a Cholesky factor of cov.
ParticleEnsemble sample_gaussian(Eigen::Index N, const Eigen::VectorXd& mean,
                                 const Eigen::MatrixXd& cov, std::uint64_t seed);

/// Samples the uniform law on the box [lo, hi].
ParticleEnsemble sample_uniform(Eigen::Index N, const Eigen::VectorXd& lo,
                                const Eigen::VectorXd& hi, std::uint64_t seed);

/// Blocked row sum; bit-identical for any worker count.
Eigen::VectorXd blocked_column_sums(const RowMatrixXd& m);

}  // namespace masterlq
