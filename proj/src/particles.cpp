#include "masterlq/particles.hpp"

#include <stdexcept>

#include "masterlq/parallel.hpp"
#include "masterlq/rng.hpp"

namespace masterlq {

ParticleEnsemble::ParticleEnsemble(RowMatrixXd states, std::uint64_t seed)
    : states_(std::move(states)), seed_(seed) {
  if (states_.rows() < 1 || states_.cols() < 1) {
    throw std::invalid_argument("particle ensemble must have N >= 1 and n >= 1");
  }
  if (!states_.allFinite()) throw std::invalid_argument("particle ensemble has non-finite states");
}

Eigen::VectorXd blocked_column_sums(const RowMatrixXd& m) {
  const auto n = static_cast<std::size_t>(m.rows());
  Eigen::VectorXd total = Eigen::VectorXd::Zero(m.cols());
  for (std::size_t b = 0; b < block_count(n); ++b) {
    const auto begin = static_cast<Eigen::Index>(b * kParallelBlock);
    const auto len = std::min<Eigen::Index>(m.rows() - begin, kParallelBlock);
    total += m.middleRows(begin, len).colwise().sum().transpose();
  }
  return total;
}

Eigen::VectorXd ParticleEnsemble::mean() const {
  return blocked_column_sums(states_) / static_cast<double>(size());
}

Eigen::MatrixXd ParticleEnsemble::second_moment() const {
  Eigen::MatrixXd acc = Eigen::MatrixXd::Zero(dim(), dim());
  const auto n = static_cast<std::size_t>(size());
  for (std::size_t b = 0; b < block_count(n); ++b) {
    const auto begin = static_cast<Eigen::Index>(b * kParallelBlock);
    const auto len = std::min<Eigen::Index>(size() - begin, kParallelBlock);
    const auto blk = states_.middleRows(begin, len);
    acc += blk.transpose() * blk;
  }
  return acc / static_cast<double>(size());
}

ParticleEnsemble ParticleEnsemble::shifted(const Eigen::VectorXd& by) const {
  RowMatrixXd s = states_;
  s.rowwise() += by.transpose();
  return ParticleEnsemble(std::move(s), seed_);
}

ParticleEnsemble ParticleEnsemble::axpy(double theta, const ParticleEnsemble& other) const {
  if (other.size() != size() || other.dim() != dim()) {
    throw std::invalid_argument("axpy: ensembles differ in size or dimension");
  }
  return ParticleEnsemble(states_ + theta * other.states_, seed_);
}

ParticleEnsemble ParticleEnsemble::centered() const { return shifted(-mean()); }

ParticleEnsemble sample_gaussian(Eigen::Index N, const Eigen::VectorXd& mean,
                                 const Eigen::MatrixXd& cov, std::uint64_t seed) {
  const auto n = mean.size();
  if (N < 1) throw std::invalid_argument("sample_gaussian: N must be >= 1");
  if (cov.rows() != n || cov.cols() != n) throw std::invalid_argument("sample_gaussian: covariance shape");
  Eigen::LLT<Eigen::MatrixXd> llt(cov);
  if (llt.info() != Eigen::Success) throw std::invalid_argument("sample_gaussian: covariance not positive definite");
  const Eigen::MatrixXd L = llt.matrixL();
  RowMatrixXd states(N, n);
  Eigen::VectorXd z(n);
  for (Eigen::Index i = 0; i < N; ++i) {
    fill_normals(seed, NoiseStream::kInitial, static_cast<std::uint32_t>(i), 0, z.data(),
                 static_cast<int>(n));
    states.row(i) = (mean + L * z).transpose();
  }
  return ParticleEnsemble(std::move(states), seed);
}

ParticleEnsemble sample_uniform(Eigen::Index N, const Eigen::VectorXd& lo,
                                const Eigen::VectorXd& hi, std::uint64_t seed) {
  const auto n = lo.size();
  if (N < 1) throw std::invalid_argument("sample_uniform: N must be >= 1");
  if (hi.size() != n || (hi.array() <= lo.array()).any()) {
    throw std::invalid_argument("sample_uniform: need lo < hi componentwise");
  }
  RowMatrixXd states(N, n);
  for (Eigen::Index i = 0; i < N; ++i) {
    for (Eigen::Index k = 0; k < n; k += 2) {
      const auto u = uniform_pair(seed, NoiseStream::kInitial, static_cast<std::uint32_t>(i), 1,
                                  static_cast<std::uint32_t>(k / 2));
      states(i, k) = lo(k) + (hi(k) - lo(k)) * u[0];
      if (k + 1 < n) states(i, k + 1) = lo(k + 1) + (hi(k + 1) - lo(k + 1)) * u[1];
    }
  }
  return ParticleEnsemble(std::move(states), seed);
}

}  // namespace masterlq
