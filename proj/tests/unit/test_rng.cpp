#include <cmath>
#include <mutex>
#include <set>
#include <vector>

#include "doctest.h"
#include "masterlq/parallel.hpp"
#include "masterlq/particles.hpp"
#include "masterlq/rng.hpp"

using namespace masterlq;

TEST_CASE("philox4x32-10 known answers") {
  CHECK(philox4x32({0, 0, 0, 0}, {0, 0}) ==
        PhiloxCounter{0x6627e8d5u, 0xe169c58du, 0xbc57ac4cu, 0x9b00dbd8u});
  CHECK(philox4x32({0xffffffffu, 0xffffffffu, 0xffffffffu, 0xffffffffu},
                   {0xffffffffu, 0xffffffffu}) ==
        PhiloxCounter{0x408f276du, 0x41c83b0eu, 0xa20bc7c6u, 0x6d5451fdu});
  CHECK(philox4x32({0x243f6a88u, 0x85a308d3u, 0x13198a2eu, 0x03707344u},
                   {0xa4093822u, 0x299f31d0u}) ==
        PhiloxCounter{0xd16cfe09u, 0x94fdccebu, 0x5001e420u, 0x24126ea1u});
}

TEST_CASE("addressed draws are reproducible and distinct") {
  const auto a = normal_pair(7, NoiseStream::kIdiosyncratic, 3, 9, 0);
  const auto b = normal_pair(7, NoiseStream::kIdiosyncratic, 3, 9, 0);
  CHECK(a == b);
  CHECK(a != normal_pair(7, NoiseStream::kCommon, 3, 9, 0));
  CHECK(a != normal_pair(8, NoiseStream::kIdiosyncratic, 3, 9, 0));
  CHECK(a != normal_pair(7, NoiseStream::kIdiosyncratic, 4, 9, 0));
  CHECK(a != normal_pair(7, NoiseStream::kIdiosyncratic, 3, 10, 0));
  for (int i = 0; i < 100; ++i) {
    const auto u = uniform_pair(1, NoiseStream::kInitial, i, 0, 0);
    CHECK(u[0] >= 0.0);
    CHECK(u[0] < 1.0);
    CHECK(u[1] >= 0.0);
    CHECK(u[1] < 1.0);
  }
}

TEST_CASE("fill_normals has standard moments") {
  const int n = 5;
  const int draws = 20000;
  double s1 = 0, s2 = 0, s4 = 0;
  std::vector<double> buf(n);
  for (int i = 0; i < draws; ++i) {
    fill_normals(42, NoiseStream::kIdiosyncratic, i, 0, buf.data(), n);
    for (double z : buf) {
      s1 += z;
      s2 += z * z;
      s4 += z * z * z * z;
    }
  }
  const double N = static_cast<double>(draws) * n;
  CHECK(std::abs(s1 / N) < 4.0 / std::sqrt(N));
  CHECK(std::abs(s2 / N - 1.0) < 4.0 * std::sqrt(2.0 / N));
  CHECK(std::abs(s4 / N - 3.0) < 0.1);
  // A prefix of a longer fill equals the shorter fill.
  std::vector<double> longer(7), shorter(3);
  fill_normals(1, NoiseStream::kCommon, 0, 5, longer.data(), 7);
  fill_normals(1, NoiseStream::kCommon, 0, 5, shorter.data(), 3);
  for (int k = 0; k < 3; ++k) CHECK(longer[k] == shorter[k]);
}

TEST_CASE("parallel blocks cover the range once") {
  const std::size_t n = 3 * kParallelBlock + 17;
  std::vector<int> hits(n, 0);
  std::set<std::size_t> blocks;
  std::mutex mu;
  parallel_blocks(n, [&](std::size_t b, std::size_t lo, std::size_t hi) {
    for (std::size_t i = lo; i < hi; ++i) ++hits[i];
    std::lock_guard<std::mutex> lock(mu);
    blocks.insert(b);
  });
  for (int h : hits) CHECK(h == 1);
  CHECK(blocks.size() == block_count(n));
  CHECK(block_count(0) == 0);
  CHECK(worker_count() >= 1);
}

TEST_CASE("particle ensembles") {
  Eigen::VectorXd mean(2);
  mean << 1.0, -2.0;
  Eigen::MatrixXd cov(2, 2);
  cov << 2.0, 0.5, 0.5, 1.0;
  const auto X = sample_gaussian(40000, mean, cov, 11);
  CHECK(X.size() == 40000);
  CHECK(X.dim() == 2);
  CHECK(X.seed() == 11);
  CHECK((X.mean() - mean).norm() < 0.05);
  const Eigen::MatrixXd C = X.second_moment() - X.mean() * X.mean().transpose();
  CHECK((C - cov).cwiseAbs().maxCoeff() < 0.06);
  CHECK(X.centered().mean().norm() < 1e-12);
  const auto Y = sample_gaussian(40000, mean, cov, 11);
  CHECK(X.states() == Y.states());
  CHECK(X.states() != sample_gaussian(40000, mean, cov, 12).states());
  const auto Z = X.axpy(2.0, Y);
  CHECK((Z.states() - 3.0 * X.states()).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((X.shifted(mean).mean() - X.mean() - mean).norm() < 1e-12);

  Eigen::VectorXd lo(1), hi(1);
  lo << -1.0;
  hi << 3.0;
  const auto U = sample_uniform(10000, lo, hi, 5);
  CHECK(U.states().minCoeff() >= -1.0);
  CHECK(U.states().maxCoeff() <= 3.0);
  CHECK(std::abs(U.mean()(0) - 1.0) < 0.05);

  CHECK_THROWS_AS(ParticleEnsemble(RowMatrixXd(0, 2)), std::invalid_argument);
  RowMatrixXd bad = RowMatrixXd::Zero(3, 1);
  bad(1, 0) = NAN;
  CHECK_THROWS_AS(ParticleEnsemble{bad}, std::invalid_argument);
}

TEST_CASE("blocked sums are exact for integers") {
  RowMatrixXd m(5000, 2);
  for (int i = 0; i < 5000; ++i) {
    m(i, 0) = i;
    m(i, 1) = 1.0;
  }
  const auto s = blocked_column_sums(m);
  CHECK(s(0) == 4999.0 * 5000.0 / 2.0);
  CHECK(s(1) == 5000.0);
}
