// Copyright (c) 2026 drmpc Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <algorithm>
#include <cmath>
#include <random>

#include <catch2/catch_amalgamated.hpp>

#include "drmpc/drcvar.hpp"
#include "drmpc/kernel.hpp"

using namespace drmpc;

TEST_CASE("risk function canonical form", "[drcvar]") {
  CHECK(risk_function({0, 0}, {1, 0}, 0.5) == Catch::Approx(-0.75));
  CHECK(risk_function({2, 3}, {2, 3}, 0.5) == Catch::Approx(0.25));
  CHECK(risk_function({0, 0}, {0.5, 0}, 0.5) == Catch::Approx(0.0).margin(1e-15));
}

TEST_CASE("cvar oracle", "[drcvar]") {
  const Eigen::VectorXd uniform2 = Eigen::VectorXd::Constant(2, 0.5);

  Eigen::VectorXd equal(3);
  equal << 4.2, 4.2, 4.2;
  const Eigen::VectorXd w3 = Eigen::VectorXd::Constant(3, 1.0 / 3.0);
  for (const double alpha : {0.1, 0.5, 1.0}) {
    CHECK(empirical_cvar_oracle(equal, w3, alpha) == Catch::Approx(4.2));
  }

  Eigen::VectorXd two(2);
  two << 0.0, 1.0;
  CHECK(empirical_cvar_oracle(two, uniform2, 0.5) == Catch::Approx(1.0));

  // alpha = 1 recovers the mean.
  Eigen::VectorXd losses(4);
  losses << -1.0, 0.5, 2.0, 3.5;
  const Eigen::VectorXd w4 = Eigen::VectorXd::Constant(4, 0.25);
  CHECK(empirical_cvar_oracle(losses, w4, 1.0) ==
        Catch::Approx(losses.mean()));

  CHECK_THROWS_AS(empirical_cvar_oracle(two, uniform2, 0.0),
                  std::invalid_argument);
  CHECK_THROWS_AS(empirical_cvar_oracle(two, uniform2, 1.5),
                  std::invalid_argument);
}

TEST_CASE("hinge split is exact", "[drcvar]") {
  // (a)_+ <= b iff (a <= b and 0 <= b), sampled over random scalars.
  std::mt19937 rng(31);
  std::uniform_real_distribution<double> u(-3, 3);
  for (int trial = 0; trial < 1000; ++trial) {
    const double a = u(rng), b = u(rng);
    const bool hinge = std::max(a, 0.0) <= b;
    const bool split = (a <= b) && (0.0 <= b);
    CHECK(hinge == split);
  }
}

namespace {

DrCvarBlock random_block(int ns, double epsilon, double alpha, unsigned seed) {
  std::mt19937 rng(seed);
  std::normal_distribution<double> g(0, 1);
  Eigen::MatrixXd samples(2, ns);
  for (int c = 0; c < ns; ++c) {
    samples(0, c) = 3.0 * g(rng);
    samples(1, c) = 3.0 * g(rng);
  }
  const KernelConfig out{KernelFamily::kRbf, 1.0};
  return build_block(1, samples, gram_matrix(samples, out),
                     {epsilon, alpha}, 0.5);
}

}  // namespace

TEST_CASE("zero auxiliaries far from every sample satisfy the block",
          "[drcvar]") {
  const DrCvarBlock block = random_block(4, 0.7, 0.2, 3);
  const Eigen::VectorXd gamma = Eigen::VectorXd::Zero(4);
  const Eigen::VectorXd beta = Eigen::VectorXd::Constant(4, 0.25);
  const Eigen::Vector2d far{100.0, 100.0};

  // sigma2 keeps the head row marginally above zero at gamma = 0; the
  // perturbation is epsilon * sqrt(sigma2) = 0.7e-6 at most.
  CHECK(block.head_value(beta, gamma, 0.0, 0.0) <= 1e-5);
  for (int j = 0; j < 4; ++j) {
    CHECK(block.hinge_upper_value(j, far, gamma, 0.0, 0.0) < 0.0);
    CHECK(block.hinge_lower_value(j, gamma, 0.0) == 0.0);
  }
}

TEST_CASE("head row is nondecreasing in epsilon", "[drcvar]") {
  std::mt19937 rng(41);
  std::normal_distribution<double> g(0, 1);
  for (int trial = 0; trial < 30; ++trial) {
    DrCvarBlock lo = random_block(5, 0.1, 0.3, 100 + trial);
    DrCvarBlock hi = lo;
    hi.ambiguity.epsilon = 0.9;
    Eigen::VectorXd gamma(5), beta(5);
    for (int k = 0; k < 5; ++k) {
      gamma[k] = g(rng);
      beta[k] = g(rng);
    }
    const double t = g(rng), go = g(rng);
    CHECK(hi.head_value(beta, gamma, t, go) >=
          lo.head_value(beta, gamma, t, go));
  }
}

TEST_CASE("conic term ignores the Gram null space", "[drcvar]") {
  // Duplicate sample points make K rank deficient; adding a null-space
  // vector to gamma must not change sqrt(gamma' K gamma).
  Eigen::MatrixXd samples(2, 3);
  samples << 1.0, 1.0, -2.0, 0.5, 0.5, 0.0;  // first two identical
  const KernelConfig out{KernelFamily::kRbf, 1.0};
  const Eigen::MatrixXd k = gram_matrix(samples, out);
  DrCvarBlock block = build_block(1, samples, k, {0.5, 0.5}, 0.5);

  Eigen::VectorXd nullvec(3);
  nullvec << 1.0, -1.0, 0.0;  // K * nullvec = 0 by symmetry of duplicates
  REQUIRE((k * nullvec).norm() <= 1e-14);

  Eigen::VectorXd gamma(3);
  gamma << 0.3, -0.7, 1.1;
  const Eigen::VectorXd beta = Eigen::VectorXd::Constant(3, 1.0 / 3.0);
  const double base = block.head_value(beta, gamma, 0.2, 0.1);
  const double shifted = block.head_value(beta, gamma + 2.5 * nullvec, 0.2, 0.1);
  // beta' K gamma is also invariant since K nullvec = 0.
  CHECK(shifted == Catch::Approx(base).margin(1e-9));
}

TEST_CASE("block validation", "[drcvar]") {
  Eigen::MatrixXd samples(2, 2);
  samples << 0, 1, 0, 0;
  const Eigen::MatrixXd k =
      gram_matrix(samples, {KernelFamily::kRbf, 1.0});
  CHECK_THROWS_AS(build_block(1, Eigen::MatrixXd(2, 0), k, {0.1, 0.2}, 0.5),
                  std::invalid_argument);
  CHECK_THROWS_AS(build_block(1, samples, Eigen::MatrixXd::Identity(3, 3),
                              {0.1, 0.2}, 0.5),
                  std::invalid_argument);
  CHECK_THROWS_AS(build_block(1, samples, k, {-0.1, 0.2}, 0.5),
                  std::invalid_argument);
  CHECK_THROWS_AS(build_block(1, samples, k, {0.1, 0.0}, 0.5),
                  std::invalid_argument);
}
