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

#include <cmath>
#include <random>

#include <Eigen/Eigenvalues>
#include <catch2/catch_amalgamated.hpp>

#include "drmpc/kernel.hpp"

using namespace drmpc;

TEST_CASE("rbf kernel values", "[kernel]") {
  const KernelConfig cfg{KernelFamily::kRbf, 1.5};
  Eigen::VectorXd x(3), y(3);
  x << 1, 2, 3;
  y = x;
  CHECK(rbf_kernel(x, y, cfg) == 1.0);

  // |x - y|^2 = 2 l^2 gives exactly exp(-1).
  y << 1 + 1.5 * std::sqrt(2.0), 2, 3;
  CHECK(rbf_kernel(x, y, cfg) == Catch::Approx(std::exp(-1.0)).epsilon(1e-12));

  Eigen::VectorXd z(2);
  CHECK_THROWS_AS(rbf_kernel(x, z, cfg), std::invalid_argument);
}

TEST_CASE("rbf kernel symmetry and range", "[kernel]") {
  const KernelConfig cfg{KernelFamily::kRbf, 0.7};
  std::mt19937 rng(3);
  std::normal_distribution<double> n(0, 2);
  for (int trial = 0; trial < 50; ++trial) {
    Eigen::VectorXd x(4), y(4);
    for (int k = 0; k < 4; ++k) {
      x[k] = n(rng);
      y[k] = n(rng);
    }
    const double kxy = rbf_kernel(x, y, cfg);
    CHECK(kxy == rbf_kernel(y, x, cfg));
    CHECK(kxy > 0.0);
    CHECK(kxy <= 1.0);
  }
}

TEST_CASE("gram matrix basics", "[kernel]") {
  const KernelConfig cfg{KernelFamily::kRbf, 1.0};
  Eigen::MatrixXd twins(2, 2);
  twins << 3, 3, -1, -1;
  const Eigen::MatrixXd g = gram_matrix(twins, cfg);
  CHECK(g.isApprox(Eigen::MatrixXd::Ones(2, 2)));

  Eigen::MatrixXd single(2, 1);
  single << 0.5, 0.25;
  CHECK(gram_matrix(single, cfg) == Eigen::MatrixXd::Ones(1, 1));
}

TEST_CASE("gram matrices are PSD with unit diagonal", "[kernel]") {
  const KernelConfig cfg{KernelFamily::kRbf, 0.8};
  std::mt19937 rng(17);
  std::normal_distribution<double> n(0, 1);
  for (int trial = 0; trial < 10; ++trial) {
    Eigen::MatrixXd pts(3, 12);
    for (Eigen::Index c = 0; c < pts.cols(); ++c) {
      for (Eigen::Index r = 0; r < pts.rows(); ++r) pts(r, c) = n(rng);
    }
    const Eigen::MatrixXd g = gram_matrix(pts, cfg);
    CHECK(g.isApprox(g.transpose()));
    CHECK(g.diagonal().isApproxToConstant(1.0));
    const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(g);
    CHECK(eig.eigenvalues().minCoeff() >= -1e-10);
  }
}

TEST_CASE("median heuristic", "[kernel]") {
  Eigen::MatrixXd pair(1, 2);
  pair << 0, 2;
  CHECK(median_heuristic(pair) == Catch::Approx(2.0));

  Eigen::MatrixXd triple(1, 3);
  triple << 0, 1, 2;  // pairwise distances {1, 1, 2}
  CHECK(median_heuristic(triple) == Catch::Approx(1.0));

  Eigen::MatrixXd identical(1, 2);
  identical << 0, 0;
  CHECK_THROWS_AS(median_heuristic(identical), std::invalid_argument);

  Eigen::MatrixXd one(1, 1);
  one << 4;
  CHECK_THROWS_AS(median_heuristic(one), std::invalid_argument);
}
