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

#include <catch2/catch_amalgamated.hpp>

#include "drmpc/mmd.hpp"

using namespace drmpc;

TEST_CASE("mmd of identical sample sets is zero", "[mmd]") {
  Eigen::MatrixXd x(2, 5);
  x << 1, 2, 3, 4, 5, -1, 0, 1, 0, -1;
  CHECK(empirical_mmd(x, x, {KernelFamily::kRbf, 1.0}) == 0.0);
}

TEST_CASE("two-singleton closed form", "[mmd]") {
  const double ell = 0.8;
  const KernelConfig cfg{KernelFamily::kRbf, ell};
  for (const double d : {0.1, 0.5, 2.0, 10.0}) {
    Eigen::MatrixXd x(1, 1), y(1, 1);
    x << 0.0;
    y << d;
    const double expected =
        std::sqrt(2.0 - 2.0 * std::exp(-d * d / (2.0 * ell * ell)));
    CHECK(empirical_mmd(x, y, cfg) == Catch::Approx(expected).epsilon(1e-12));
  }
}

TEST_CASE("mmd is symmetric and rejects empty sets", "[mmd]") {
  std::mt19937 rng(9);
  std::normal_distribution<double> g(0, 1);
  Eigen::MatrixXd x(2, 6), y(2, 4);
  for (Eigen::Index c = 0; c < 6; ++c) { x(0, c) = g(rng); x(1, c) = g(rng); }
  for (Eigen::Index c = 0; c < 4; ++c) { y(0, c) = g(rng) + 1; y(1, c) = g(rng); }
  const KernelConfig cfg{KernelFamily::kRbf, 1.0};
  CHECK(empirical_mmd(x, y, cfg) == Catch::Approx(empirical_mmd(y, x, cfg)));
  Eigen::MatrixXd empty(2, 0);
  CHECK_THROWS_AS(empirical_mmd(x, empty, cfg), std::invalid_argument);
}

TEST_CASE("analytic radius formula", "[mmd]") {
  CHECK(analytic_radius(1.0, 100, 0.05) ==
        Catch::Approx(0.1 + std::sqrt(2.0 * std::log(20.0) / 100.0))
            .epsilon(1e-12));
  CHECK(analytic_radius(1.0, 100, 0.05) == Catch::Approx(0.34477).epsilon(1e-4));
  // delta = 1 leaves only the sqrt(C/N) term.
  CHECK(analytic_radius(1.0, 25, 1.0) == Catch::Approx(0.2));
  // Vanishes as N grows.
  CHECK(analytic_radius(1.0, 100000000, 0.05) < 1e-3);
  CHECK_THROWS_AS(analytic_radius(1.0, 100, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(analytic_radius(1.0, 100, 1.5), std::invalid_argument);
  CHECK_THROWS_AS(analytic_radius(1.0, 0, 0.05), std::invalid_argument);
}

TEST_CASE("bootstrap radius basics", "[mmd]") {
  const KernelConfig cfg{KernelFamily::kRbf, 1.0};

  // All data identical: every resample equals the original sample.
  Eigen::MatrixXd same = Eigen::MatrixXd::Constant(2, 10, 3.25);
  CHECK(bootstrap_radius(same, cfg, 200, 0.05, 1) == 0.0);

  std::mt19937 rng(12);
  std::normal_distribution<double> g(0, 1);
  Eigen::MatrixXd data(2, 30);
  for (Eigen::Index c = 0; c < 30; ++c) {
    data(0, c) = g(rng);
    data(1, c) = g(rng);
  }
  const double eps = bootstrap_radius(data, cfg, 500, 0.05, 7);
  CHECK(eps > 0.0);
  CHECK(eps <= analytic_radius(1.0, 30, 0.05));

  // Smaller delta means a higher quantile.
  const double eps_tight = bootstrap_radius(data, cfg, 500, 0.01, 7);
  const double eps_loose = bootstrap_radius(data, cfg, 500, 0.5, 7);
  CHECK(eps_tight >= eps);
  CHECK(eps >= eps_loose);

  CHECK_THROWS_AS(bootstrap_radius(data, cfg, 99, 0.05, 7),
                  std::invalid_argument);
  Eigen::MatrixXd tiny(2, 1);
  CHECK_THROWS_AS(bootstrap_radius(tiny, cfg, 500, 0.05, 7),
                  std::invalid_argument);
}
