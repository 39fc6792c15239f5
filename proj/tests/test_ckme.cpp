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

#include "drmpc/ckme.hpp"

using namespace drmpc;

namespace {

LookaheadDataset random_dataset(int n, int dim, unsigned seed) {
  std::mt19937 rng(seed);
  std::normal_distribution<double> g(0, 1);
  LookaheadDataset data;
  data.lookahead = dim / 2 - 1;
  data.contexts.resize(dim, n);
  data.outputs.resize(2, n);
  for (int c = 0; c < n; ++c) {
    for (int r = 0; r < dim; ++r) data.contexts(r, c) = g(rng);
    data.outputs(0, c) = g(rng);
    data.outputs(1, c) = g(rng);
  }
  return data;
}

const KernelConfig kIn{KernelFamily::kRbf, 1.3};
const KernelConfig kOut{KernelFamily::kRbf, 0.9};

}  // namespace

TEST_CASE("single-sample fit has closed form 1/(1+lambda)", "[ckme]") {
  LookaheadDataset data;
  data.lookahead = 1;
  data.contexts = Eigen::MatrixXd::Zero(4, 1);
  data.contexts << 0, 0.5, 10, 0.5;
  data.outputs = Eigen::MatrixXd::Zero(2, 1);
  data.outputs << 10.1, 0.5;

  const double lambda = 1e-4;
  const CkmeModel model = ckme_fit(data, kIn, kOut, lambda);
  CHECK(model.weight_matrix(0, 0) == Catch::Approx(1.0 / (1.0 + lambda)));

  const Eigen::VectorXd beta = ckme_weights(model, data.contexts.col(0));
  CHECK(beta[0] == Catch::Approx(0.99990).epsilon(1e-4));

  const Eigen::Vector2d pred = ckme_predict(model, data.contexts.col(0));
  CHECK(pred.isApprox(data.outputs.col(0) / (1.0 + lambda), 1e-12));
}

TEST_CASE("fit rejects bad inputs", "[ckme]") {
  LookaheadDataset empty;
  empty.contexts.resize(4, 0);
  empty.outputs.resize(2, 0);
  CHECK_THROWS_AS(ckme_fit(empty, kIn, kOut, 1e-4), std::invalid_argument);

  auto data = random_dataset(5, 4, 1);
  CHECK_THROWS_AS(ckme_fit(data, kIn, kOut, 0.0), std::invalid_argument);
}

TEST_CASE("weight matrix residual", "[ckme]") {
  const auto data = random_dataset(20, 6, 5);
  const CkmeModel model = ckme_fit(data, kIn, kOut, 1e-4);
  Eigen::MatrixXd reg = gram_matrix(data.contexts, kIn);
  reg.diagonal().array() += 20 * 1e-4;
  const Eigen::MatrixXd residual =
      model.weight_matrix * reg - Eigen::MatrixXd::Identity(20, 20);
  CHECK(residual.cwiseAbs().maxCoeff() <= 1e-8);
  CHECK(model.weight_matrix.isApprox(model.weight_matrix.transpose(), 1e-10));
}

TEST_CASE("far query drives weights and prediction to zero", "[ckme]") {
  const auto data = random_dataset(6, 4, 9);
  const CkmeModel model = ckme_fit(data, kIn, kOut, 1e-4);
  Eigen::VectorXd far = Eigen::VectorXd::Constant(4, 1e3);
  CHECK(ckme_weights(model, far).cwiseAbs().maxCoeff() < 1e-12);
  CHECK(ckme_predict(model, far).norm() < 1e-12);
}

TEST_CASE("small lambda interpolates the training outputs", "[ckme]") {
  // Oracle: direct linear solve of (K + N lambda I) beta = k_y at a
  // training context; as lambda -> 0, beta -> the standard basis vector.
  const auto data = random_dataset(8, 6, 13);
  const CkmeModel model = ckme_fit(data, kIn, kOut, 1e-10);
  for (int j = 0; j < 8; ++j) {
    const Eigen::Vector2d pred = ckme_predict(model, data.contexts.col(j));
    CHECK((pred - data.outputs.col(j)).norm() <= 1e-6);
  }
  Eigen::MatrixXd reg = gram_matrix(data.contexts, kIn);
  reg.diagonal().array() += 8 * 1e-10;
  const Eigen::VectorXd k0 = ckme_kernel_vector(model, data.contexts.col(0));
  const Eigen::VectorXd beta_direct = reg.ldlt().solve(k0);
  CHECK((ckme_weights(model, data.contexts.col(0)) - beta_direct).norm() <=
        1e-8);
}

TEST_CASE("prediction is linear in the training outputs", "[ckme]") {
  const auto data = random_dataset(7, 4, 21);
  auto scaled = data;
  scaled.outputs *= 3.5;
  const CkmeModel a = ckme_fit(data, kIn, kOut, 1e-4);
  const CkmeModel b = ckme_fit(scaled, kIn, kOut, 1e-4);
  std::mt19937 rng(2);
  std::normal_distribution<double> g(0, 1);
  for (int trial = 0; trial < 10; ++trial) {
    Eigen::VectorXd z(4);
    for (int k = 0; k < 4; ++k) z[k] = g(rng);
    CHECK(ckme_predict(b, z).isApprox(3.5 * ckme_predict(a, z), 1e-10));
  }
}

TEST_CASE("weight norm is nonincreasing in lambda", "[ckme]") {
  const auto data = random_dataset(10, 6, 33);
  std::mt19937 rng(4);
  std::normal_distribution<double> g(0, 1);
  const double lambdas[] = {1e-6, 1e-4, 1e-2, 1e-1, 1.0};
  for (int trial = 0; trial < 5; ++trial) {
    Eigen::VectorXd z(6);
    for (int k = 0; k < 6; ++k) z[k] = g(rng);
    double prev = std::numeric_limits<double>::infinity();
    for (const double lambda : lambdas) {
      const CkmeModel model = ckme_fit(data, kIn, kOut, lambda);
      const double norm = ckme_weights(model, z).norm();
      CHECK(norm <= prev + 1e-12);
      prev = norm;
    }
  }
}

TEST_CASE("prediction gradient matches finite differences", "[ckme]") {
  const auto data = random_dataset(9, 6, 41);
  const CkmeModel model = ckme_fit(data, kIn, kOut, 1e-4);
  std::mt19937 rng(6);
  std::normal_distribution<double> g(0, 1);
  const double h = 1e-6;
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    Eigen::VectorXd z(6);
    for (int k = 0; k < 6; ++k) z[k] = g(rng);
    const Eigen::MatrixXd jac = ckme_predict_gradient(model, z);
    Eigen::MatrixXd fd(2, 6);
    for (int k = 0; k < 6; ++k) {
      Eigen::VectorXd zp = z, zm = z;
      zp[k] += h;
      zm[k] -= h;
      fd.col(k) = (ckme_predict(model, zp) - ckme_predict(model, zm)) / (2 * h);
    }
    const double scale = std::max(1.0, fd.cwiseAbs().maxCoeff());
    worst = std::max(worst, (jac - fd).cwiseAbs().maxCoeff() / scale);
  }
  CHECK(worst <= 1e-5);
}

TEST_CASE("gradient vanishes at an isolated training context", "[ckme]") {
  LookaheadDataset data;
  data.lookahead = 1;
  data.contexts = Eigen::MatrixXd::Zero(4, 1);
  data.outputs = Eigen::MatrixXd::Zero(2, 1);
  data.outputs << 2.0, -1.0;
  const CkmeModel model = ckme_fit(data, kIn, kOut, 1e-4);
  CHECK(ckme_predict_gradient(model, data.contexts.col(0)).norm() == 0.0);
}

TEST_CASE("gradient scales with the outputs", "[ckme]") {
  const auto data = random_dataset(5, 4, 55);
  auto scaled = data;
  scaled.outputs *= -2.0;
  const CkmeModel a = ckme_fit(data, kIn, kOut, 1e-4);
  const CkmeModel b = ckme_fit(scaled, kIn, kOut, 1e-4);
  Eigen::VectorXd z = Eigen::VectorXd::LinSpaced(4, -1, 1);
  CHECK(ckme_predict_gradient(b, z).isApprox(-2.0 * ckme_predict_gradient(a, z),
                                             1e-10));
}
