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

#pragma once

#include <stdexcept>
#include <string>

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include "drmpc/kernel.hpp"

namespace drmpc {

/// Training set for one lookahead step: conditioning contexts and the
/// obstacle position observed that many steps later.
///
/// Contexts are stored one per column with dimension 2 * (lookahead + 1);
/// outputs are 2-D positions, one per column.
struct LookaheadDataset {
  int lookahead{1};
  Eigen::MatrixXd contexts;  ///< dim_z x N_s
  Eigen::MatrixXd outputs;   ///< 2 x N_s

  Eigen::Index size() const { return contexts.cols(); }
  static Eigen::Index context_dim(int lookahead) {
    return 2 * (static_cast<Eigen::Index>(lookahead) + 1);
  }
};

/// Fitted conditional mean embedding for one lookahead step.
///
/// Immutable after fit; evaluation is pure, so a model may be shared across
/// any number of concurrent planner or simulation workers.
struct CkmeModel {
  int lookahead{1};
  Eigen::MatrixXd inputs;    ///< training contexts, dim_z x N_s
  Eigen::MatrixXd outputs;   ///< observed obstacle positions, 2 x N_s
  KernelConfig input_kernel;
  KernelConfig output_kernel;
  double lambda{1e-4};
  /// (K_Y + N_s * lambda * I)^{-1}, precomputed at fit time.
  Eigen::MatrixXd weight_matrix;
  /// Gram matrix of the training outputs under the output kernel.
  Eigen::MatrixXd output_gram;

  Eigen::Index sample_count() const { return inputs.cols(); }
  Eigen::Index context_dim() const { return inputs.rows(); }
};

/// Fits the regularized empirical embedding: factors K_Y + N_s*lambda*I
/// (symmetric positive definite for lambda > 0) and stores its inverse
/// together with the output Gram matrix.
inline CkmeModel ckme_fit(const LookaheadDataset& data,
                          const KernelConfig& input_kernel,
                          const KernelConfig& output_kernel, double lambda) {
  const Eigen::Index n = data.size();
  if (n < 1) {
    throw std::invalid_argument("ckme_fit: empty dataset");
  }
  if (lambda <= 0.0) {
    throw std::invalid_argument("ckme_fit: lambda must be positive");
  }
  if (data.outputs.cols() != n) {
    throw std::invalid_argument("ckme_fit: context/output count mismatch");
  }

  CkmeModel model;
  model.lookahead = data.lookahead;
  model.inputs = data.contexts;
  model.outputs = data.outputs;
  model.input_kernel = input_kernel;
  model.output_kernel = output_kernel;
  model.lambda = lambda;

  Eigen::MatrixXd regularized = gram_matrix(data.contexts, input_kernel);
  regularized.diagonal().array() += static_cast<double>(n) * lambda;
  const Eigen::LLT<Eigen::MatrixXd> llt(regularized);
  if (llt.info() != Eigen::Success) {
    throw std::runtime_error(
        "ckme_fit: Cholesky factorization failed; regularized Gram matrix "
        "not positive definite (N_s = " + std::to_string(n) +
        ", lambda = " + std::to_string(lambda) + ")");
  }
  model.weight_matrix =
      llt.solve(Eigen::MatrixXd::Identity(n, n));
  model.output_gram = gram_matrix(data.outputs, output_kernel);
  return model;
}

/// Kernel vector k_y(z), entry j = k_Y(training context j, z).
inline Eigen::VectorXd ckme_kernel_vector(
    const CkmeModel& model, const Eigen::Ref<const Eigen::VectorXd>& z) {
  if (z.size() != model.context_dim()) {
    throw std::invalid_argument(
        "ckme: query dimension " + std::to_string(z.size()) +
        " does not match model dimension " +
        std::to_string(model.context_dim()));
  }
  const Eigen::Index n = model.sample_count();
  Eigen::VectorXd k(n);
  for (Eigen::Index j = 0; j < n; ++j) {
    k[j] = rbf_kernel(model.inputs.col(j), z, model.input_kernel);
  }
  return k;
}

/// Context-dependent coefficients beta(z) = (K_Y + N_s*lambda*I)^{-1} k_y(z).
/// Entries may be negative; no clipping or renormalization is applied.
inline Eigen::VectorXd ckme_weights(const CkmeModel& model,
                                    const Eigen::Ref<const Eigen::VectorXd>& z) {
  return model.weight_matrix * ckme_kernel_vector(model, z);
}

/// Predicted obstacle position: sum_j beta_j(z) * training output j.
inline Eigen::Vector2d ckme_predict(const CkmeModel& model,
                                    const Eigen::Ref<const Eigen::VectorXd>& z) {
  return model.outputs * ckme_weights(model, z);
}

/// Analytic Jacobian of the prediction w.r.t. the query vector, shape
/// 2 x dim(z). Uses d k(zhat_j, z)/dz = k(zhat_j, z) * (zhat_j - z) / l^2.
inline Eigen::MatrixXd ckme_predict_gradient(
    const CkmeModel& model, const Eigen::Ref<const Eigen::VectorXd>& z) {
  const Eigen::VectorXd k = ckme_kernel_vector(model, z);
  const Eigen::Index n = model.sample_count();
  const Eigen::Index d = model.context_dim();
  const double inv_l2 =
      1.0 / (model.input_kernel.length_scale * model.input_kernel.length_scale);
  Eigen::MatrixXd kernel_jac(n, d);
  for (Eigen::Index j = 0; j < n; ++j) {
    kernel_jac.row(j) = k[j] * inv_l2 * (model.inputs.col(j) - z).transpose();
  }
  return model.outputs * (model.weight_matrix * kernel_jac);
}

}  // namespace drmpc
