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

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include <Eigen/Core>

namespace drmpc {

/// Distributional-robustness parameters: MMD radius and CVaR level.
struct AmbiguityConfig {
  double epsilon{0.0};  ///< ambiguity radius, >= 0
  double alpha{0.2};    ///< CVaR level, in (0, 1]
};

/// Signed collision risk. Nonpositive iff the Euclidean distance between the
/// two points is at least d_safe. The squared-margin form is smooth and is
/// used by all planner modes so comparisons are like for like.
inline double risk_function(const Eigen::Vector2d& p,
                            const Eigen::Vector2d& p_obs, double d_safe) {
  return d_safe * d_safe - (p - p_obs).squaredNorm();
}

/// Worst-case-CVaR collision constraint block for one prediction step.
///
/// With auxiliaries gamma in R^{N_s}, t, g_o appended to the decision vector,
/// the block contributes the rows (all feasible iff <= 0):
///
///   (C1)   g_o + sum_j beta_j (K gamma)_j
///              + epsilon * sqrt(gamma' K gamma + sigma2) - t * alpha
///   (C2a)  d_safe^2 - |p - sample_j|^2 + t - g_o - (K gamma)_j,  j in [N_s]
///   (C2b)  -g_o - (K gamma)_j,                                   j in [N_s]
///
/// (C2a) and (C2b) jointly encode the hinge (x)_+ <= y exactly, since
/// (x)_+ <= y iff x <= y and 0 <= y. The constant sigma2 inside the root
/// keeps the row differentiable at gamma = 0; its worst-case perturbation
/// of the row value is epsilon * sqrt(sigma2).
struct DrCvarBlock {
  int step{1};
  Eigen::MatrixXd samples;      ///< training outputs p_hat_j, 2 x N_s
  Eigen::MatrixXd output_gram;  ///< K_X over the samples, N_s x N_s
  double d_safe{0.5};
  AmbiguityConfig ambiguity;
  double sigma2{1e-12};

  Eigen::Index sample_count() const { return samples.cols(); }

  double head_value(const Eigen::Ref<const Eigen::VectorXd>& beta,
                    const Eigen::Ref<const Eigen::VectorXd>& gamma, double t,
                    double g_o) const {
    const Eigen::VectorXd kg = output_gram * gamma;
    const double root = std::sqrt(gamma.dot(kg) + sigma2);
    return g_o + beta.dot(kg) + ambiguity.epsilon * root - t * ambiguity.alpha;
  }

  /// Partial derivatives of (C1) w.r.t. the auxiliaries and beta. The beta
  /// gradient equals K gamma and is what chains into the context via the
  /// embedding weights.
  void head_gradients(const Eigen::Ref<const Eigen::VectorXd>& beta,
                      const Eigen::Ref<const Eigen::VectorXd>& gamma,
                      Eigen::VectorXd& d_gamma, double& d_t, double& d_go,
                      Eigen::VectorXd& d_beta) const {
    const Eigen::VectorXd kg = output_gram * gamma;
    const double root = std::sqrt(gamma.dot(kg) + sigma2);
    d_gamma = output_gram * beta + (ambiguity.epsilon / root) * kg;
    d_t = -ambiguity.alpha;
    d_go = 1.0;
    d_beta = kg;
  }

  /// Exact curvature of (C1) in the gamma block:
  ///   epsilon * (K / r - (K gamma)(K gamma)' / r^3),  r = sqrt(g'Kg + s2).
  /// Positive semidefinite; near gamma = 0 it peaks at epsilon * K / sigma,
  /// which is what makes the row hard without exact curvature.
  Eigen::MatrixXd head_gamma_hessian(
      const Eigen::Ref<const Eigen::VectorXd>& gamma) const {
    const Eigen::VectorXd kg = output_gram * gamma;
    const double r = std::sqrt(gamma.dot(kg) + sigma2);
    return (ambiguity.epsilon / r) * output_gram -
           (ambiguity.epsilon / (r * r * r)) * (kg * kg.transpose());
  }

  double hinge_upper_value(Eigen::Index j, const Eigen::Vector2d& p,
                           const Eigen::Ref<const Eigen::VectorXd>& gamma,
                           double t, double g_o) const {
    const double risk = risk_function(p, samples.col(j), d_safe);
    return risk + t - g_o - output_gram.row(j).dot(gamma);
  }

  double hinge_lower_value(Eigen::Index j,
                           const Eigen::Ref<const Eigen::VectorXd>& gamma,
                           double g_o) const {
    return -g_o - output_gram.row(j).dot(gamma);
  }
};

/// Assembles the block for one step: validates shapes and copies the sample
/// positions and their output-space Gram matrix.
inline DrCvarBlock build_block(int step, const Eigen::MatrixXd& samples,
                               const Eigen::MatrixXd& output_gram,
                               const AmbiguityConfig& ambiguity, double d_safe) {
  if (samples.cols() < 1) {
    throw std::invalid_argument("build_block: empty sample set");
  }
  if (output_gram.rows() != samples.cols() ||
      output_gram.cols() != samples.cols()) {
    throw std::invalid_argument("build_block: Gram shape mismatch");
  }
  if (ambiguity.epsilon < 0.0) {
    throw std::invalid_argument("build_block: epsilon must be >= 0");
  }
  if (!(ambiguity.alpha > 0.0 && ambiguity.alpha <= 1.0)) {
    throw std::invalid_argument("build_block: alpha must be in (0, 1]");
  }
  DrCvarBlock block;
  block.step = step;
  block.samples = samples;
  block.output_gram = output_gram;
  block.d_safe = d_safe;
  block.ambiguity = ambiguity;
  return block;
}

/// Reference CVaR of a finite loss distribution at level alpha:
///   min over tau of  tau + (1/alpha) * sum_j w_j * (loss_j - tau)_+ .
/// The minimum is attained at one of the loss values, so a scan suffices.
/// Used as the independent oracle for the epsilon = 0 block.
inline double empirical_cvar_oracle(const Eigen::VectorXd& losses,
                                    const Eigen::VectorXd& weights,
                                    double alpha) {
  if (!(alpha > 0.0 && alpha <= 1.0)) {
    throw std::invalid_argument("empirical_cvar_oracle: alpha not in (0, 1]");
  }
  if (losses.size() != weights.size() || losses.size() == 0) {
    throw std::invalid_argument("empirical_cvar_oracle: size mismatch");
  }
  double best = std::numeric_limits<double>::infinity();
  for (Eigen::Index c = 0; c < losses.size(); ++c) {
    const double tau = losses[c];
    double value = tau;
    for (Eigen::Index j = 0; j < losses.size(); ++j) {
      value += weights[j] * std::max(0.0, losses[j] - tau) / alpha;
    }
    best = std::min(best, value);
  }
  return best;
}

}  // namespace drmpc
