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

#include <cmath>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "drmpc/ckme.hpp"
#include "drmpc/dynamics.hpp"

namespace drmpc {

/// Conditioning vector for the lookahead-i embedding: ego base position,
/// ego displacements relative to the base, and the obstacle base position.
struct Context {
  Eigen::Vector2d ego_base{0.0, 0.0};
  std::vector<Eigen::Vector2d> ego_displacements;  ///< i - 1 entries
  Eigen::Vector2d obstacle_base{0.0, 0.0};

  int lookahead() const {
    return static_cast<int>(ego_displacements.size()) + 1;
  }

  /// Flattened layout [p(0), p(1)-p(0), ..., p(i-1)-p(0), p_obs(0)],
  /// dimension 2 * (i + 1).
  Eigen::VectorXd flatten() const {
    const auto i = static_cast<Eigen::Index>(ego_displacements.size()) + 1;
    Eigen::VectorXd z(2 * (i + 1));
    z.segment<2>(0) = ego_base;
    for (Eigen::Index t = 0; t < i - 1; ++t) {
      z.segment<2>(2 * (t + 1)) = ego_displacements[static_cast<std::size_t>(t)];
    }
    z.segment<2>(2 * i) = obstacle_base;
    return z;
  }
};

/// Builds the lookahead-i context from the ego positions p(0..i-1) and the
/// obstacle base position. For i = 1 the displacement list is empty.
inline Context build_context(const std::vector<Eigen::Vector2d>& ego_positions,
                             const Eigen::Vector2d& obstacle_base, int i) {
  if (i < 1) {
    throw std::invalid_argument("build_context: lookahead must be >= 1");
  }
  if (ego_positions.size() != static_cast<std::size_t>(i)) {
    throw std::invalid_argument(
        "build_context: expected " + std::to_string(i) + " ego positions, got " +
        std::to_string(ego_positions.size()));
  }
  Context z;
  z.ego_base = ego_positions[0];
  z.ego_displacements.reserve(static_cast<std::size_t>(i - 1));
  for (int t = 1; t < i; ++t) {
    z.ego_displacements.push_back(ego_positions[static_cast<std::size_t>(t)] -
                                  z.ego_base);
  }
  z.obstacle_base = obstacle_base;
  return z;
}

/// Obstacle stays at its current speed and heading over the horizon.
struct ConstantVelocityPredictor {
  AgentState obstacle_state_at_0;
  double ts{0.1};
};

inline Eigen::Vector2d cv_predict(const ConstantVelocityPredictor& pred,
                                  int i) {
  if (i < 1) {
    throw std::invalid_argument("cv_predict: lookahead must be >= 1");
  }
  const AgentState& s = pred.obstacle_state_at_0;
  const double travel = static_cast<double>(i) * pred.ts * s.v;
  return s.position() +
         travel * Eigen::Vector2d(std::cos(s.theta), std::sin(s.theta));
}

/// One fitted embedding per lookahead step 1..N.
struct ContextualPredictor {
  std::vector<CkmeModel> models;

  const CkmeModel& model(int i) const {
    if (i < 1 || static_cast<std::size_t>(i) > models.size()) {
      throw std::out_of_range("ContextualPredictor: no model for lookahead " +
                              std::to_string(i));
    }
    return models[static_cast<std::size_t>(i - 1)];
  }
  int horizon() const { return static_cast<int>(models.size()); }
};

inline Eigen::Vector2d cx_predict(const ContextualPredictor& pred,
                                  const Context& z, int i) {
  return ckme_predict(pred.model(i), z.flatten());
}

/// Jacobian of the prediction w.r.t. the ego positions p(0..i-1), shape
/// 2 x 2i. Chains the embedding gradient through the context layout: p(0)
/// enters the base block with +I and every displacement block with -I,
/// while p(t), t >= 1, enters only displacement block t with +I.
inline Eigen::MatrixXd cx_predict_sensitivity(const ContextualPredictor& pred,
                                              const Context& z, int i) {
  const Eigen::MatrixXd dz = ckme_predict_gradient(pred.model(i), z.flatten());
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(2, 2 * i);
  out.block(0, 0, 2, 2) = dz.block(0, 0, 2, 2);
  for (int t = 1; t < i; ++t) {
    const Eigen::MatrixXd block = dz.block(0, 2 * t, 2, 2);
    out.block(0, 0, 2, 2) -= block;
    out.block(0, 2 * t, 2, 2) = block;
  }
  return out;
}

}  // namespace drmpc
