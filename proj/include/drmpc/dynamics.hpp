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
#include <vector>

#include <Eigen/Core>

namespace drmpc {

/// Rear-axle state of one vehicle: position, heading, speed.
///
/// Heading is deliberately left unwrapped; wrapping modulo 2*pi would make
/// the discrete dynamics non-differentiable, which the NLP solver cannot
/// tolerate. State boxes in the planner constrain the heading range instead.
struct AgentState {
  double px{0.0};     ///< x position [m]
  double py{0.0};     ///< y position [m]
  double theta{0.0};  ///< heading w.r.t. x axis [rad]
  double v{0.0};      ///< forward speed [m/s]

  Eigen::Vector2d position() const { return {px, py}; }
  Eigen::Vector4d vec() const { return {px, py, theta, v}; }

  static AgentState from_vec(const Eigen::Vector4d& x) {
    return {x[0], x[1], x[2], x[3]};
  }
};

/// Acceleration and front-wheel steering angle.
struct ControlInput {
  double a{0.0};      ///< longitudinal acceleration [m/s^2]
  double delta{0.0};  ///< steering angle [rad]

  Eigen::Vector2d vec() const { return {a, delta}; }
};

struct DynamicsConfig {
  double wheelbase{2.5};  ///< distance between front and rear axle [m]
  double ts{0.1};         ///< sampling time [s]
};

namespace detail {
inline void check_steering(double delta) {
  if (!(std::abs(delta) < M_PI / 2.0)) {
    throw std::domain_error("steering angle |delta| = " +
                            std::to_string(std::abs(delta)) +
                            " not below pi/2, tan() singular");
  }
}
}  // namespace detail

/// Time derivative (px_dot, py_dot, theta_dot, v_dot) of the kinematic
/// bicycle model. Throws std::domain_error at the steering singularity.
inline Eigen::Vector4d continuous_derivative(const AgentState& x,
                                             const ControlInput& u,
                                             const DynamicsConfig& cfg) {
  detail::check_steering(u.delta);
  return {x.v * std::cos(x.theta), x.v * std::sin(x.theta),
          x.v / cfg.wheelbase * std::tan(u.delta), u.a};
}

/// One forward-Euler step of the bicycle model.
inline AgentState euler_step(const AgentState& x, const ControlInput& u,
                             const DynamicsConfig& cfg) {
  const Eigen::Vector4d dx = continuous_derivative(x, u, cfg);
  return AgentState::from_vec(x.vec() + cfg.ts * dx);
}

/// Iterated Euler steps; state k+1 results from applying u_seq[k] to state k.
/// Returns u_seq.size() states (the initial state is not repeated).
inline std::vector<AgentState> rollout(const AgentState& x0,
                                       const std::vector<ControlInput>& u_seq,
                                       const DynamicsConfig& cfg) {
  if (u_seq.empty()) {
    throw std::invalid_argument("rollout: empty input sequence");
  }
  std::vector<AgentState> out;
  out.reserve(u_seq.size());
  AgentState x = x0;
  for (std::size_t k = 0; k < u_seq.size(); ++k) {
    try {
      x = euler_step(x, u_seq[k], cfg);
    } catch (const std::domain_error& e) {
      throw std::domain_error("rollout step " + std::to_string(k) + ": " +
                              e.what());
    }
    out.push_back(x);
  }
  return out;
}

struct StepJacobians {
  Eigen::Matrix4d dx;              ///< d(euler_step)/d(state)
  Eigen::Matrix<double, 4, 2> du;  ///< d(euler_step)/d(input)
};

/// Exact Jacobians of the Euler map x' = x + Ts * f(x, u).
inline StepJacobians step_jacobians(const AgentState& x, const ControlInput& u,
                                    const DynamicsConfig& cfg) {
  detail::check_steering(u.delta);
  const double ts = cfg.ts;
  const double L = cfg.wheelbase;
  const double c = std::cos(x.theta);
  const double s = std::sin(x.theta);
  const double t = std::tan(u.delta);
  const double sec2 = 1.0 + t * t;

  StepJacobians J;
  J.dx = Eigen::Matrix4d::Identity();
  J.dx(0, 2) = -ts * x.v * s;
  J.dx(0, 3) = ts * c;
  J.dx(1, 2) = ts * x.v * c;
  J.dx(1, 3) = ts * s;
  J.dx(2, 3) = ts * t / L;

  J.du.setZero();
  J.du(2, 1) = ts * x.v / L * sec2;
  J.du(3, 0) = ts;
  return J;
}

}  // namespace drmpc
