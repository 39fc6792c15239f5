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
#include <limits>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "drmpc/dynamics.hpp"
#include "drmpc/planner.hpp"

namespace drmpc {

enum class BehaviorKind { kNeutral, kCooperative, kAdversarial };

inline const char* to_string(BehaviorKind b) {
  switch (b) {
    case BehaviorKind::kNeutral: return "neutral";
    case BehaviorKind::kCooperative: return "cooperative";
    case BehaviorKind::kAdversarial: return "adversarial";
  }
  return "unknown";
}

/// Obstacle behavior: neutral and cooperative obstacles run their own MPC
/// (without and with collision avoidance against a constant-velocity ego);
/// the adversarial obstacle mirrors the ego's speed changes with a fixed
/// gain and never steers.
struct BehaviorPolicy {
  BehaviorKind kind{BehaviorKind::kNeutral};
  Eigen::Vector4d target = Eigen::Vector4d::Zero();
  MpcConfig mpc_cfg{};     ///< neutral / cooperative
  double gain{2.0};        ///< adversarial speed-mirroring gain
};

struct AdversarialLimits {
  double ts{0.1};
  double gain{2.0};
  double a_min{-4.0};
  double a_max{4.0};
  double v_min{0.0};
  double v_max{15.0};
};

/// Speed command mirroring the ego's speed change, clamped first by the
/// acceleration limit and then by the speed box; steering is zero. The
/// returned acceleration reproduces the clamped speed change exactly under
/// one Euler step.
inline ControlInput adversarial_policy_step(const AgentState& obstacle,
                                            double ego_v_now,
                                            double ego_v_prev,
                                            const AdversarialLimits& lim) {
  double dv = lim.gain * (ego_v_now - ego_v_prev);
  dv = std::clamp(dv, lim.a_min * lim.ts, lim.a_max * lim.ts);
  const double v_new = std::clamp(obstacle.v + dv, lim.v_min, lim.v_max);
  return ControlInput{(v_new - obstacle.v) / lim.ts, 0.0};
}

/// One simulated scenario: initial states, references, run limits, and the
/// Gaussian perturbation used for Monte Carlo initial conditions.
struct ScenarioConfig {
  AgentState ego_init{0.0, 0.5, 0.0, 10.0};
  std::vector<AgentState> obstacles_init;
  Eigen::Vector4d ego_target{0.0, 0.5, 0.0, 15.0};
  std::vector<Eigen::Vector4d> obstacle_targets;
  int run_length{70};
  /// The loop also stops once the ego passes this x coordinate.
  double goal_x{std::numeric_limits<double>::infinity()};
  std::uint64_t rng_seed{0};
  double init_x_stddev{1.0};
  double init_v_stddev{0.5};
};

struct LogRow {
  int k{0};
  double t{0.0};
  AgentState ego;
  ControlInput ego_u;
  std::vector<AgentState> obstacles;
  double solve_ms{0.0};
  double slack{0.0};
  double min_dist{std::numeric_limits<double>::infinity()};
  /// Total quasi-Newton iterations of the ego solve; a deterministic effort
  /// proxy (not part of the CSV schema).
  int solver_inner_iterations{0};
};

/// Closed-loop trace. Row k records the states at time k*Ts together with
/// the inputs applied at that instant; the final row carries zero inputs.
struct TrajectoryLog {
  double ts{0.1};
  std::vector<LogRow> rows;

  double min_distance() const {
    double best = std::numeric_limits<double>::infinity();
    for (const auto& row : rows) best = std::min(best, row.min_dist);
    return best;
  }
  bool collided(double d_safe) const { return min_distance() < d_safe; }
  std::size_t obstacle_count() const {
    return rows.empty() ? 0 : rows.front().obstacles.size();
  }
};

namespace detail {

inline double pairwise_min_distance(const AgentState& ego,
                                    const std::vector<AgentState>& obstacles) {
  double best = std::numeric_limits<double>::infinity();
  for (const auto& o : obstacles) {
    best = std::min(best, (ego.position() - o.position()).norm());
  }
  return best;
}

}  // namespace detail

/// Per-obstacle controller instantiated from a BehaviorPolicy. Holds the
/// warm-start state of its MPC (neutral/cooperative) and the previously
/// applied input.
class ObstacleController {
 public:
  explicit ObstacleController(const BehaviorPolicy& policy)
      : policy_(policy) {
    if (policy_.kind != BehaviorKind::kAdversarial) {
      MpcConfig cfg = policy_.mpc_cfg;
      cfg.mode = PlannerMode::kNmpc;
      cfg.x_ref = policy_.target;
      planner_.emplace(cfg);
    }
  }

  /// Computes the input applied over the next simulation step. The MPC
  /// behaviors may plan with a coarser internal sampling time than the
  /// simulation step; the adversarial rule always works per simulation step.
  ControlInput step(const AgentState& self, const AgentState& ego,
                    double ego_v_prev, double sim_ts) {
    ControlInput u{0.0, 0.0};
    switch (policy_.kind) {
      case BehaviorKind::kNeutral:
        u = planner_->plan_step(self, u_prev_, {}).u0;
        break;
      case BehaviorKind::kCooperative:
        u = planner_->plan_step(self, u_prev_, {ego}).u0;
        break;
      case BehaviorKind::kAdversarial: {
        const MpcConfig& c = policy_.mpc_cfg;
        // The provoker never exceeds the speed it started with; it tracks
        // the ego's slowdowns, it does not race the ego.
        if (adversarial_v_cap_ < 0.0) {
          adversarial_v_cap_ = std::min(self.v, c.x_max[3]);
        }
        AdversarialLimits lim{sim_ts, policy_.gain, c.u_min[0],
                              c.u_max[0], c.x_min[3], adversarial_v_cap_};
        u = adversarial_policy_step(self, ego.v, ego_v_prev, lim);
        break;
      }
    }
    u_prev_ = u;
    return u;
  }

  std::pair<double, double> speed_bounds() const {
    const double hi = (policy_.kind == BehaviorKind::kAdversarial &&
                       adversarial_v_cap_ >= 0.0)
                          ? adversarial_v_cap_
                          : policy_.mpc_cfg.x_max[3];
    return {policy_.mpc_cfg.x_min[3], hi};
  }
  const BehaviorPolicy& policy() const { return policy_; }

 private:
  BehaviorPolicy policy_;
  std::optional<Planner> planner_;
  ControlInput u_prev_{0.0, 0.0};
  double adversarial_v_cap_{-1.0};  ///< latched at the first step
};

/// Steps the ego planner and every obstacle controller until run_length
/// steps have been applied or the ego passes goal_x. Speeds are clamped to
/// each agent's own box after every Euler step. Planner numerical failures
/// surface as exceptions carrying the step index.
inline TrajectoryLog run_closed_loop(const ScenarioConfig& scenario,
                                     Planner& ego_planner,
                                     std::vector<ObstacleController>& obstacles,
                                     bool non_reactive_ego = false) {
  if (obstacles.size() != scenario.obstacles_init.size()) {
    throw std::invalid_argument(
        "run_closed_loop: behavior count does not match obstacle count");
  }
  const double ts = ego_planner.config().dynamics.ts;
  TrajectoryLog log;
  log.ts = ts;

  AgentState ego = scenario.ego_init;
  std::vector<AgentState> obs = scenario.obstacles_init;
  ControlInput ego_u_prev{0.0, 0.0};
  double ego_v_prev = ego.v;

  for (int k = 0;; ++k) {
    LogRow row;
    row.k = k;
    row.t = k * ts;
    row.ego = ego;
    row.obstacles = obs;
    row.min_dist = detail::pairwise_min_distance(ego, obs);

    if (k >= scenario.run_length || ego.px > scenario.goal_x) {
      log.rows.push_back(std::move(row));
      break;
    }

    const PlanResult plan = ego_planner.plan_step(
        ego, ego_u_prev, non_reactive_ego ? std::vector<AgentState>{} : obs);
    if (plan.solver.status == NlpStatus::kNumericalFailure) {
      throw std::runtime_error("run_closed_loop: ego solver failed at step " +
                               std::to_string(k));
    }
    row.ego_u = plan.u0;
    row.solve_ms = plan.solver.solve_time * 1e3;
    row.slack = plan.slack_used;
    row.solver_inner_iterations = plan.solver.inner_iterations;

    std::vector<ControlInput> obs_u(obs.size());
    for (std::size_t j = 0; j < obs.size(); ++j) {
      obs_u[j] = obstacles[j].step(obs[j], ego, ego_v_prev, ts);
    }
    log.rows.push_back(std::move(row));

    // Advance the world one simulation period; every agent shares the
    // simulation step regardless of its planner's internal sampling time.
    ego_v_prev = ego.v;
    ego = euler_step(ego, plan.u0, ego_planner.config().dynamics);
    ego.v = std::clamp(ego.v, ego_planner.config().x_min[3],
                       ego_planner.config().x_max[3]);
    for (std::size_t j = 0; j < obs.size(); ++j) {
      const DynamicsConfig obs_dyn{
          obstacles[j].policy().mpc_cfg.dynamics.wheelbase, ts};
      obs[j] = euler_step(obs[j], obs_u[j], obs_dyn);
      const auto [v_lo, v_hi] = obstacles[j].speed_bounds();
      obs[j].v = std::clamp(obs[j].v, v_lo, v_hi);
    }
  }
  return log;
}

/// Draws a perturbed copy of the scenario: obstacle initial x and speed are
/// jittered with the configured Gaussians and clamped to valid ranges.
inline ScenarioConfig perturb_scenario(const ScenarioConfig& scenario,
                                       const std::vector<BehaviorPolicy>& behaviors,
                                       std::uint64_t seed) {
  std::seed_seq seq{seed, scenario.rng_seed};
  std::mt19937_64 rng(seq);
  std::normal_distribution<double> dx(0.0, scenario.init_x_stddev);
  std::normal_distribution<double> dv(0.0, scenario.init_v_stddev);
  ScenarioConfig out = scenario;
  for (std::size_t j = 0; j < out.obstacles_init.size(); ++j) {
    auto& o = out.obstacles_init[j];
    o.px += dx(rng);
    const auto& box = behaviors[j].mpc_cfg;
    o.v = std::clamp(o.v + dv(rng), box.x_min[3], box.x_max[3]);
  }
  return out;
}

/// Data-generation runs: a non-reactive ego (its MPC carries no collision
/// rows) against cooperative obstacles, with per-run Gaussian perturbations
/// of the obstacle initial conditions. Deterministic for a fixed seed.
inline std::vector<TrajectoryLog> generate_training_runs(
    const ScenarioConfig& scenario, const MpcConfig& ego_cfg,
    const std::vector<BehaviorPolicy>& behaviors, int count,
    std::uint64_t seed) {
  if (count < 1) {
    throw std::invalid_argument("generate_training_runs: count must be >= 1");
  }
  std::vector<TrajectoryLog> logs;
  logs.reserve(static_cast<std::size_t>(count));
  for (int r = 0; r < count; ++r) {
    ScenarioConfig drawn =
        perturb_scenario(scenario, behaviors, seed + static_cast<std::uint64_t>(r));
    MpcConfig cfg = ego_cfg;
    cfg.mode = PlannerMode::kNmpc;
    Planner ego(cfg);
    std::vector<ObstacleController> controllers;
    for (auto policy : behaviors) {
      policy.kind = BehaviorKind::kCooperative;
      controllers.emplace_back(policy);
    }
    logs.push_back(run_closed_loop(drawn, ego, controllers,
                                   /*non_reactive_ego=*/true));
  }
  return logs;
}

}  // namespace drmpc
