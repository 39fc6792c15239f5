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
#include <atomic>
#include <cmath>
#include <exception>
#include <limits>
#include <map>
#include <memory>
#include <stdexcept>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include <json.hpp>

#include "drmpc/dataset.hpp"
#include "drmpc/io.hpp"
#include "drmpc/mmd.hpp"
#include "drmpc/planner.hpp"
#include "drmpc/sim.hpp"

namespace drmpc {

/// Everything one experiment needs: scenario, planner parameter sets for the
/// ego and the obstacles, ambiguity settings, campaign grid, and training
/// options. Defaults reproduce the single-obstacle road scenario.
struct ExperimentConfig {
  int scenario_id{1};
  ScenarioConfig scenario;
  MpcConfig ego_planner;
  MpcConfig obstacle_planner;
  AmbiguityConfig ambiguity{0.5, 0.2};
  std::vector<double> epsilon_grid{0.0, 0.1, 0.5, 1.0};
  std::vector<PlannerMode> modes{PlannerMode::kNmpc, PlannerMode::kCmpc,
                                 PlannerMode::kDrcmpc};
  std::vector<BehaviorKind> behaviors{BehaviorKind::kNeutral,
                                      BehaviorKind::kCooperative,
                                      BehaviorKind::kAdversarial};
  int runs{25};
  std::uint64_t seed{42};
  int workers{1};

  int training_runs{20};
  std::uint64_t training_seed{7};
  /// Speed ceiling of the adversarial policy on top of the never-exceeds-
  /// its-initial-speed rule; the mirror provokes by braking, not racing.
  double adversarial_v_max{2.0};
  FitOptions fit{};
  bool bootstrap_epsilon{false};
  double bootstrap_delta{0.05};
  int bootstrap_resamples{1000};
};

inline PlannerMode planner_mode_from_string(const std::string& s) {
  if (s == "nmpc") return PlannerMode::kNmpc;
  if (s == "cmpc") return PlannerMode::kCmpc;
  if (s == "drcmpc") return PlannerMode::kDrcmpc;
  throw std::invalid_argument("unknown planner mode: " + s);
}

inline BehaviorKind behavior_from_string(const std::string& s) {
  if (s == "neutral") return BehaviorKind::kNeutral;
  if (s == "cooperative") return BehaviorKind::kCooperative;
  if (s == "adversarial") return BehaviorKind::kAdversarial;
  throw std::invalid_argument("unknown behavior: " + s);
}

inline ExperimentConfig default_experiment_config(int scenario_id = 1) {
  ExperimentConfig cfg;
  cfg.scenario_id = scenario_id;

  MpcConfig ego;
  ego.horizon = 8;
  ego.dynamics = {2.5, 0.1};
  ego.q_terminal = Eigen::Vector4d(0, 0, 0.1, 0.1).asDiagonal();
  ego.r2 = Eigen::Vector2d(0, 1e-4).asDiagonal();
  ego.u_min = {-4.0, -0.5};
  ego.u_max = {4.0, 0.5};
  ego.x_min = {-std::numeric_limits<double>::infinity(), 0.0, 0.0, 0.0};
  ego.x_max = {std::numeric_limits<double>::infinity(), 2.0, 2.0 * M_PI, 15.0};
  ego.d_safe = 0.5;
  ego.x_ref = {0.0, 0.5, 0.0, 15.0};
  ego.slack_weight = 1e4;
  cfg.ego_planner = ego;

  // The obstacle cruises toward its destination lane at a modest reference
  // speed; its own box caps the achievable velocity. It plans with a coarser
  // internal step (2 s lookahead) and a wider personal margin so a slow
  // obstacle can start yielding before a fast ego is on top of it.
  MpcConfig obs = ego;
  obs.q_terminal = Eigen::Vector4d(0, 0.05, 0.1, 0.5).asDiagonal();
  obs.x_max[3] = 10.0;
  obs.dynamics.ts = 0.3;
  obs.d_safe = 1.5;
  // Reactive obstacles need the saddle-escape restart: a yielding vehicle
  // that can only brake would never reproduce the lane-change behavior the
  // training data is meant to contain.
  obs.evasive_restart_slack = 1e-4;
  cfg.obstacle_planner = obs;

  cfg.scenario.ego_init = {0.0, 0.5, 0.0, 2.0};
  cfg.scenario.ego_target = {0.0, 0.5, 0.0, 15.0};
  cfg.scenario.obstacles_init = {{10.0, 0.5, 0.0, 1.0}};
  cfg.scenario.obstacle_targets = {{400.0, 0.5, 0.0, 1.0}};
  cfg.scenario.run_length = 60;
  cfg.scenario.goal_x = 40.0;
  if (scenario_id == 2) {
    cfg.scenario.obstacles_init.push_back({20.0, 1.5, 0.0, 1.0});
    cfg.scenario.obstacle_targets.push_back({400.0, 1.5, 0.0, 1.0});
    cfg.scenario.run_length = 80;
    cfg.scenario.goal_x = 50.0;
  }
  return cfg;
}

namespace detail {

inline Eigen::Vector4d vec4_from_json(const nlohmann::json& j) {
  if (!j.is_array() || j.size() != 4) {
    throw std::invalid_argument("config: expected a 4-element array");
  }
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>(),
          j[3].get<double>()};
}

inline Eigen::Vector2d vec2_from_json(const nlohmann::json& j) {
  if (!j.is_array() || j.size() != 2) {
    throw std::invalid_argument("config: expected a 2-element array");
  }
  return {j[0].get<double>(), j[1].get<double>()};
}

inline void apply_planner_json(const nlohmann::json& j, MpcConfig& cfg) {
  if (j.contains("horizon")) cfg.horizon = j["horizon"].get<int>();
  if (j.contains("ts")) cfg.dynamics.ts = j["ts"].get<double>();
  if (j.contains("wheelbase")) cfg.dynamics.wheelbase = j["wheelbase"].get<double>();
  if (j.contains("q_terminal"))
    cfg.q_terminal = vec4_from_json(j["q_terminal"]).asDiagonal();
  if (j.contains("q_stage"))
    cfg.q_stage = vec4_from_json(j["q_stage"]).asDiagonal();
  if (j.contains("r1")) cfg.r1 = vec2_from_json(j["r1"]).asDiagonal();
  if (j.contains("r2")) cfg.r2 = vec2_from_json(j["r2"]).asDiagonal();
  if (j.contains("u_min")) cfg.u_min = vec2_from_json(j["u_min"]);
  if (j.contains("u_max")) cfg.u_max = vec2_from_json(j["u_max"]);
  if (j.contains("x_min")) cfg.x_min = vec4_from_json(j["x_min"]);
  if (j.contains("x_max")) cfg.x_max = vec4_from_json(j["x_max"]);
  if (j.contains("d_safe")) cfg.d_safe = j["d_safe"].get<double>();
  if (j.contains("slack_weight"))
    cfg.slack_weight = j["slack_weight"].get<double>();
}

inline AgentState state_from_json(const nlohmann::json& j) {
  const Eigen::Vector4d v = vec4_from_json(j);
  return {v[0], v[1], v[2], v[3]};
}

}  // namespace detail

/// Applies a JSON document on top of the scenario defaults. Sections:
/// scenario, planner (ego), obstacle_planner, ambiguity, campaign, training.
inline ExperimentConfig load_experiment_config(const nlohmann::json& j) {
  const int scenario_id =
      j.contains("scenario") && j["scenario"].contains("id")
          ? j["scenario"]["id"].get<int>()
          : 1;
  ExperimentConfig cfg = default_experiment_config(scenario_id);

  if (j.contains("scenario")) {
    const auto& s = j["scenario"];
    if (s.contains("ego_init"))
      cfg.scenario.ego_init = detail::state_from_json(s["ego_init"]);
    if (s.contains("ego_target"))
      cfg.scenario.ego_target = detail::vec4_from_json(s["ego_target"]);
    if (s.contains("obstacles_init")) {
      cfg.scenario.obstacles_init.clear();
      for (const auto& o : s["obstacles_init"]) {
        cfg.scenario.obstacles_init.push_back(detail::state_from_json(o));
      }
    }
    if (s.contains("obstacle_targets")) {
      cfg.scenario.obstacle_targets.clear();
      for (const auto& o : s["obstacle_targets"]) {
        cfg.scenario.obstacle_targets.push_back(detail::vec4_from_json(o));
      }
    }
    if (s.contains("run_length"))
      cfg.scenario.run_length = s["run_length"].get<int>();
    if (s.contains("goal_x")) cfg.scenario.goal_x = s["goal_x"].get<double>();
    if (s.contains("init_x_stddev"))
      cfg.scenario.init_x_stddev = s["init_x_stddev"].get<double>();
    if (s.contains("init_v_stddev"))
      cfg.scenario.init_v_stddev = s["init_v_stddev"].get<double>();
    if (s.contains("adversarial_v_max"))
      cfg.adversarial_v_max = s["adversarial_v_max"].get<double>();
  }
  if (cfg.scenario.obstacles_init.size() != cfg.scenario.obstacle_targets.size()) {
    throw std::invalid_argument(
        "config: obstacles_init and obstacle_targets size mismatch");
  }
  if (j.contains("planner")) detail::apply_planner_json(j["planner"], cfg.ego_planner);
  if (j.contains("obstacle_planner"))
    detail::apply_planner_json(j["obstacle_planner"], cfg.obstacle_planner);
  if (j.contains("ambiguity")) {
    const auto& a = j["ambiguity"];
    if (a.contains("epsilon")) cfg.ambiguity.epsilon = a["epsilon"].get<double>();
    if (a.contains("alpha")) cfg.ambiguity.alpha = a["alpha"].get<double>();
    if (a.contains("bootstrap"))
      cfg.bootstrap_epsilon = a["bootstrap"].get<bool>();
    if (a.contains("bootstrap_delta"))
      cfg.bootstrap_delta = a["bootstrap_delta"].get<double>();
    if (a.contains("bootstrap_resamples"))
      cfg.bootstrap_resamples = a["bootstrap_resamples"].get<int>();
  }
  if (j.contains("campaign")) {
    const auto& c = j["campaign"];
    if (c.contains("runs")) cfg.runs = c["runs"].get<int>();
    if (c.contains("seed")) cfg.seed = c["seed"].get<std::uint64_t>();
    if (c.contains("workers")) cfg.workers = c["workers"].get<int>();
    if (c.contains("epsilons"))
      cfg.epsilon_grid = c["epsilons"].get<std::vector<double>>();
    if (c.contains("modes")) {
      cfg.modes.clear();
      for (const auto& m : c["modes"]) {
        cfg.modes.push_back(planner_mode_from_string(m.get<std::string>()));
      }
    }
    if (c.contains("behaviors")) {
      cfg.behaviors.clear();
      for (const auto& b : c["behaviors"]) {
        cfg.behaviors.push_back(behavior_from_string(b.get<std::string>()));
      }
    }
  }
  if (j.contains("training")) {
    const auto& t = j["training"];
    if (t.contains("runs")) cfg.training_runs = t["runs"].get<int>();
    if (t.contains("seed")) cfg.training_seed = t["seed"].get<std::uint64_t>();
    if (t.contains("ns")) cfg.fit.n_select = t["ns"].get<Eigen::Index>();
    if (t.contains("lambda")) cfg.fit.lambda = t["lambda"].get<double>();
    if (t.contains("pool_max")) cfg.fit.pool_max = t["pool_max"].get<Eigen::Index>();
    if (t.contains("exhaustive")) cfg.fit.exhaustive = t["exhaustive"].get<bool>();
  }
  if (cfg.runs < 1) throw std::invalid_argument("config: runs must be >= 1");
  for (const double e : cfg.epsilon_grid) {
    if (e < 0.0) throw std::invalid_argument("config: epsilon must be >= 0");
  }
  return cfg;
}

inline ExperimentConfig load_experiment_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config: " + path);
  nlohmann::json j;
  in >> j;
  return load_experiment_config(j);
}

/// Behavior policies for every obstacle in the scenario.
inline std::vector<BehaviorPolicy> make_behaviors(const ExperimentConfig& cfg,
                                                  BehaviorKind kind) {
  std::vector<BehaviorPolicy> out;
  for (std::size_t j = 0; j < cfg.scenario.obstacles_init.size(); ++j) {
    BehaviorPolicy p;
    p.kind = kind;
    p.target = cfg.scenario.obstacle_targets[j];
    p.mpc_cfg = cfg.obstacle_planner;
    p.mpc_cfg.x_ref = p.target;
    if (kind == BehaviorKind::kAdversarial) {
      p.mpc_cfg.x_max[3] = std::min(p.mpc_cfg.x_max[3], cfg.adversarial_v_max);
    }
    out.push_back(std::move(p));
  }
  return out;
}

/// Per-lookahead bootstrap ambiguity radii from the training outputs of a
/// fitted predictor.
inline std::vector<double> bootstrap_epsilons(const ContextualPredictor& pred,
                                              double delta, int resamples,
                                              std::uint64_t seed) {
  std::vector<double> out;
  out.reserve(pred.models.size());
  for (std::size_t i = 0; i < pred.models.size(); ++i) {
    out.push_back(bootstrap_radius(pred.models[i].outputs,
                                   pred.models[i].output_kernel, resamples,
                                   delta, seed + i));
  }
  return out;
}

struct RunRecord {
  PlannerMode mode{PlannerMode::kNmpc};
  BehaviorKind behavior{BehaviorKind::kNeutral};
  double epsilon{0.0};  ///< DRCMPC only; 0 for the other modes
  int run_index{0};
  std::uint64_t seed{0};
  double min_distance{0.0};
  bool collision{false};
  int steps{0};
  long inner_iterations{0};
  double solve_ms_total{0.0};  ///< wall clock; excluded from CSV output
};

struct CampaignResult {
  std::vector<RunRecord> records;
  double d_safe{0.5};
};

/// One closed-loop evaluation run. Predictors may be empty for NMPC.
inline RunRecord run_single(const ExperimentConfig& cfg, PlannerMode mode,
                            BehaviorKind behavior, double epsilon,
                            const std::vector<double>& epsilon_schedule,
                            int run_index,
                            const std::vector<std::shared_ptr<const ContextualPredictor>>&
                                predictors) {
  RunRecord rec;
  rec.mode = mode;
  rec.behavior = behavior;
  rec.epsilon = epsilon;
  rec.run_index = run_index;
  rec.seed = cfg.seed + static_cast<std::uint64_t>(run_index);

  const std::vector<BehaviorPolicy> behaviors = make_behaviors(cfg, behavior);
  const ScenarioConfig drawn =
      perturb_scenario(cfg.scenario, behaviors, rec.seed);

  MpcConfig ego_cfg = cfg.ego_planner;
  ego_cfg.mode = mode;
  ego_cfg.x_ref = cfg.scenario.ego_target;
  ego_cfg.ambiguity = cfg.ambiguity;
  ego_cfg.ambiguity.epsilon = epsilon;
  if (mode == PlannerMode::kDrcmpc && !epsilon_schedule.empty()) {
    ego_cfg.epsilon_by_step = epsilon_schedule;
  }
  Planner ego(ego_cfg, predictors);

  std::vector<ObstacleController> controllers;
  for (const auto& p : behaviors) controllers.emplace_back(p);

  const TrajectoryLog log = run_closed_loop(drawn, ego, controllers);
  rec.min_distance = log.min_distance();
  rec.collision = log.collided(cfg.ego_planner.d_safe);
  rec.steps = static_cast<int>(log.rows.size()) - 1;
  for (const auto& row : log.rows) {
    rec.solve_ms_total += row.solve_ms;
    rec.inner_iterations += row.solver_inner_iterations;
  }
  return rec;
}

/// Seeded Monte Carlo campaign over (mode, behavior[, epsilon]) cells. Run r
/// of every cell draws the same perturbed initial condition, so cells are
/// paired. Runs execute on a worker pool; records come back in deterministic
/// order regardless of scheduling.
inline CampaignResult run_campaign(
    const ExperimentConfig& cfg,
    const std::vector<std::shared_ptr<const ContextualPredictor>>& predictors,
    const std::vector<double>& epsilon_schedule = {}) {
  struct Task {
    PlannerMode mode;
    BehaviorKind behavior;
    double epsilon;
    int run_index;
  };
  std::vector<Task> tasks;
  for (const PlannerMode mode : cfg.modes) {
    if (mode != PlannerMode::kNmpc && predictors.empty()) {
      throw std::invalid_argument(
          "run_campaign: contextual modes require fitted predictors");
    }
    const std::vector<double> eps_cells =
        (mode == PlannerMode::kDrcmpc) ? cfg.epsilon_grid
                                       : std::vector<double>{0.0};
    for (const BehaviorKind behavior : cfg.behaviors) {
      for (const double eps : eps_cells) {
        for (int r = 0; r < cfg.runs; ++r) {
          tasks.push_back({mode, behavior, eps, r});
        }
      }
    }
  }

  CampaignResult result;
  result.d_safe = cfg.ego_planner.d_safe;
  result.records.resize(tasks.size());
  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(tasks.size());

  const int workers = std::max(1, std::min<int>(cfg.workers,
      static_cast<int>(std::thread::hardware_concurrency() > 0
                           ? std::thread::hardware_concurrency()
                           : 1)));
  const auto worker = [&]() {
    while (true) {
      const std::size_t k = next.fetch_add(1);
      if (k >= tasks.size()) break;
      const Task& t = tasks[k];
      try {
        result.records[k] = run_single(cfg, t.mode, t.behavior, t.epsilon,
                                       epsilon_schedule, t.run_index,
                                       predictors);
      } catch (...) {
        errors[k] = std::current_exception();
      }
    }
  };
  if (workers == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(workers));
    for (int w = 0; w < workers; ++w) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  for (std::size_t k = 0; k < tasks.size(); ++k) {
    if (errors[k]) {
      try {
        std::rethrow_exception(errors[k]);
      } catch (const std::exception& e) {
        throw std::runtime_error(
            std::string("run_campaign: run failed (mode=") +
            to_string(tasks[k].mode) + ", behavior=" +
            to_string(tasks[k].behavior) + ", seed=" +
            std::to_string(cfg.seed + static_cast<std::uint64_t>(
                                          tasks[k].run_index)) +
            "): " + e.what());
      }
    }
  }
  return result;
}

/// Deterministic campaign CSV (no wall-clock columns).
inline void write_campaign_csv(const CampaignResult& result,
                               std::ostream& out) {
  out << "mode,behavior,epsilon,run,seed,min_dist,collision,steps,"
         "inner_iterations\n";
  for (const auto& r : result.records) {
    out << to_string(r.mode) << ',' << to_string(r.behavior) << ','
        << format_g17(r.epsilon) << ',' << r.run_index << ',' << r.seed << ','
        << format_g17(r.min_distance) << ',' << (r.collision ? 1 : 0) << ','
        << r.steps << ',' << r.inner_iterations << '\n';
  }
}

namespace detail {

inline double quantile_sorted(const std::vector<double>& sorted, double q) {
  if (sorted.empty()) return 0.0;
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (pos - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

}  // namespace detail

/// Summary statistics per campaign cell: min-distance quartiles, collision
/// rate, and wall-clock timing (the one non-deterministic section).
inline nlohmann::json campaign_summary(const CampaignResult& result) {
  struct Key {
    std::string mode, behavior;
    double epsilon;
    bool operator<(const Key& o) const {
      if (mode != o.mode) return mode < o.mode;
      if (behavior != o.behavior) return behavior < o.behavior;
      return epsilon < o.epsilon;
    }
  };
  std::map<Key, std::vector<const RunRecord*>> cells;
  for (const auto& r : result.records) {
    cells[{to_string(r.mode), to_string(r.behavior), r.epsilon}].push_back(&r);
  }
  nlohmann::json cells_json = nlohmann::json::array();
  for (const auto& [key, runs] : cells) {
    std::vector<double> dists, times;
    int collisions = 0;
    for (const auto* r : runs) {
      dists.push_back(r->min_distance);
      times.push_back(r->solve_ms_total / std::max(1, r->steps));
      collisions += r->collision ? 1 : 0;
    }
    std::sort(dists.begin(), dists.end());
    std::sort(times.begin(), times.end());
    nlohmann::json cell;
    cell["mode"] = key.mode;
    cell["behavior"] = key.behavior;
    cell["epsilon"] = key.epsilon;
    cell["runs"] = runs.size();
    cell["min_dist"] = {{"min", dists.front()},
                        {"q25", detail::quantile_sorted(dists, 0.25)},
                        {"median", detail::quantile_sorted(dists, 0.5)},
                        {"q75", detail::quantile_sorted(dists, 0.75)},
                        {"max", dists.back()}};
    cell["collision_rate"] =
        static_cast<double>(collisions) / static_cast<double>(runs.size());
    cell["solve_ms_per_step"] = {{"median", detail::quantile_sorted(times, 0.5)},
                                 {"q90", detail::quantile_sorted(times, 0.9)}};
    cells_json.push_back(std::move(cell));
  }
  nlohmann::json j;
  j["d_safe"] = result.d_safe;
  j["cells"] = std::move(cells_json);
  return j;
}

/// Fixed-length trajectory features for the behavior-distance table: the
/// obstacle path resampled at 50 equally spaced times and expressed
/// relative to its starting position (so the comparison measures motion
/// pattern, not where the randomized initial draw happened to place the
/// vehicle), flattened to R^100.
inline Eigen::VectorXd trajectory_features(const TrajectoryLog& log,
                                           std::size_t obstacle_index,
                                           int points = 50) {
  if (log.rows.size() < 2) {
    throw std::invalid_argument("trajectory_features: log too short");
  }
  const double t0 = log.rows.front().t;
  const double t1 = log.rows.back().t;
  const Eigen::Vector2d origin =
      log.rows.front().obstacles[obstacle_index].position();
  Eigen::VectorXd f(2 * points);
  for (int p = 0; p < points; ++p) {
    const double t = t0 + (t1 - t0) * static_cast<double>(p) /
                              static_cast<double>(points - 1);
    // Locate the bracketing rows (uniform spacing).
    const double pos = (t - t0) / log.ts;
    const auto lo = std::min(static_cast<std::size_t>(std::floor(pos)),
                             log.rows.size() - 1);
    const auto hi = std::min(lo + 1, log.rows.size() - 1);
    const double frac = std::clamp(pos - static_cast<double>(lo), 0.0, 1.0);
    const Eigen::Vector2d a = log.rows[lo].obstacles[obstacle_index].position();
    const Eigen::Vector2d b = log.rows[hi].obstacles[obstacle_index].position();
    f.segment<2>(2 * p) = (1.0 - frac) * a + frac * b - origin;
  }
  return f;
}

struct MmdTable {
  std::vector<std::string> labels;
  Eigen::MatrixXd cross;        ///< symmetric, zero diagonal
  std::vector<double> within;   ///< split-half distance per group
  double length_scale{1.0};
};

/// Empirical MMD between trajectory groups and within split halves of each
/// group, with the kernel scale set by the median heuristic over the pooled
/// feature vectors.
inline MmdTable mmd_behavior_table(
    const std::vector<std::pair<std::string, std::vector<TrajectoryLog>>>& groups,
    std::size_t obstacle_index = 0) {
  for (const auto& [name, logs] : groups) {
    if (logs.size() < 2) {
      throw std::invalid_argument("mmd_behavior_table: group '" + name +
                                  "' needs at least two runs");
    }
  }
  std::vector<Eigen::MatrixXd> features;
  Eigen::Index total = 0;
  for (const auto& [name, logs] : groups) {
    Eigen::MatrixXd f(100, static_cast<Eigen::Index>(logs.size()));
    for (std::size_t r = 0; r < logs.size(); ++r) {
      f.col(static_cast<Eigen::Index>(r)) =
          trajectory_features(logs[r], obstacle_index);
    }
    total += f.cols();
    features.push_back(std::move(f));
  }
  Eigen::MatrixXd pooled(100, total);
  Eigen::Index at = 0;
  for (const auto& f : features) {
    pooled.middleCols(at, f.cols()) = f;
    at += f.cols();
  }
  const KernelConfig kernel{KernelFamily::kRbf, median_heuristic(pooled)};

  MmdTable table;
  table.length_scale = kernel.length_scale;
  const auto n = static_cast<Eigen::Index>(groups.size());
  table.cross = Eigen::MatrixXd::Zero(n, n);
  for (Eigen::Index a = 0; a < n; ++a) {
    table.labels.push_back(groups[static_cast<std::size_t>(a)].first);
    const Eigen::MatrixXd& fa = features[static_cast<std::size_t>(a)];
    const Eigen::Index half = fa.cols() / 2;
    table.within.push_back(empirical_mmd(fa.leftCols(half),
                                         fa.rightCols(fa.cols() - half),
                                         kernel));
    for (Eigen::Index b = a + 1; b < n; ++b) {
      const double d =
          empirical_mmd(fa, features[static_cast<std::size_t>(b)], kernel);
      table.cross(a, b) = d;
      table.cross(b, a) = d;
    }
  }
  return table;
}

}  // namespace drmpc
