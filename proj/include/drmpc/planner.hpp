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
#include <memory>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "drmpc/ckme.hpp"
#include "drmpc/drcvar.hpp"
#include "drmpc/dynamics.hpp"
#include "drmpc/nlp.hpp"
#include "drmpc/predictor.hpp"

namespace drmpc {

enum class PlannerMode { kNmpc, kCmpc, kDrcmpc };

inline const char* to_string(PlannerMode m) {
  switch (m) {
    case PlannerMode::kNmpc: return "nmpc";
    case PlannerMode::kCmpc: return "cmpc";
    case PlannerMode::kDrcmpc: return "drcmpc";
  }
  return "unknown";
}

/// Receding-horizon problem parameters. Stage cost uses q_stage for steps
/// 0..N-2 and q_terminal for the last step; r1 weights input magnitude and
/// r2 the input rate, with the previous applied input as the rate reference
/// at step 0.
struct MpcConfig {
  int horizon{8};
  DynamicsConfig dynamics{};
  Eigen::Matrix4d q_terminal = Eigen::Matrix4d::Zero();
  Eigen::Matrix4d q_stage = Eigen::Matrix4d::Zero();
  Eigen::Matrix2d r1 = Eigen::Matrix2d::Zero();
  Eigen::Matrix2d r2 = Eigen::Matrix2d::Zero();
  Eigen::Vector2d u_min{-4.0, -0.5};
  Eigen::Vector2d u_max{4.0, 0.5};
  Eigen::Vector4d x_min{-std::numeric_limits<double>::infinity(), 0.0, 0.0, 0.0};
  Eigen::Vector4d x_max{std::numeric_limits<double>::infinity(), 2.0,
                        2.0 * M_PI, 15.0};
  double d_safe{0.5};
  Eigen::Vector4d x_ref = Eigen::Vector4d::Zero();
  PlannerMode mode{PlannerMode::kNmpc};
  AmbiguityConfig ambiguity{};
  /// Optional per-step ambiguity radius (size N); empty means use
  /// ambiguity.epsilon for every step.
  std::vector<double> epsilon_by_step{};
  double slack_weight{1e4};
  /// A head-on conflict with every agent at the same lateral offset is a
  /// saddle: the collision rows have zero lateral gradient there, so a
  /// straight-line iterate never discovers steering. When a solve ends up
  /// leaning on more safety slack than this, one restart from a laterally
  /// kicked initial guess is attempted and the safer solution kept.
  /// Disabled by default: the contextual modes break the saddle through
  /// their learned predictions, and a nominal planner that escapes it for
  /// free would not show the myopia the constant-velocity assumption has.
  double evasive_restart_slack{std::numeric_limits<double>::infinity()};
  double evasive_kick{0.05};  ///< steering angle of the restart rollout [rad]
  NlpOptions solver{};
};

/// Index map of the flat decision vector
///   [ u(0..N-1) | x(1..N) | slack(o, i) | gamma/t/g_o(o, i) ]
/// and of the constraint rows (dynamics pairs first, then per-obstacle
/// safety rows grouped by step).
struct ProblemLayout {
  int N{0};
  Eigen::Index n_obs{0};
  PlannerMode mode{PlannerMode::kNmpc};
  Eigen::Index n_vars{0};
  /// Per obstacle, per step i (index i-1): sample count of the step model.
  std::vector<std::vector<Eigen::Index>> sample_counts;
  /// Per obstacle, per step i (index i-1): offset of the gamma block; the
  /// auxiliaries t and g_o follow immediately after gamma.
  std::vector<std::vector<Eigen::Index>> aux_offsets;

  Eigen::Index u_offset(int i) const { return 2 * i; }
  Eigen::Index x_offset(int i) const { return 2 * N + 4 * (i - 1); }
  Eigen::Index slack_offset(Eigen::Index o, int i) const {
    return 6 * N + o * N + (i - 1);
  }
  Eigen::Index gamma_offset(Eigen::Index o, int i) const {
    return aux_offsets[static_cast<std::size_t>(o)][static_cast<std::size_t>(i - 1)];
  }
  Eigen::Index t_offset(Eigen::Index o, int i) const {
    return gamma_offset(o, i) +
           sample_counts[static_cast<std::size_t>(o)][static_cast<std::size_t>(i - 1)];
  }
  Eigen::Index go_offset(Eigen::Index o, int i) const {
    return t_offset(o, i) + 1;
  }

  Eigen::Index dynamics_row_count() const { return 8 * N; }
  /// Rows contributed by one (obstacle, step) pair.
  Eigen::Index safety_rows_per_step(Eigen::Index o, int i) const {
    if (mode != PlannerMode::kDrcmpc) return 1;
    return 1 + 2 * sample_counts[static_cast<std::size_t>(o)]
                                [static_cast<std::size_t>(i - 1)];
  }
  Eigen::Index safety_row_start(Eigen::Index o, int i) const {
    Eigen::Index row = dynamics_row_count();
    for (Eigen::Index oo = 0; oo < n_obs; ++oo) {
      for (int ii = 1; ii <= N; ++ii) {
        if (oo == o && ii == i) return row;
        row += safety_rows_per_step(oo, ii);
      }
    }
    return row;
  }
};

struct PlanResult {
  ControlInput u0;
  std::vector<AgentState> predicted_ego;  ///< states 1..N from the solution
  /// Per obstacle: the N predicted positions the safety rows were built
  /// against (mean prediction for the contextual modes).
  std::vector<std::vector<Eigen::Vector2d>> predicted_obstacles;
  NlpResult solver;
  double slack_used{0.0};

  double min_predicted_clearance() const {
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t o = 0; o < predicted_obstacles.size(); ++o) {
      for (std::size_t i = 0; i < predicted_ego.size(); ++i) {
        best = std::min(best, (predicted_ego[i].position() -
                               predicted_obstacles[o][i]).norm());
      }
    }
    return best;
  }
};

namespace detail {

/// One-deep memo for the Euler step shared by the eight paired rows of a
/// horizon step. A solve is single-threaded, so no synchronization.
struct StepCache {
  Eigen::Vector4d xi = Eigen::Vector4d::Constant(std::numeric_limits<double>::quiet_NaN());
  Eigen::Vector2d ui = Eigen::Vector2d::Constant(std::numeric_limits<double>::quiet_NaN());
  Eigen::Vector4d next = Eigen::Vector4d::Zero();
  StepJacobians jac{};
  bool have_jac{false};

  void ensure(const Eigen::Vector4d& x4, const Eigen::Vector2d& u2,
              const DynamicsConfig& cfg, bool need_jac) {
    if (x4 != xi || u2 != ui) {
      xi = x4;
      ui = u2;
      const AgentState s = AgentState::from_vec(x4);
      const ControlInput u{u2[0], u2[1]};
      next = euler_step(s, u, cfg).vec();
      have_jac = false;
    }
    if (need_jac && !have_jac) {
      jac = step_jacobians(AgentState::from_vec(xi), ControlInput{ui[0], ui[1]},
                           cfg);
      have_jac = true;
    }
  }
};

}  // namespace detail

/// Builds and solves the receding-horizon problem for one of the three
/// modes. An instance owns its warm-start state (shifted primal iterate and
/// the previous multipliers) and is single-threaded; run one instance per
/// concurrent worker.
class Planner {
 public:
  explicit Planner(MpcConfig cfg,
                   std::vector<std::shared_ptr<const ContextualPredictor>>
                       predictors = {})
      : cfg_(std::move(cfg)), predictors_(std::move(predictors)) {
    if (cfg_.horizon < 1) {
      throw std::invalid_argument("Planner: horizon must be >= 1");
    }
    if ((cfg_.u_min.array() > cfg_.u_max.array()).any() ||
        (cfg_.x_min.array() > cfg_.x_max.array()).any()) {
      throw std::invalid_argument("Planner: inconsistent bounds");
    }
    if (!cfg_.epsilon_by_step.empty() &&
        static_cast<int>(cfg_.epsilon_by_step.size()) != cfg_.horizon) {
      throw std::invalid_argument(
          "Planner: epsilon schedule length must equal the horizon");
    }
  }

  const MpcConfig& config() const { return cfg_; }

  ProblemLayout make_layout(Eigen::Index n_obs) const {
    ProblemLayout lay;
    lay.N = cfg_.horizon;
    lay.n_obs = n_obs;
    lay.mode = cfg_.mode;
    Eigen::Index n = 6 * lay.N + n_obs * lay.N;
    if (cfg_.mode == PlannerMode::kDrcmpc) {
      lay.sample_counts.resize(static_cast<std::size_t>(n_obs));
      lay.aux_offsets.resize(static_cast<std::size_t>(n_obs));
      for (Eigen::Index o = 0; o < n_obs; ++o) {
        auto& counts = lay.sample_counts[static_cast<std::size_t>(o)];
        auto& offs = lay.aux_offsets[static_cast<std::size_t>(o)];
        counts.resize(static_cast<std::size_t>(lay.N));
        offs.resize(static_cast<std::size_t>(lay.N));
        for (int i = 1; i <= lay.N; ++i) {
          const Eigen::Index ns =
              predictor(o).model(i).sample_count();
          counts[static_cast<std::size_t>(i - 1)] = ns;
          offs[static_cast<std::size_t>(i - 1)] = n;
          n += ns + 2;  // gamma, t, g_o
        }
      }
    }
    lay.n_vars = n;
    return lay;
  }

  /// Assembles the NLP: tracking objective with quadratic slack penalty,
  /// dynamics as paired inequalities, state/input boxes as variable bounds,
  /// and per-mode safety rows relaxed by a nonnegative slack per step.
  NlpProblem build_problem(const AgentState& x0, const ControlInput& u_prev,
                           const std::vector<AgentState>& obstacles) const {
    validate(x0, obstacles);
    auto data = std::make_shared<BuildData>();
    data->cfg = cfg_;
    data->x0 = x0;
    data->u_prev = u_prev;
    data->obstacles = obstacles;
    data->predictors = predictors_;
    data->layout = make_layout(static_cast<Eigen::Index>(obstacles.size()));
    data->step_cache.resize(static_cast<std::size_t>(cfg_.horizon));
    prepare_predictions(*data);

    NlpProblem problem;
    problem.n_vars = data->layout.n_vars;
    problem.objective = make_objective(data);
    problem.objective_diagonal = [data](const Eigen::VectorXd&,
                                        Eigen::VectorXd& diag) {
      const ProblemLayout& lay = data->layout;
      const MpcConfig& c = data->cfg;
      diag.setZero(lay.n_vars);
      for (int i = 0; i < lay.N; ++i) {
        const Eigen::Matrix4d& q = (i == lay.N - 1) ? c.q_terminal : c.q_stage;
        diag.segment<4>(lay.x_offset(i + 1)) = 2.0 * q.diagonal();
        diag.segment<2>(lay.u_offset(i)) =
            2.0 * c.r1.diagonal() + 4.0 * c.r2.diagonal();
      }
      for (Eigen::Index o = 0; o < lay.n_obs; ++o) {
        for (int i = 1; i <= lay.N; ++i) {
          diag[lay.slack_offset(o, i)] = 2.0 * c.slack_weight;
        }
      }
    };
    // The tracking objective is a constant quadratic; handing the solver its
    // exact Hessian makes the inner Newton steps exact on the smooth part.
    problem.objective_hessian = [data](const Eigen::VectorXd&,
                                       Eigen::MatrixXd& h) {
      const ProblemLayout& lay = data->layout;
      const MpcConfig& c = data->cfg;
      h.setZero(lay.n_vars, lay.n_vars);
      for (int i = 0; i < lay.N; ++i) {
        const Eigen::Matrix4d& q = (i == lay.N - 1) ? c.q_terminal : c.q_stage;
        h.block<4, 4>(lay.x_offset(i + 1), lay.x_offset(i + 1)) = 2.0 * q;
        Eigen::Matrix2d uu = 2.0 * c.r1 + 2.0 * c.r2;
        if (i + 1 < lay.N) uu += 2.0 * c.r2;
        h.block<2, 2>(lay.u_offset(i), lay.u_offset(i)) = uu;
        if (i > 0) {
          h.block<2, 2>(lay.u_offset(i), lay.u_offset(i - 1)) = -2.0 * c.r2;
          h.block<2, 2>(lay.u_offset(i - 1), lay.u_offset(i)) = -2.0 * c.r2;
        }
      }
      for (Eigen::Index o = 0; o < lay.n_obs; ++o) {
        for (int i = 1; i <= lay.N; ++i) {
          h(lay.slack_offset(o, i), lay.slack_offset(o, i)) =
              2.0 * c.slack_weight;
        }
      }
    };
    append_dynamics_rows(data, problem.inequalities);
    append_safety_rows(data, problem.inequalities);
    if (cfg_.mode == PlannerMode::kDrcmpc) {
      // Only the worst-case-CVaR head rows carry curvature worth telling
      // the solver about (the conic term near gamma = 0).
      problem.inequality_curvature.resize(problem.inequalities.size());
      for (Eigen::Index o = 0; o < data->layout.n_obs; ++o) {
        for (int i = 1; i <= data->layout.N; ++i) {
          const auto idx = static_cast<std::size_t>(
              data->layout.safety_row_start(o, i));
          problem.inequality_curvature[idx] =
              [data, o, i](const Eigen::VectorXd& x, HessEntries& out) {
                const ProblemLayout& l = data->layout;
                const DrCvarBlock& block =
                    data->blocks[static_cast<std::size_t>(o)]
                                [static_cast<std::size_t>(i - 1)];
                const Eigen::Index ns = block.sample_count();
                const Eigen::Index g0 = l.gamma_offset(o, i);
                const Eigen::MatrixXd h =
                    block.head_gamma_hessian(x.segment(g0, ns));
                for (Eigen::Index a = 0; a < ns; ++a) {
                  for (Eigen::Index b = 0; b < ns; ++b) {
                    out.emplace_back(g0 + a, g0 + b, h(a, b));
                  }
                }
              };
        }
      }
    }
    set_bounds(*data, problem);
    problem.initial_point = initial_point(*data);
    return problem;
  }

  /// Solves the receding-horizon problem and returns the first input,
  /// clamped to the input box. Warm starts shift the previous solution one
  /// step and reuse the previous multipliers. Infeasibility never throws;
  /// the slack variables absorb it and slack_used reports the total.
  PlanResult plan_step(const AgentState& x0, const ControlInput& u_prev,
                       const std::vector<AgentState>& obstacles) {
    NlpProblem problem = build_problem(x0, u_prev, obstacles);
    NlpOptions opts = cfg_.solver;
    const ProblemLayout lay =
        make_layout(static_cast<Eigen::Index>(obstacles.size()));
    if (warm_valid_ && warm_x_.size() == problem.n_vars) {
      problem.initial_point = shift_warm_start(lay, warm_x_);
      problem.initial_point =
          problem.initial_point.cwiseMax(problem.lower).cwiseMin(problem.upper);
      if (warm_mu_.size() ==
          static_cast<Eigen::Index>(problem.inequalities.size())) {
        opts.initial_multipliers = warm_mu_;
      }
    }

    PlanResult result;
    result.solver = solve(problem, opts);

    // Evasive restart: if the incumbent leans on safety slack while its plan
    // is still laterally flat (the collinear saddle), retry once from a
    // kicked rollout. Plans that already steer are left alone; re-kicking
    // them every step would flip between near-equal basins.
    if (!obstacles.empty() &&
        slack_total(result.solver.x_star, lay) > cfg_.evasive_restart_slack &&
        lateral_span(result.solver.x_star, lay, x0) < 0.05) {
      NlpProblem kicked = build_problem(x0, u_prev, obstacles);
      kicked.initial_point = kicked_initial_point(x0, lay);
      kicked.initial_point =
          kicked.initial_point.cwiseMax(kicked.lower).cwiseMin(kicked.upper);
      const NlpResult retry = solve(kicked, cfg_.solver);
      const double incumbent_slack = slack_total(result.solver.x_star, lay);
      const double retry_slack = slack_total(retry.x_star, lay);
      const bool retry_better =
          retry.status != NlpStatus::kNumericalFailure &&
          (retry_slack < incumbent_slack - 1e-9 ||
           (std::abs(retry_slack - incumbent_slack) <= 1e-9 &&
            retry.objective_value < result.solver.objective_value));
      if (retry_better) {
        result.solver = retry;
      }
    }
    const Eigen::VectorXd& sol = result.solver.x_star;

    warm_x_ = sol;
    warm_mu_ = result.solver.multipliers;
    warm_valid_ = result.solver.status != NlpStatus::kNumericalFailure;

    result.u0 = ControlInput{
        std::clamp(sol[lay.u_offset(0)], cfg_.u_min[0], cfg_.u_max[0]),
        std::clamp(sol[lay.u_offset(0) + 1], cfg_.u_min[1], cfg_.u_max[1])};
    result.predicted_ego.reserve(static_cast<std::size_t>(cfg_.horizon));
    for (int i = 1; i <= cfg_.horizon; ++i) {
      result.predicted_ego.push_back(
          AgentState::from_vec(sol.segment<4>(lay.x_offset(i))));
    }
    result.predicted_obstacles = predictions_at(sol, lay, x0, obstacles);
    for (Eigen::Index o = 0; o < lay.n_obs; ++o) {
      for (int i = 1; i <= cfg_.horizon; ++i) {
        result.slack_used += sol[lay.slack_offset(o, i)];
      }
    }
    return result;
  }

  void reset_warm_start() { warm_valid_ = false; }

 private:
  struct BuildData {
    MpcConfig cfg;
    AgentState x0;
    ControlInput u_prev;
    std::vector<AgentState> obstacles;
    std::vector<std::shared_ptr<const ContextualPredictor>> predictors;
    ProblemLayout layout;
    /// Constant-velocity predictions, per obstacle, steps 1..N (NMPC).
    std::vector<std::vector<Eigen::Vector2d>> cv_positions;
    /// DR blocks per obstacle, steps 1..N (DRCMPC).
    std::vector<std::vector<DrCvarBlock>> blocks;
    mutable std::vector<detail::StepCache> step_cache;
  };

  const ContextualPredictor& predictor(Eigen::Index o) const {
    if (static_cast<std::size_t>(o) >= predictors_.size() ||
        predictors_[static_cast<std::size_t>(o)] == nullptr) {
      throw std::invalid_argument(
          "Planner: contextual mode requires a fitted predictor per obstacle");
    }
    return *predictors_[static_cast<std::size_t>(o)];
  }

  void validate(const AgentState& x0,
                const std::vector<AgentState>& obstacles) const {
    if (!x0.vec().allFinite()) {
      throw std::invalid_argument("Planner: non-finite initial state");
    }
    if (cfg_.mode != PlannerMode::kNmpc) {
      if (predictors_.size() < obstacles.size()) {
        throw std::invalid_argument(
            "Planner: " + std::string(to_string(cfg_.mode)) + " needs " +
            std::to_string(obstacles.size()) + " predictors, have " +
            std::to_string(predictors_.size()));
      }
      for (std::size_t o = 0; o < obstacles.size(); ++o) {
        if (predictor(static_cast<Eigen::Index>(o)).horizon() < cfg_.horizon) {
          throw std::invalid_argument(
              "Planner: predictor horizon shorter than MPC horizon");
        }
      }
    }
  }

  double epsilon_for_step(int i) const {
    if (!cfg_.epsilon_by_step.empty()) {
      return cfg_.epsilon_by_step[static_cast<std::size_t>(i - 1)];
    }
    return cfg_.ambiguity.epsilon;
  }

  void prepare_predictions(BuildData& data) const {
    const auto n_obs = static_cast<Eigen::Index>(data.obstacles.size());
    if (cfg_.mode == PlannerMode::kNmpc) {
      data.cv_positions.resize(static_cast<std::size_t>(n_obs));
      for (Eigen::Index o = 0; o < n_obs; ++o) {
        ConstantVelocityPredictor cv{data.obstacles[static_cast<std::size_t>(o)],
                                     cfg_.dynamics.ts};
        auto& dst = data.cv_positions[static_cast<std::size_t>(o)];
        dst.reserve(static_cast<std::size_t>(cfg_.horizon));
        for (int i = 1; i <= cfg_.horizon; ++i) dst.push_back(cv_predict(cv, i));
      }
    } else if (cfg_.mode == PlannerMode::kDrcmpc) {
      data.blocks.resize(static_cast<std::size_t>(n_obs));
      for (Eigen::Index o = 0; o < n_obs; ++o) {
        auto& dst = data.blocks[static_cast<std::size_t>(o)];
        dst.reserve(static_cast<std::size_t>(cfg_.horizon));
        for (int i = 1; i <= cfg_.horizon; ++i) {
          const CkmeModel& model = predictor(o).model(i);
          AmbiguityConfig amb = cfg_.ambiguity;
          amb.epsilon = epsilon_for_step(i);
          dst.push_back(build_block(i, model.outputs, model.output_gram, amb,
                                    cfg_.d_safe));
        }
      }
    }
  }

  // Context vector z_i assembled from the current ego position (constant)
  // and the decision-variable ego positions p(1..i-1).
  static Eigen::VectorXd build_z(const BuildData& d, const Eigen::VectorXd& x,
                                 Eigen::Index o, int i) {
    Eigen::VectorXd z(2 * (i + 1));
    const Eigen::Vector2d base = d.x0.position();
    z.segment<2>(0) = base;
    for (int t = 1; t < i; ++t) {
      z.segment<2>(2 * t) =
          x.segment<2>(d.layout.x_offset(t)) - base;
    }
    z.segment<2>(2 * i) =
        d.obstacles[static_cast<std::size_t>(o)].position();
    return z;
  }

  /// beta(z) and, when requested, d beta / d p(t) for t = 1..i-1 as an
  /// N_s x 2(i-1) matrix of displacement-block columns.
  static Eigen::VectorXd eval_beta(const CkmeModel& model,
                                   const Eigen::VectorXd& z, int i,
                                   Eigen::MatrixXd* dbeta_dego) {
    const Eigen::VectorXd k = ckme_kernel_vector(model, z);
    Eigen::VectorXd beta = model.weight_matrix * k;
    if (dbeta_dego != nullptr) {
      const Eigen::Index ns = model.sample_count();
      const double inv_l2 = 1.0 / (model.input_kernel.length_scale *
                                   model.input_kernel.length_scale);
      Eigen::MatrixXd jk(ns, 2 * (i - 1));
      for (Eigen::Index j = 0; j < ns; ++j) {
        jk.row(j) = k[j] * inv_l2 *
                    (model.inputs.col(j) - z).segment(2, 2 * (i - 1)).transpose();
      }
      *dbeta_dego = model.weight_matrix * jk;
    }
    return beta;
  }

  ObjectiveFn make_objective(std::shared_ptr<BuildData> data) const {
    return [data](const Eigen::VectorXd& x, Eigen::VectorXd* grad) -> double {
      const ProblemLayout& lay = data->layout;
      const MpcConfig& c = data->cfg;
      if (grad) grad->setZero(lay.n_vars);
      double value = 0.0;
      for (int i = 0; i < lay.N; ++i) {
        const Eigen::Vector4d xe =
            x.segment<4>(lay.x_offset(i + 1)) - c.x_ref;
        const Eigen::Matrix4d& q = (i == lay.N - 1) ? c.q_terminal : c.q_stage;
        const Eigen::Vector4d qx = q * xe;
        value += xe.dot(qx);
        if (grad) grad->segment<4>(lay.x_offset(i + 1)) += 2.0 * qx;

        const Eigen::Vector2d ui = x.segment<2>(lay.u_offset(i));
        const Eigen::Vector2d r1u = c.r1 * ui;
        value += ui.dot(r1u);
        if (grad) grad->segment<2>(lay.u_offset(i)) += 2.0 * r1u;

        const Eigen::Vector2d u_last =
            (i == 0) ? data->u_prev.vec()
                     : Eigen::Vector2d(x.segment<2>(lay.u_offset(i - 1)));
        const Eigen::Vector2d du = ui - u_last;
        const Eigen::Vector2d r2du = c.r2 * du;
        value += du.dot(r2du);
        if (grad) {
          grad->segment<2>(lay.u_offset(i)) += 2.0 * r2du;
          if (i > 0) grad->segment<2>(lay.u_offset(i - 1)) -= 2.0 * r2du;
        }
      }
      for (Eigen::Index o = 0; o < lay.n_obs; ++o) {
        for (int i = 1; i <= lay.N; ++i) {
          const Eigen::Index si = lay.slack_offset(o, i);
          value += c.slack_weight * x[si] * x[si];
          if (grad) (*grad)[si] += 2.0 * c.slack_weight * x[si];
        }
      }
      return value;
    };
  }

  void append_dynamics_rows(std::shared_ptr<BuildData> data,
                            std::vector<ConstraintFn>& rows) const {
    for (int i = 0; i < cfg_.horizon; ++i) {
      for (int comp = 0; comp < 4; ++comp) {
        for (const double sign : {+1.0, -1.0}) {
          rows.push_back([data, i, comp, sign](const Eigen::VectorXd& x,
                                               GradEntries* g) -> double {
            const ProblemLayout& lay = data->layout;
            const Eigen::Vector4d xi =
                (i == 0) ? data->x0.vec()
                         : Eigen::Vector4d(x.segment<4>(lay.x_offset(i)));
            const Eigen::Vector2d ui = x.segment<2>(lay.u_offset(i));
            auto& cache = data->step_cache[static_cast<std::size_t>(i)];
            cache.ensure(xi, ui, data->cfg.dynamics, g != nullptr);
            const double value =
                sign * (x[lay.x_offset(i + 1) + comp] - cache.next[comp]);
            if (g) {
              g->clear();
              g->emplace_back(lay.x_offset(i + 1) + comp, sign);
              if (i > 0) {
                for (int k = 0; k < 4; ++k) {
                  const double d = cache.jac.dx(comp, k);
                  if (d != 0.0) g->emplace_back(lay.x_offset(i) + k, -sign * d);
                }
              }
              for (int k = 0; k < 2; ++k) {
                const double d = cache.jac.du(comp, k);
                if (d != 0.0) g->emplace_back(lay.u_offset(i) + k, -sign * d);
              }
            }
            return value;
          });
        }
      }
    }
  }

  void append_safety_rows(std::shared_ptr<BuildData> data,
                          std::vector<ConstraintFn>& rows) const {
    const ProblemLayout& lay = data->layout;
    for (Eigen::Index o = 0; o < lay.n_obs; ++o) {
      for (int i = 1; i <= lay.N; ++i) {
        switch (cfg_.mode) {
          case PlannerMode::kNmpc: {
            const Eigen::Vector2d target =
                data->cv_positions[static_cast<std::size_t>(o)]
                                  [static_cast<std::size_t>(i - 1)];
            rows.push_back([data, o, i, target](const Eigen::VectorXd& x,
                                                GradEntries* g) -> double {
              const ProblemLayout& l = data->layout;
              const Eigen::Vector2d p = x.segment<2>(l.x_offset(i));
              const Eigen::Index si = l.slack_offset(o, i);
              const double value =
                  risk_function(p, target, data->cfg.d_safe) - x[si];
              if (g) {
                g->clear();
                const Eigen::Vector2d dp = -2.0 * (p - target);
                g->emplace_back(l.x_offset(i), dp[0]);
                g->emplace_back(l.x_offset(i) + 1, dp[1]);
                g->emplace_back(si, -1.0);
              }
              return value;
            });
            break;
          }
          case PlannerMode::kCmpc: {
            rows.push_back([data, o, i](const Eigen::VectorXd& x,
                                        GradEntries* g) -> double {
              const ProblemLayout& l = data->layout;
              const CkmeModel& model =
                  data->predictors[static_cast<std::size_t>(o)]->model(i);
              const Eigen::VectorXd z = build_z(*data, x, o, i);
              Eigen::MatrixXd dbeta;
              const Eigen::VectorXd beta =
                  eval_beta(model, z, i, g ? &dbeta : nullptr);
              const Eigen::Vector2d pred = model.outputs * beta;
              const Eigen::Vector2d p = x.segment<2>(l.x_offset(i));
              const Eigen::Index si = l.slack_offset(o, i);
              const double value =
                  risk_function(p, pred, data->cfg.d_safe) - x[si];
              if (g) {
                g->clear();
                const Eigen::Vector2d diff = p - pred;
                g->emplace_back(l.x_offset(i), -2.0 * diff[0]);
                g->emplace_back(l.x_offset(i) + 1, -2.0 * diff[1]);
                for (int t = 1; t < i; ++t) {
                  const Eigen::Vector2d dpred_t =
                      2.0 * (model.outputs * dbeta.middleCols(2 * (t - 1), 2))
                                .transpose() *
                          diff;
                  g->emplace_back(l.x_offset(t), dpred_t[0]);
                  g->emplace_back(l.x_offset(t) + 1, dpred_t[1]);
                }
                g->emplace_back(si, -1.0);
              }
              return value;
            });
            break;
          }
          case PlannerMode::kDrcmpc: {
            append_dr_rows(data, o, i, rows);
            break;
          }
        }
      }
    }
  }

  void append_dr_rows(std::shared_ptr<BuildData> data, Eigen::Index o, int i,
                      std::vector<ConstraintFn>& rows) const {
    const Eigen::Index ns =
        data->layout.sample_counts[static_cast<std::size_t>(o)]
                                  [static_cast<std::size_t>(i - 1)];
    // (C1): the worst-case-CVaR head row, relaxed by the step slack.
    rows.push_back([data, o, i](const Eigen::VectorXd& x,
                                GradEntries* g) -> double {
      const ProblemLayout& l = data->layout;
      const DrCvarBlock& block = data->blocks[static_cast<std::size_t>(o)]
                                             [static_cast<std::size_t>(i - 1)];
      const CkmeModel& model =
          data->predictors[static_cast<std::size_t>(o)]->model(i);
      const Eigen::Index n = block.sample_count();
      const Eigen::VectorXd gamma = x.segment(l.gamma_offset(o, i), n);
      const double t = x[l.t_offset(o, i)];
      const double go = x[l.go_offset(o, i)];
      const Eigen::VectorXd z = build_z(*data, x, o, i);
      Eigen::MatrixXd dbeta;
      const Eigen::VectorXd beta =
          eval_beta(model, z, i, g ? &dbeta : nullptr);
      const Eigen::Index si = l.slack_offset(o, i);
      const double value = block.head_value(beta, gamma, t, go) - x[si];
      if (g) {
        g->clear();
        Eigen::VectorXd d_gamma, d_beta;
        double d_t = 0.0, d_go = 0.0;
        block.head_gradients(beta, gamma, d_gamma, d_t, d_go, d_beta);
        for (Eigen::Index j = 0; j < n; ++j) {
          g->emplace_back(l.gamma_offset(o, i) + j, d_gamma[j]);
        }
        g->emplace_back(l.t_offset(o, i), d_t);
        g->emplace_back(l.go_offset(o, i), d_go);
        for (int tt = 1; tt < i; ++tt) {
          const Eigen::Vector2d dz =
              dbeta.middleCols(2 * (tt - 1), 2).transpose() * d_beta;
          g->emplace_back(l.x_offset(tt), dz[0]);
          g->emplace_back(l.x_offset(tt) + 1, dz[1]);
        }
        g->emplace_back(si, -1.0);
      }
      return value;
    });
    // (C2a)/(C2b): the exact two-inequality hinge split, one pair per sample.
    for (Eigen::Index j = 0; j < ns; ++j) {
      rows.push_back([data, o, i, j](const Eigen::VectorXd& x,
                                     GradEntries* g) -> double {
        const ProblemLayout& l = data->layout;
        const DrCvarBlock& block =
            data->blocks[static_cast<std::size_t>(o)]
                        [static_cast<std::size_t>(i - 1)];
        const Eigen::Index n = block.sample_count();
        const Eigen::VectorXd gamma = x.segment(l.gamma_offset(o, i), n);
        const Eigen::Vector2d p = x.segment<2>(l.x_offset(i));
        const double value = block.hinge_upper_value(
            j, p, gamma, x[l.t_offset(o, i)], x[l.go_offset(o, i)]);
        if (g) {
          g->clear();
          const Eigen::Vector2d dp = -2.0 * (p - block.samples.col(j));
          g->emplace_back(l.x_offset(i), dp[0]);
          g->emplace_back(l.x_offset(i) + 1, dp[1]);
          g->emplace_back(l.t_offset(o, i), 1.0);
          g->emplace_back(l.go_offset(o, i), -1.0);
          for (Eigen::Index k = 0; k < n; ++k) {
            g->emplace_back(l.gamma_offset(o, i) + k, -block.output_gram(j, k));
          }
        }
        return value;
      });
    }
    for (Eigen::Index j = 0; j < ns; ++j) {
      rows.push_back([data, o, i, j](const Eigen::VectorXd& x,
                                     GradEntries* g) -> double {
        const ProblemLayout& l = data->layout;
        const DrCvarBlock& block =
            data->blocks[static_cast<std::size_t>(o)]
                        [static_cast<std::size_t>(i - 1)];
        const Eigen::Index n = block.sample_count();
        const Eigen::VectorXd gamma = x.segment(l.gamma_offset(o, i), n);
        const double value =
            block.hinge_lower_value(j, gamma, x[l.go_offset(o, i)]);
        if (g) {
          g->clear();
          g->emplace_back(l.go_offset(o, i), -1.0);
          for (Eigen::Index k = 0; k < n; ++k) {
            g->emplace_back(l.gamma_offset(o, i) + k, -block.output_gram(j, k));
          }
        }
        return value;
      });
    }
  }

  void set_bounds(const BuildData& data, NlpProblem& problem) const {
    const ProblemLayout& lay = data.layout;
    const double inf = std::numeric_limits<double>::infinity();
    problem.lower = Eigen::VectorXd::Constant(lay.n_vars, -inf);
    problem.upper = Eigen::VectorXd::Constant(lay.n_vars, inf);
    for (int i = 0; i < lay.N; ++i) {
      problem.lower.segment<2>(lay.u_offset(i)) = cfg_.u_min;
      problem.upper.segment<2>(lay.u_offset(i)) = cfg_.u_max;
      problem.lower.segment<4>(lay.x_offset(i + 1)) = cfg_.x_min;
      problem.upper.segment<4>(lay.x_offset(i + 1)) = cfg_.x_max;
    }
    for (Eigen::Index o = 0; o < lay.n_obs; ++o) {
      for (int i = 1; i <= lay.N; ++i) {
        problem.lower[lay.slack_offset(o, i)] = 0.0;
      }
    }
  }

  Eigen::VectorXd initial_point(const BuildData& data) const {
    const ProblemLayout& lay = data.layout;
    Eigen::VectorXd x0 = Eigen::VectorXd::Zero(lay.n_vars);
    // Coasting rollout (zero input) clamped into the state box.
    AgentState s = data.x0;
    for (int i = 1; i <= lay.N; ++i) {
      s = euler_step(s, ControlInput{0.0, 0.0}, cfg_.dynamics);
      Eigen::Vector4d sv = s.vec().cwiseMax(cfg_.x_min).cwiseMin(cfg_.x_max);
      x0.segment<4>(lay.x_offset(i)) = sv;
      s = AgentState::from_vec(sv);
    }
    return x0;
  }

  double slack_total(const Eigen::VectorXd& sol,
                     const ProblemLayout& lay) const {
    double total = 0.0;
    for (Eigen::Index o = 0; o < lay.n_obs; ++o) {
      for (int i = 1; i <= lay.N; ++i) total += sol[lay.slack_offset(o, i)];
    }
    return total;
  }

  double lateral_span(const Eigen::VectorXd& sol, const ProblemLayout& lay,
                      const AgentState& x0) const {
    double span = 0.0;
    for (int i = 1; i <= lay.N; ++i) {
      span = std::max(span, std::abs(sol[lay.x_offset(i) + 1] - x0.py));
    }
    return span;
  }

  /// Rollout under a constant left steering kick; used as the restart guess.
  Eigen::VectorXd kicked_initial_point(const AgentState& x0,
                                       const ProblemLayout& lay) const {
    Eigen::VectorXd x = Eigen::VectorXd::Zero(lay.n_vars);
    const ControlInput kick{0.0, cfg_.evasive_kick};
    AgentState s = x0;
    for (int i = 1; i <= lay.N; ++i) {
      s = euler_step(s, kick, cfg_.dynamics);
      Eigen::Vector4d sv = s.vec().cwiseMax(cfg_.x_min).cwiseMin(cfg_.x_max);
      x.segment<4>(lay.x_offset(i)) = sv;
      s = AgentState::from_vec(sv);
      x.segment<2>(lay.u_offset(i - 1)) = kick.vec();
    }
    return x;
  }

  Eigen::VectorXd shift_warm_start(const ProblemLayout& lay,
                                   const Eigen::VectorXd& prev) const {
    Eigen::VectorXd out = prev;
    for (int i = 0; i < lay.N - 1; ++i) {
      out.segment<2>(lay.u_offset(i)) = prev.segment<2>(lay.u_offset(i + 1));
    }
    for (int i = 1; i < lay.N; ++i) {
      out.segment<4>(lay.x_offset(i)) = prev.segment<4>(lay.x_offset(i + 1));
    }
    // Roll the terminal state forward with the repeated last input.
    try {
      const AgentState last =
          AgentState::from_vec(prev.segment<4>(lay.x_offset(lay.N)));
      const ControlInput u_last{prev[lay.u_offset(lay.N - 1)],
                                prev[lay.u_offset(lay.N - 1) + 1]};
      out.segment<4>(lay.x_offset(lay.N)) =
          euler_step(last, u_last, cfg_.dynamics).vec();
    } catch (const std::domain_error&) {
      out.segment<4>(lay.x_offset(lay.N)) = prev.segment<4>(lay.x_offset(lay.N));
    }
    for (Eigen::Index o = 0; o < lay.n_obs; ++o) {
      for (int i = 1; i < lay.N; ++i) {
        out[lay.slack_offset(o, i)] = prev[lay.slack_offset(o, i + 1)];
        if (lay.mode == PlannerMode::kDrcmpc) {
          const Eigen::Index ns =
              lay.sample_counts[static_cast<std::size_t>(o)]
                               [static_cast<std::size_t>(i - 1)];
          const Eigen::Index ns_next =
              lay.sample_counts[static_cast<std::size_t>(o)]
                               [static_cast<std::size_t>(i)];
          if (ns == ns_next) {
            out.segment(lay.gamma_offset(o, i), ns) =
                prev.segment(lay.gamma_offset(o, i + 1), ns);
            out[lay.t_offset(o, i)] = prev[lay.t_offset(o, i + 1)];
            out[lay.go_offset(o, i)] = prev[lay.go_offset(o, i + 1)];
          }
        }
      }
    }
    return out;
  }

  std::vector<std::vector<Eigen::Vector2d>> predictions_at(
      const Eigen::VectorXd& sol, const ProblemLayout& lay,
      const AgentState& x0, const std::vector<AgentState>& obstacles) const {
    std::vector<std::vector<Eigen::Vector2d>> out(
        static_cast<std::size_t>(lay.n_obs));
    for (Eigen::Index o = 0; o < lay.n_obs; ++o) {
      auto& dst = out[static_cast<std::size_t>(o)];
      dst.reserve(static_cast<std::size_t>(lay.N));
      for (int i = 1; i <= lay.N; ++i) {
        if (cfg_.mode == PlannerMode::kNmpc) {
          ConstantVelocityPredictor cv{obstacles[static_cast<std::size_t>(o)],
                                       cfg_.dynamics.ts};
          dst.push_back(cv_predict(cv, i));
        } else {
          const CkmeModel& model = predictor(o).model(i);
          Eigen::VectorXd z(2 * (i + 1));
          const Eigen::Vector2d base = x0.position();
          z.segment<2>(0) = base;
          for (int t = 1; t < i; ++t) {
            z.segment<2>(2 * t) = sol.segment<2>(lay.x_offset(t)) - base;
          }
          z.segment<2>(2 * i) =
              obstacles[static_cast<std::size_t>(o)].position();
          dst.push_back(ckme_predict(model, z));
        }
      }
    }
    return out;
  }

  MpcConfig cfg_;
  std::vector<std::shared_ptr<const ContextualPredictor>> predictors_;
  bool warm_valid_{false};
  Eigen::VectorXd warm_x_;
  Eigen::VectorXd warm_mu_;
};

}  // namespace drmpc
