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
#include <chrono>
#include <cmath>
#include <deque>
#include <functional>
#include <limits>
#include <ostream>
#include <stdexcept>
#include <utility>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Core>

namespace drmpc {

/// Sparse gradient of one constraint row: (variable index, partial) pairs.
using GradEntries = std::vector<std::pair<Eigen::Index, double>>;

/// Inequality row, feasible iff value <= 0. When `grad` is non-null the row
/// must clear it and append its nonzero partials.
using ConstraintFn =
    std::function<double(const Eigen::VectorXd& x, GradEntries* grad)>;

/// Objective callable; when `grad` is non-null it must be assigned (dense).
using ObjectiveFn =
    std::function<double(const Eigen::VectorXd& x, Eigen::VectorXd* grad)>;

/// Sparse symmetric Hessian entries (row, col, value) of one constraint;
/// both triangles must be emitted.
using HessEntries = std::vector<std::tuple<Eigen::Index, Eigen::Index, double>>;

/// Smooth program: minimize objective subject to inequality rows <= 0 and
/// box bounds on the variables.
struct NlpProblem {
  Eigen::Index n_vars{0};
  ObjectiveFn objective;
  std::vector<ConstraintFn> inequalities;
  Eigen::VectorXd lower;  ///< -inf allowed
  Eigen::VectorXd upper;  ///< +inf allowed
  Eigen::VectorXd initial_point;
  /// Optional per-coordinate curvature estimate of the objective, assigned
  /// dense like the gradient. Feeds the inner preconditioner; augmented
  /// penalty terms can otherwise dwarf weakly weighted coordinates.
  std::function<void(const Eigen::VectorXd&, Eigen::VectorXd&)>
      objective_diagonal;
  /// Optional full objective Hessian (assigned dense). When present the
  /// constrained inner solver runs damped Newton steps with the exact
  /// penalty Gauss-Newton matrix instead of quasi-Newton estimates.
  std::function<void(const Eigen::VectorXd&, Eigen::MatrixXd&)>
      objective_hessian;
  /// Optional exact curvature per constraint row, parallel to
  /// `inequalities` (may be empty or shorter; entries may be null). Rows
  /// with strong curvature, like conic terms near their tip, converge far
  /// better when the inner Newton matrix sees it.
  std::vector<std::function<void(const Eigen::VectorXd&, HessEntries&)>>
      inequality_curvature;
};

enum class NlpStatus { kOptimal, kMaxIter, kInfeasible, kNumericalFailure };

inline const char* to_string(NlpStatus s) {
  switch (s) {
    case NlpStatus::kOptimal: return "optimal";
    case NlpStatus::kMaxIter: return "max_iter";
    case NlpStatus::kInfeasible: return "infeasible";
    case NlpStatus::kNumericalFailure: return "numerical_failure";
  }
  return "unknown";
}

struct NlpResult {
  Eigen::VectorXd x_star;
  NlpStatus status{NlpStatus::kMaxIter};
  double objective_value{0.0};
  double max_constraint_violation{0.0};
  double kkt_residual{0.0};
  int iterations{0};        ///< outer (multiplier) iterations
  int inner_iterations{0};  ///< total quasi-Newton iterations
  double solve_time{0.0};   ///< seconds
  Eigen::VectorXd multipliers;
};

struct NlpOptions {
  double feasibility_tol{1e-6};
  double optimality_tol{1e-6};
  int max_outer{50};
  int max_inner{200};
  double initial_penalty{10.0};
  double penalty_growth{10.0};
  double max_penalty{1e9};
  int lbfgs_memory{20};
  /// Nonmonotone line-search window of the quasi-Newton path (accepted
  /// values remembered per inner solve); 1 is the monotone Armijo rule.
  int nonmonotone_window{1};
  /// Warm-started inequality multipliers; empty means start from zero.
  Eigen::VectorXd initial_multipliers;
  /// Optional plain-text iteration log: "iter objective violation kkt".
  std::ostream* iteration_log{nullptr};
};

namespace detail {

inline Eigen::VectorXd clamp_to_box(const Eigen::VectorXd& x,
                                    const Eigen::VectorXd& lo,
                                    const Eigen::VectorXd& hi) {
  return x.cwiseMax(lo).cwiseMin(hi);
}

struct LbfgsMemory {
  std::deque<Eigen::VectorXd> s, y;
  std::deque<double> rho;
  int capacity{10};

  void clear() {
    s.clear();
    y.clear();
    rho.clear();
  }
  bool empty() const { return s.empty(); }

  void push(Eigen::VectorXd si, Eigen::VectorXd yi) {
    const double sy = si.dot(yi);
    if (sy <= 1e-12 * si.norm() * yi.norm()) return;
    s.push_back(std::move(si));
    y.push_back(std::move(yi));
    rho.push_back(1.0 / sy);
    if (static_cast<int>(s.size()) > capacity) {
      s.pop_front();
      y.pop_front();
      rho.pop_front();
    }
  }

  /// Two-loop recursion seeded with the diagonal metric M (H0 = gamma/M);
  /// returns -H * g. With M = 1 and gamma from the newest pair this is the
  /// standard scaling.
  Eigen::VectorXd direction(const Eigen::VectorXd& g,
                            const Eigen::VectorXd& metric) const {
    Eigen::VectorXd q = g;
    const int m = static_cast<int>(s.size());
    std::vector<double> a(static_cast<std::size_t>(m));
    for (int i = m - 1; i >= 0; --i) {
      a[static_cast<std::size_t>(i)] =
          rho[static_cast<std::size_t>(i)] *
          s[static_cast<std::size_t>(i)].dot(q);
      q -= a[static_cast<std::size_t>(i)] * y[static_cast<std::size_t>(i)];
    }
    q = q.cwiseQuotient(metric);
    if (m > 0) {
      const auto& yl = y.back();
      const double denom = yl.dot(yl.cwiseQuotient(metric));
      if (denom > 0.0) q *= s.back().dot(yl) / denom;
    }
    for (int i = 0; i < m; ++i) {
      const double b = rho[static_cast<std::size_t>(i)] *
                       y[static_cast<std::size_t>(i)].dot(q);
      q += (a[static_cast<std::size_t>(i)] - b) * s[static_cast<std::size_t>(i)];
    }
    return -q;
  }
};

}  // namespace detail

/// Augmented-Lagrangian solver with a projected L-BFGS inner loop.
///
/// Deterministic: an identical problem and options produce the identical
/// iterate sequence. On hitting the outer iteration cap the best iterate
/// seen (least violation, then least objective) is returned.
inline NlpResult solve(const NlpProblem& problem, const NlpOptions& opts = {}) {
  using clock = std::chrono::steady_clock;
  const auto t_start = clock::now();

  const Eigen::Index n = problem.n_vars;
  const auto m = static_cast<Eigen::Index>(problem.inequalities.size());
  if (problem.lower.size() != n || problem.upper.size() != n ||
      problem.initial_point.size() != n) {
    throw std::invalid_argument("solve: inconsistent problem dimensions");
  }
  if ((problem.lower.array() > problem.upper.array()).any()) {
    throw std::invalid_argument("solve: lower bound exceeds upper bound");
  }

  NlpResult result;
  result.multipliers = Eigen::VectorXd::Zero(m);
  if (opts.initial_multipliers.size() == m) {
    result.multipliers = opts.initial_multipliers.cwiseMax(0.0);
  } else if (opts.initial_multipliers.size() != 0) {
    throw std::invalid_argument("solve: multiplier warm start has wrong size");
  }

  Eigen::VectorXd x =
      detail::clamp_to_box(problem.initial_point, problem.lower, problem.upper);
  Eigen::VectorXd mu = result.multipliers;
  double rho = opts.initial_penalty;

  bool numerical_failure = false;
  GradEntries scratch;
  scratch.reserve(64);
  HessEntries hess_scratch;
  hess_scratch.reserve(128);

  // Augmented-Lagrangian value and gradient at fixed (mu, rho). When `diag`
  // is non-null it also accumulates the Gauss-Newton diagonal of the penalty
  // (rho * grad_c^2 over active rows) on top of the objective curvature.
  const auto eval_al = [&](const Eigen::VectorXd& xv, Eigen::VectorXd* grad,
                           Eigen::VectorXd* diag = nullptr) -> double {
    double value = problem.objective(xv, grad);
    if (!std::isfinite(value)) return std::numeric_limits<double>::quiet_NaN();
    if (diag) {
      if (problem.objective_diagonal) {
        problem.objective_diagonal(xv, *diag);
      } else {
        diag->setZero(n);
      }
    }
    for (Eigen::Index i = 0; i < m; ++i) {
      const double ci = problem.inequalities[static_cast<std::size_t>(i)](
          xv, grad ? &scratch : nullptr);
      if (!std::isfinite(ci)) return std::numeric_limits<double>::quiet_NaN();
      const double shifted = mu[i] + rho * ci;
      if (shifted > 0.0) {
        value += (shifted * shifted - mu[i] * mu[i]) / (2.0 * rho);
        if (grad) {
          for (const auto& [idx, g] : scratch) {
            (*grad)[idx] += shifted * g;
            if (diag) (*diag)[idx] += rho * g * g;
          }
        }
      } else {
        value -= mu[i] * mu[i] / (2.0 * rho);
      }
    }
    return value;
  };

  const auto projected_gradient_norm = [&](const Eigen::VectorXd& xv,
                                           const Eigen::VectorXd& g) {
    return (xv - detail::clamp_to_box(xv - g, problem.lower, problem.upper))
        .lpNorm<Eigen::Infinity>();
  };

  // Minimizes the AL over the box from x; returns false on NaN/Inf and
  // stores the achieved projected-gradient norm. The diagonal metric is
  // frozen per inner solve so the quasi-Newton pairs stay consistent, and
  // the line search is nonmonotone: stiff penalty valleys are traversable
  // only if occasional uphill steps are admitted and the curvature memory
  // survives a failed search.
  double inner_pg = std::numeric_limits<double>::infinity();
  const auto inner_solve = [&](double tol) -> bool {
    detail::LbfgsMemory memory;
    memory.capacity = opts.lbfgs_memory;
    Eigen::VectorXd g(n), g_new(n), diag(n);
    double f = eval_al(x, &g, &diag);
    if (!std::isfinite(f)) return false;
    const Eigen::VectorXd metric = diag.array() + 1.0;
    inner_pg = projected_gradient_norm(x, g);
    std::deque<double> recent{f};
    for (int it = 0; it < opts.max_inner; ++it) {
      if (inner_pg <= tol) break;
      Eigen::VectorXd d = memory.empty()
                              ? Eigen::VectorXd(-g.cwiseQuotient(metric))
                              : memory.direction(g, metric);
      bool fallback = memory.empty();
      if (g.dot(d) > -1e-12 * g.norm() * d.norm()) {
        d = -g.cwiseQuotient(metric);
        fallback = true;
      }
      const double f_ref = *std::max_element(recent.begin(), recent.end());

      bool accepted = false;
      Eigen::VectorXd x_trial;
      double f_trial = 0.0;
      for (int attempt = 0; attempt < 2 && !accepted; ++attempt) {
        double alpha =
            fallback ? std::min(1.0, 1.0 / std::max(1e-12,
                                                    d.lpNorm<Eigen::Infinity>()))
                     : 1.0;
        for (int ls = 0; ls < 40; ++ls) {
          x_trial = detail::clamp_to_box(x + alpha * d, problem.lower,
                                         problem.upper);
          const Eigen::VectorXd step = x_trial - x;
          if (step.lpNorm<Eigen::Infinity>() < 1e-16) break;
          f_trial = eval_al(x_trial, nullptr);
          // min(0, .) keeps the test a descent condition even when the box
          // projection bends the step against the gradient.
          if (std::isfinite(f_trial) &&
              f_trial <= f_ref + 1e-4 * std::min(0.0, g.dot(step))) {
            accepted = true;
            break;
          }
          alpha *= 0.5;
        }
        if (!accepted && !fallback) {
          d = -g.cwiseQuotient(metric);  // retry scaled steepest descent
          fallback = true;
        }
      }
      if (!accepted) break;  // stalled even along the preconditioned gradient

      f_trial = eval_al(x_trial, &g_new);
      if (!std::isfinite(f_trial)) return false;
      memory.push(x_trial - x, g_new - g);
      x = x_trial;
      f = f_trial;
      g.swap(g_new);
      inner_pg = projected_gradient_norm(x, g);
      recent.push_back(f);
      if (static_cast<int>(recent.size()) > std::max(1, opts.nonmonotone_window)) {
        recent.pop_front();
      }
      ++result.inner_iterations;
    }
    return true;
  };

  // Damped Gauss-Newton inner loop for constrained problems. The penalty
  // Hessian rho * grad_c grad_c' over active rows is exact, so stiff penalty
  // surfaces that defeat quasi-Newton estimates are handled directly; the
  // objective contributes its exact Hessian or diagonal when provided and
  // Levenberg-Marquardt damping absorbs whatever curvature is missing.
  const auto eval_gn = [&](const Eigen::VectorXd& xv, double& value,
                           Eigen::VectorXd& grad,
                           Eigen::MatrixXd& hess) -> bool {
    value = problem.objective(xv, &grad);
    if (!std::isfinite(value)) return false;
    if (problem.objective_hessian) {
      problem.objective_hessian(xv, hess);
    } else if (problem.objective_diagonal) {
      Eigen::VectorXd d(n);
      problem.objective_diagonal(xv, d);
      hess.setZero(n, n);
      hess.diagonal() = d;
    } else {
      hess.setZero(n, n);
    }
    for (Eigen::Index i = 0; i < m; ++i) {
      const double ci =
          problem.inequalities[static_cast<std::size_t>(i)](xv, &scratch);
      if (!std::isfinite(ci)) return false;
      const double shifted = mu[i] + rho * ci;
      if (shifted > 0.0) {
        value += (shifted * shifted - mu[i] * mu[i]) / (2.0 * rho);
        for (const auto& [i1, v1] : scratch) {
          grad[i1] += shifted * v1;
          for (const auto& [i2, v2] : scratch) {
            hess(i1, i2) += rho * v1 * v2;
          }
        }
        if (static_cast<std::size_t>(i) < problem.inequality_curvature.size() &&
            problem.inequality_curvature[static_cast<std::size_t>(i)]) {
          hess_scratch.clear();
          problem.inequality_curvature[static_cast<std::size_t>(i)](
              xv, hess_scratch);
          for (const auto& [a, b, v] : hess_scratch) {
            hess(a, b) += shifted * v;
          }
        }
      } else {
        value -= mu[i] * mu[i] / (2.0 * rho);
      }
    }
    return true;
  };

  const auto gn_inner_solve = [&](double tol) -> bool {
    Eigen::VectorXd g(n);
    Eigen::MatrixXd hess(n, n);
    double f = 0.0;
    if (!eval_gn(x, f, g, hess)) return false;
    inner_pg = projected_gradient_norm(x, g);
    double lambda = 1e-3;
    std::vector<Eigen::Index> free_idx;
    free_idx.reserve(static_cast<std::size_t>(n));
    for (int it = 0; it < opts.max_inner; ++it) {
      if (inner_pg <= tol) break;
      // Keep coordinates pinned at a bound with an outward gradient out of
      // the Newton system; the projection handles the rest.
      free_idx.clear();
      for (Eigen::Index k = 0; k < n; ++k) {
        const bool at_lo = x[k] <= problem.lower[k] && g[k] > 0.0;
        const bool at_hi = x[k] >= problem.upper[k] && g[k] < 0.0;
        if (!at_lo && !at_hi) free_idx.push_back(k);
      }
      if (free_idx.empty()) break;
      const auto nf = static_cast<Eigen::Index>(free_idx.size());
      Eigen::MatrixXd hf(nf, nf);
      Eigen::VectorXd gf(nf);
      for (Eigen::Index a = 0; a < nf; ++a) {
        gf[a] = g[free_idx[static_cast<std::size_t>(a)]];
        for (Eigen::Index b = 0; b < nf; ++b) {
          hf(a, b) = hess(free_idx[static_cast<std::size_t>(a)],
                          free_idx[static_cast<std::size_t>(b)]);
        }
      }
      const Eigen::VectorXd damp = hf.diagonal().array() + 1.0;
      bool accepted = false;
      Eigen::VectorXd x_trial;
      for (int attempt = 0; attempt < 30; ++attempt) {
        Eigen::MatrixXd hd = hf;
        hd.diagonal() += lambda * damp;
        const Eigen::LLT<Eigen::MatrixXd> llt(hd);
        if (llt.info() == Eigen::Success) {
          const Eigen::VectorXd df = llt.solve(-gf);
          x_trial = x;
          for (Eigen::Index a = 0; a < nf; ++a) {
            x_trial[free_idx[static_cast<std::size_t>(a)]] += df[a];
          }
          x_trial =
              detail::clamp_to_box(x_trial, problem.lower, problem.upper);
          const Eigen::VectorXd step = x_trial - x;
          if (step.lpNorm<Eigen::Infinity>() > 1e-16) {
            const double f_trial = eval_al(x_trial, nullptr);
            if (std::isfinite(f_trial) &&
                f_trial <= f + 1e-4 * std::min(0.0, g.dot(step))) {
              accepted = true;
              break;
            }
          }
        }
        lambda *= 10.0;
        if (lambda > 1e14) break;
      }
      if (!accepted) break;  // stalled
      lambda = std::max(lambda / 3.0, 1e-12);
      x = x_trial;
      if (!eval_gn(x, f, g, hess)) return false;
      inner_pg = projected_gradient_norm(x, g);
      ++result.inner_iterations;
    }
    return true;
  };

  // Constraint values plus the projected gradient of the ordinary Lagrangian
  // at the given multipliers; used for the KKT report.
  Eigen::VectorXd c_vals(m);
  const auto evaluate_kkt = [&](const Eigen::VectorXd& xv,
                                const Eigen::VectorXd& mults, double& viol,
                                double& kkt, double& fval) -> bool {
    Eigen::VectorXd gl(n);
    fval = problem.objective(xv, &gl);
    if (!std::isfinite(fval)) return false;
    viol = 0.0;
    double comp = 0.0;
    for (Eigen::Index i = 0; i < m; ++i) {
      const double ci = problem.inequalities[static_cast<std::size_t>(i)](
          xv, &scratch);
      if (!std::isfinite(ci)) return false;
      c_vals[i] = ci;
      viol = std::max(viol, ci);
      // Active rows carry large multipliers with c ~ 0; inactive rows must
      // shed their multiplier. min(-c, mu) measures both without the bad
      // scaling of mu * c.
      comp = std::max(comp, std::abs(std::min(-ci, mults[i])));
      if (mults[i] != 0.0) {
        for (const auto& [idx, g] : scratch) gl[idx] += mults[i] * g;
      }
    }
    viol = std::max(viol, 0.0);
    kkt = std::max(projected_gradient_norm(xv, gl), comp);
    return true;
  };

  Eigen::VectorXd best_x = x;
  Eigen::VectorXd best_mu = mu;
  double best_viol = std::numeric_limits<double>::infinity();
  double best_obj = std::numeric_limits<double>::infinity();
  double viol_prev = std::numeric_limits<double>::infinity();
  double kkt_prev = std::numeric_limits<double>::infinity();
  bool converged = false;

  int outer = 0;
  for (outer = 1; outer <= opts.max_outer; ++outer) {
    // Loose-to-tight schedule, accelerated when the KKT residual is already
    // small (warm starts near an optimum tighten immediately).
    const double inner_tol = std::max(
        0.5 * opts.optimality_tol,
        std::min(1e-2 * std::pow(0.2, static_cast<double>(outer - 1)),
                 0.1 * kkt_prev));
    const bool inner_ok =
        (m > 0) ? gn_inner_solve(inner_tol) : inner_solve(inner_tol);
    if (!inner_ok) {
      numerical_failure = true;
      break;
    }

    // Multiplier update and convergence metrics.
    double viol = 0.0, kkt = 0.0, fval = 0.0;
    Eigen::VectorXd mu_new(m);
    {
      // First pass: constraint values for the update.
      bool ok = true;
      for (Eigen::Index i = 0; i < m; ++i) {
        const double ci = problem.inequalities[static_cast<std::size_t>(i)](
            x, nullptr);
        if (!std::isfinite(ci)) {
          ok = false;
          break;
        }
        mu_new[i] = std::max(0.0, mu[i] + rho * ci);
      }
      if (!ok || !evaluate_kkt(x, mu_new, viol, kkt, fval)) {
        numerical_failure = true;
        break;
      }
    }

    if (opts.iteration_log) {
      (*opts.iteration_log) << outer << " " << fval << " " << viol << " "
                            << kkt << "\n";
    }

    const double excess = std::max(viol - opts.feasibility_tol, 0.0);
    const double best_excess = std::max(best_viol - opts.feasibility_tol, 0.0);
    if (excess < best_excess ||
        (excess == best_excess && fval < best_obj)) {
      best_x = x;
      best_mu = mu_new;
      best_viol = viol;
      best_obj = fval;
    }

    mu = mu_new;
    kkt_prev = kkt;
    if (viol <= opts.feasibility_tol && kkt <= opts.optimality_tol) {
      converged = true;
      break;
    }
    // Grow the penalty only when the inner solve actually reached its
    // tolerance yet feasibility stalled. Growing on a loose inner solve
    // explodes rho before the iterate has moved; once feasible, multiplier
    // updates alone finish the job, and a needlessly large rho both
    // ill-conditions the inner problem and injects rho*|c| noise into the
    // multipliers.
    if (inner_pg <= inner_tol && viol > opts.feasibility_tol &&
        viol > 0.25 * viol_prev) {
      rho = std::min(rho * opts.penalty_growth, opts.max_penalty);
    }
    viol_prev = viol;
  }

  result.iterations = std::min(outer, opts.max_outer);
  if (numerical_failure) {
    result.status = NlpStatus::kNumericalFailure;
  } else if (converged) {
    result.status = NlpStatus::kOptimal;
    best_x = x;
    best_mu = mu;
  } else if (best_viol <= opts.feasibility_tol) {
    result.status = NlpStatus::kMaxIter;
  } else {
    result.status = NlpStatus::kInfeasible;
  }

  // Report metrics at the returned point.
  result.x_star = best_x;
  result.multipliers = best_mu;
  double viol = 0.0, kkt = 0.0, fval = 0.0;
  if (evaluate_kkt(best_x, best_mu, viol, kkt, fval)) {
    result.max_constraint_violation = viol;
    result.kkt_residual = kkt;
    result.objective_value = fval;
  } else {
    result.status = NlpStatus::kNumericalFailure;
  }
  result.solve_time =
      std::chrono::duration<double>(clock::now() - t_start).count();
  return result;
}

struct GradientCheckReport {
  double max_rel_error{0.0};
  /// -1 for the objective, otherwise the index of the worst constraint.
  Eigen::Index worst_function{-1};
};

/// Central finite differences against the supplied gradients of the
/// objective and every constraint row. Relative error per function is
/// max_i |g_i - fd_i| / max(1, |fd|_inf).
inline GradientCheckReport check_gradients(const NlpProblem& problem,
                                           const Eigen::VectorXd& point,
                                           double h = 1e-6) {
  const Eigen::Index n = problem.n_vars;
  GradientCheckReport report;

  const auto fd_check = [&](const std::function<double(const Eigen::VectorXd&)>& fn,
                            const Eigen::VectorXd& analytic) -> double {
    Eigen::VectorXd fd(n);
    Eigen::VectorXd xp = point, xm = point;
    for (Eigen::Index i = 0; i < n; ++i) {
      xp[i] = point[i] + h;
      xm[i] = point[i] - h;
      fd[i] = (fn(xp) - fn(xm)) / (2.0 * h);
      xp[i] = point[i];
      xm[i] = point[i];
    }
    const double scale = std::max(1.0, fd.lpNorm<Eigen::Infinity>());
    return (analytic - fd).lpNorm<Eigen::Infinity>() / scale;
  };

  {
    Eigen::VectorXd g(n);
    problem.objective(point, &g);
    const double err = fd_check(
        [&](const Eigen::VectorXd& xv) { return problem.objective(xv, nullptr); },
        g);
    report.max_rel_error = err;
    report.worst_function = -1;
  }
  GradEntries entries;
  for (std::size_t k = 0; k < problem.inequalities.size(); ++k) {
    Eigen::VectorXd g = Eigen::VectorXd::Zero(n);
    problem.inequalities[k](point, &entries);
    for (const auto& [idx, value] : entries) g[idx] += value;
    const double err = fd_check(
        [&](const Eigen::VectorXd& xv) {
          return problem.inequalities[k](xv, nullptr);
        },
        g);
    if (err > report.max_rel_error) {
      report.max_rel_error = err;
      report.worst_function = static_cast<Eigen::Index>(k);
    }
  }
  return report;
}

}  // namespace drmpc
