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
#include <memory>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "drmpc/ckme.hpp"
#include "drmpc/predictor.hpp"
#include "drmpc/sim.hpp"

namespace drmpc {

/// Slides a window over every log: for base index k and lookahead i the
/// conditioning context uses the ego positions p(k..k+i-1) and the obstacle
/// position at k; the label is the obstacle position at k+i. Returns one
/// dataset per lookahead 1..N for the given obstacle.
inline std::vector<LookaheadDataset> extract_datasets(
    const std::vector<TrajectoryLog>& logs, int horizon,
    std::size_t obstacle_index = 0) {
  if (horizon < 1) {
    throw std::invalid_argument("extract_datasets: horizon must be >= 1");
  }
  for (const auto& log : logs) {
    if (log.rows.size() < static_cast<std::size_t>(horizon) + 1) {
      throw std::invalid_argument(
          "extract_datasets: log with " + std::to_string(log.rows.size()) +
          " rows is too short for lookahead " + std::to_string(horizon));
    }
    if (obstacle_index >= log.obstacle_count()) {
      throw std::invalid_argument("extract_datasets: obstacle index out of range");
    }
  }

  std::vector<LookaheadDataset> out;
  out.reserve(static_cast<std::size_t>(horizon));
  for (int i = 1; i <= horizon; ++i) {
    std::vector<Eigen::VectorXd> contexts;
    std::vector<Eigen::Vector2d> labels;
    for (const auto& log : logs) {
      const auto steps = log.rows.size();
      for (std::size_t k = 0; k + static_cast<std::size_t>(i) < steps; ++k) {
        std::vector<Eigen::Vector2d> ego;
        ego.reserve(static_cast<std::size_t>(i));
        for (int t = 0; t < i; ++t) {
          ego.push_back(log.rows[k + static_cast<std::size_t>(t)].ego.position());
        }
        const Eigen::Vector2d base =
            log.rows[k].obstacles[obstacle_index].position();
        contexts.push_back(build_context(ego, base, i).flatten());
        labels.push_back(
            log.rows[k + static_cast<std::size_t>(i)].obstacles[obstacle_index]
                .position());
      }
    }
    LookaheadDataset data;
    data.lookahead = i;
    data.contexts.resize(LookaheadDataset::context_dim(i),
                         static_cast<Eigen::Index>(contexts.size()));
    data.outputs.resize(2, static_cast<Eigen::Index>(labels.size()));
    for (std::size_t c = 0; c < contexts.size(); ++c) {
      data.contexts.col(static_cast<Eigen::Index>(c)) = contexts[c];
      data.outputs.col(static_cast<Eigen::Index>(c)) = labels[c];
    }
    out.push_back(std::move(data));
  }
  return out;
}

namespace detail {

inline LookaheadDataset take_subset(const LookaheadDataset& full,
                                    const std::vector<Eigen::Index>& idx) {
  LookaheadDataset sub;
  sub.lookahead = full.lookahead;
  sub.contexts.resize(full.contexts.rows(),
                      static_cast<Eigen::Index>(idx.size()));
  sub.outputs.resize(2, static_cast<Eigen::Index>(idx.size()));
  for (std::size_t j = 0; j < idx.size(); ++j) {
    sub.contexts.col(static_cast<Eigen::Index>(j)) = full.contexts.col(idx[j]);
    sub.outputs.col(static_cast<Eigen::Index>(j)) = full.outputs.col(idx[j]);
  }
  return sub;
}

/// Mean squared prediction error of a model fitted on `subset`, evaluated
/// over the complement of `selected` in `full`.
inline double heldout_mse(const LookaheadDataset& full,
                          const std::vector<Eigen::Index>& selected,
                          const KernelConfig& input_kernel,
                          const KernelConfig& output_kernel, double lambda) {
  const CkmeModel model =
      ckme_fit(take_subset(full, selected), input_kernel, output_kernel, lambda);
  std::vector<bool> in_subset(static_cast<std::size_t>(full.size()), false);
  for (const auto j : selected) in_subset[static_cast<std::size_t>(j)] = true;
  double sum = 0.0;
  Eigen::Index count = 0;
  for (Eigen::Index c = 0; c < full.size(); ++c) {
    if (in_subset[static_cast<std::size_t>(c)]) continue;
    sum += (ckme_predict(model, full.contexts.col(c)) - full.outputs.col(c))
               .squaredNorm();
    ++count;
  }
  return count > 0 ? sum / static_cast<double>(count) : 0.0;
}

}  // namespace detail

struct SubsetSelection {
  std::vector<Eigen::Index> indices;  ///< into the full dataset
  LookaheadDataset dataset;
  double mse{0.0};  ///< held-out MSE of the final selection
};

/// Greedy forward selection: starting empty, repeatedly add the candidate
/// whose inclusion minimizes the held-out MSE over the unselected remainder,
/// until n_select pairs are chosen. Ties break on the lower index, so the
/// result is deterministic. Kernel scales are fixed up front (callers use
/// the median heuristic over the full dataset).
inline SubsetSelection select_training_subset(const LookaheadDataset& full,
                                              Eigen::Index n_select,
                                              const KernelConfig& input_kernel,
                                              const KernelConfig& output_kernel,
                                              double lambda) {
  if (n_select < 1 || n_select > full.size()) {
    throw std::invalid_argument(
        "select_training_subset: n_select out of range");
  }
  SubsetSelection sel;
  if (n_select == full.size()) {
    sel.indices.resize(static_cast<std::size_t>(full.size()));
    std::iota(sel.indices.begin(), sel.indices.end(), 0);
    sel.dataset = full;
    sel.mse = 0.0;
    return sel;
  }
  std::vector<bool> used(static_cast<std::size_t>(full.size()), false);
  while (static_cast<Eigen::Index>(sel.indices.size()) < n_select) {
    double best_mse = std::numeric_limits<double>::infinity();
    Eigen::Index best = -1;
    for (Eigen::Index c = 0; c < full.size(); ++c) {
      if (used[static_cast<std::size_t>(c)]) continue;
      auto trial = sel.indices;
      trial.push_back(c);
      const double mse =
          detail::heldout_mse(full, trial, input_kernel, output_kernel, lambda);
      if (mse < best_mse) {
        best_mse = mse;
        best = c;
      }
    }
    used[static_cast<std::size_t>(best)] = true;
    sel.indices.push_back(best);
    sel.mse = best_mse;
  }
  std::sort(sel.indices.begin(), sel.indices.end());
  sel.dataset = detail::take_subset(full, sel.indices);
  return sel;
}

/// Exhaustive search over all subsets of size n_select; only viable for
/// small datasets (|full| <= 12 or so). Used as the oracle for the greedy
/// path and exposed behind the CLI's --exhaustive flag.
inline SubsetSelection select_training_subset_exhaustive(
    const LookaheadDataset& full, Eigen::Index n_select,
    const KernelConfig& input_kernel, const KernelConfig& output_kernel,
    double lambda) {
  if (n_select < 1 || n_select > full.size()) {
    throw std::invalid_argument(
        "select_training_subset_exhaustive: n_select out of range");
  }
  if (full.size() > 20) {
    throw std::invalid_argument(
        "select_training_subset_exhaustive: dataset too large");
  }
  SubsetSelection best;
  best.mse = std::numeric_limits<double>::infinity();
  std::vector<Eigen::Index> idx(static_cast<std::size_t>(n_select));
  // Lexicographic combinations.
  std::iota(idx.begin(), idx.end(), 0);
  while (true) {
    const double mse =
        detail::heldout_mse(full, idx, input_kernel, output_kernel, lambda);
    if (mse < best.mse) {
      best.mse = mse;
      best.indices = idx;
    }
    // Next combination.
    Eigen::Index pos = n_select - 1;
    while (pos >= 0 && idx[static_cast<std::size_t>(pos)] ==
                           full.size() - n_select + pos) {
      --pos;
    }
    if (pos < 0) break;
    ++idx[static_cast<std::size_t>(pos)];
    for (Eigen::Index p = pos + 1; p < n_select; ++p) {
      idx[static_cast<std::size_t>(p)] = idx[static_cast<std::size_t>(p - 1)] + 1;
    }
  }
  best.dataset = detail::take_subset(full, best.indices);
  return best;
}

/// Deterministically thins a dataset to at most `pool_max` pairs by uniform
/// striding; keeps subset selection tractable on long log collections.
inline LookaheadDataset thin_dataset(const LookaheadDataset& full,
                                     Eigen::Index pool_max) {
  if (pool_max < 1 || full.size() <= pool_max) return full;
  std::vector<Eigen::Index> idx;
  idx.reserve(static_cast<std::size_t>(pool_max));
  for (Eigen::Index j = 0; j < pool_max; ++j) {
    idx.push_back(j * full.size() / pool_max);
  }
  return detail::take_subset(full, idx);
}

struct FitOptions {
  Eigen::Index n_select{8};
  double lambda{1e-4};
  Eigen::Index pool_max{400};
  bool exhaustive{false};
};

/// Full training pipeline for one obstacle: per lookahead, thin the pool,
/// tune both kernel scales by the median heuristic over the pool, select the
/// training subset by held-out MSE, and fit the embedding on the selection.
inline ContextualPredictor fit_contextual_predictor(
    const std::vector<LookaheadDataset>& datasets, const FitOptions& opts) {
  ContextualPredictor pred;
  pred.models.reserve(datasets.size());
  for (const auto& full : datasets) {
    const LookaheadDataset pool = thin_dataset(full, opts.pool_max);
    const KernelConfig input_kernel{KernelFamily::kRbf,
                                    median_heuristic(pool.contexts)};
    const KernelConfig output_kernel{KernelFamily::kRbf,
                                     median_heuristic(pool.outputs)};
    const Eigen::Index n = std::min<Eigen::Index>(opts.n_select, pool.size());
    const SubsetSelection sel =
        opts.exhaustive
            ? select_training_subset_exhaustive(pool, n, input_kernel,
                                                output_kernel, opts.lambda)
            : select_training_subset(pool, n, input_kernel, output_kernel,
                                     opts.lambda);
    pred.models.push_back(
        ckme_fit(sel.dataset, input_kernel, output_kernel, opts.lambda));
  }
  return pred;
}

}  // namespace drmpc
