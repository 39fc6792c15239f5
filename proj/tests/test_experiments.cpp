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
#include <sstream>

#include <catch2/catch_amalgamated.hpp>

#include "drmpc/dataset.hpp"
#include "drmpc/experiment.hpp"
#include "drmpc/io.hpp"

using namespace drmpc;

namespace {

/// Hand-built log: ego advancing 1 m per step, obstacle 0.5 m per step.
TrajectoryLog synthetic_log(int steps, double obs_x0 = 10.0) {
  TrajectoryLog log;
  log.ts = 0.1;
  for (int k = 0; k <= steps; ++k) {
    LogRow row;
    row.k = k;
    row.t = 0.1 * k;
    row.ego = {1.0 * k, 0.5, 0.0, 10.0};
    row.obstacles.push_back({obs_x0 + 0.5 * k, 0.5, 0.0, 5.0});
    row.min_dist = std::abs(obs_x0 - 0.5 * k);
    log.rows.push_back(row);
  }
  return log;
}

}  // namespace

TEST_CASE("dataset extraction window counts", "[experiments]") {
  // A log of length 3 (rows 0..2) gives |D_1| = 2 and |D_2| = 1.
  const std::vector<TrajectoryLog> logs{synthetic_log(2)};
  const auto datasets = extract_datasets(logs, 2);
  REQUIRE(datasets.size() == 2);
  CHECK(datasets[0].size() == 2);
  CHECK(datasets[1].size() == 1);
  CHECK(datasets[0].contexts.rows() == 4);
  CHECK(datasets[1].contexts.rows() == 6);

  CHECK_THROWS_AS(extract_datasets(logs, 3), std::invalid_argument);
}

TEST_CASE("extracted labels replay the source log", "[experiments]") {
  const std::vector<TrajectoryLog> logs{synthetic_log(10), synthetic_log(7, 14.0)};
  const int horizon = 4;
  const auto datasets = extract_datasets(logs, horizon);
  for (int i = 1; i <= horizon; ++i) {
    const auto& d = datasets[static_cast<std::size_t>(i - 1)];
    Eigen::Index col = 0;
    for (const auto& log : logs) {
      for (std::size_t k = 0; k + static_cast<std::size_t>(i) < log.rows.size();
           ++k, ++col) {
        // Label is the obstacle position exactly i steps after the base.
        CHECK(d.outputs.col(col).isApprox(
            log.rows[k + static_cast<std::size_t>(i)].obstacles[0].position()));
        // Context base blocks match the log too.
        CHECK(d.contexts.col(col).head<2>().isApprox(
            log.rows[k].ego.position()));
        CHECK(d.contexts.col(col).tail<2>().isApprox(
            log.rows[k].obstacles[0].position()));
      }
    }
    CHECK(col == d.size());
  }
}

TEST_CASE("stationary world gives zero displacements and constant labels",
          "[experiments]") {
  TrajectoryLog log;
  log.ts = 0.1;
  for (int k = 0; k <= 5; ++k) {
    LogRow row;
    row.k = k;
    row.t = 0.1 * k;
    row.ego = {1.0, 0.5, 0.0, 0.0};
    row.obstacles.push_back({4.0, 1.5, 0.0, 0.0});
    log.rows.push_back(row);
  }
  const auto datasets = extract_datasets({log}, 3);
  const auto& d3 = datasets[2];
  for (Eigen::Index c = 0; c < d3.size(); ++c) {
    CHECK(d3.contexts.col(c).segment(2, 4).norm() == 0.0);  // displacements
    CHECK(d3.outputs.col(c).isApprox(Eigen::Vector2d(4.0, 1.5)));
  }
}

namespace {

LookaheadDataset toy_dataset(int n, unsigned seed) {
  std::mt19937 rng(seed);
  std::normal_distribution<double> g(0, 1);
  LookaheadDataset d;
  d.lookahead = 1;
  d.contexts.resize(4, n);
  d.outputs.resize(2, n);
  for (int c = 0; c < n; ++c) {
    for (int r = 0; r < 4; ++r) d.contexts(r, c) = g(rng);
    // Smooth map from context to output plus noise.
    d.outputs(0, c) = std::sin(d.contexts(0, c)) + 0.01 * g(rng);
    d.outputs(1, c) = 0.5 * d.contexts(2, c) + 0.01 * g(rng);
  }
  return d;
}

}  // namespace

TEST_CASE("selecting the whole set returns it unchanged", "[experiments]") {
  const auto full = toy_dataset(6, 1);
  const KernelConfig in{KernelFamily::kRbf, median_heuristic(full.contexts)};
  const KernelConfig out{KernelFamily::kRbf, median_heuristic(full.outputs)};
  const auto sel = select_training_subset(full, 6, in, out, 1e-4);
  CHECK(sel.indices.size() == 6);
  CHECK(sel.dataset.contexts.isApprox(full.contexts));
}

TEST_CASE("greedy selection is deterministic and a subset", "[experiments]") {
  const auto full = toy_dataset(15, 3);
  const KernelConfig in{KernelFamily::kRbf, median_heuristic(full.contexts)};
  const KernelConfig out{KernelFamily::kRbf, median_heuristic(full.outputs)};
  const auto a = select_training_subset(full, 5, in, out, 1e-4);
  const auto b = select_training_subset(full, 5, in, out, 1e-4);
  CHECK(a.indices == b.indices);
  for (const auto idx : a.indices) {
    CHECK(idx >= 0);
    CHECK(idx < full.size());
  }
  CHECK(std::is_sorted(a.indices.begin(), a.indices.end()));
}

TEST_CASE("greedy avoids duplicates and tracks the exhaustive oracle",
          "[experiments]") {
  // Eight points where index 1 duplicates index 0 exactly.
  auto full = toy_dataset(8, 7);
  full.contexts.col(1) = full.contexts.col(0);
  full.outputs.col(1) = full.outputs.col(0);
  const KernelConfig in{KernelFamily::kRbf, median_heuristic(full.contexts)};
  const KernelConfig out{KernelFamily::kRbf, median_heuristic(full.outputs)};

  const auto greedy = select_training_subset(full, 3, in, out, 1e-4);
  const bool both_dups =
      std::count(greedy.indices.begin(), greedy.indices.end(), 0) +
          std::count(greedy.indices.begin(), greedy.indices.end(), 1) ==
      2;
  CHECK(!both_dups);

  const auto oracle = select_training_subset_exhaustive(full, 3, in, out, 1e-4);
  CHECK(greedy.mse >= oracle.mse - 1e-12);
  // The oracle never keeps both copies either.
  const bool oracle_both =
      std::count(oracle.indices.begin(), oracle.indices.end(), 0) +
          std::count(oracle.indices.begin(), oracle.indices.end(), 1) ==
      2;
  CHECK(!oracle_both);
}

TEST_CASE("greedy beats the median random subset", "[experiments]") {
  const auto full = toy_dataset(20, 9);
  const KernelConfig in{KernelFamily::kRbf, median_heuristic(full.contexts)};
  const KernelConfig out{KernelFamily::kRbf, median_heuristic(full.outputs)};
  const Eigen::Index ns = 5;
  const auto greedy = select_training_subset(full, ns, in, out, 1e-4);

  std::mt19937 rng(1234);
  std::vector<double> random_mse;
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<Eigen::Index> all(20);
    std::iota(all.begin(), all.end(), 0);
    std::shuffle(all.begin(), all.end(), rng);
    std::vector<Eigen::Index> pick(all.begin(), all.begin() + ns);
    std::sort(pick.begin(), pick.end());
    random_mse.push_back(
        detail::heldout_mse(full, pick, in, out, 1e-4));
  }
  std::sort(random_mse.begin(), random_mse.end());
  CHECK(greedy.mse <= random_mse[10]);
}

TEST_CASE("thinning is deterministic and bounded", "[experiments]") {
  const auto full = toy_dataset(20, 11);
  const auto thin = thin_dataset(full, 7);
  CHECK(thin.size() == 7);
  const auto again = thin_dataset(full, 7);
  CHECK(thin.contexts.isApprox(again.contexts));
  CHECK(thin_dataset(full, 50).size() == 20);
}

TEST_CASE("config defaults and overrides", "[experiments]") {
  const ExperimentConfig def = default_experiment_config(1);
  CHECK(def.ego_planner.horizon == 8);
  CHECK(def.ego_planner.dynamics.ts == 0.1);
  CHECK(def.ego_planner.u_max[0] == 4.0);
  CHECK(def.ego_planner.u_min[1] == -0.5);
  CHECK(def.ego_planner.d_safe == 0.5);
  CHECK(def.ego_planner.r2(1, 1) == 1e-4);
  CHECK(def.ego_planner.x_max[1] == 2.0);
  CHECK(def.scenario.obstacles_init.size() == 1);
  CHECK(default_experiment_config(2).scenario.obstacles_init.size() == 2);

  const nlohmann::json j = {
      {"scenario", {{"id", 1}, {"run_length", 9}}},
      {"planner", {{"d_safe", 0.7}, {"q_terminal", {0, 0, 0.1, 0.3}}}},
      {"ambiguity", {{"epsilon", 0.25}, {"alpha", 0.1}}},
      {"campaign",
       {{"runs", 3}, {"seed", 5}, {"modes", {"nmpc"}}, {"behaviors", {"neutral"}}}},
      {"training", {{"ns", 4}}}};
  const ExperimentConfig cfg = load_experiment_config(j);
  CHECK(cfg.scenario.run_length == 9);
  CHECK(cfg.ego_planner.d_safe == 0.7);
  CHECK(cfg.ego_planner.q_terminal(3, 3) == 0.3);
  CHECK(cfg.ambiguity.epsilon == 0.25);
  CHECK(cfg.ambiguity.alpha == 0.1);
  CHECK(cfg.runs == 3);
  CHECK(cfg.modes.size() == 1);
  CHECK(cfg.fit.n_select == 4);

  CHECK_THROWS_AS(load_experiment_config({{"campaign", {{"runs", 0}}}}),
                  std::invalid_argument);
  CHECK_THROWS_AS(
      load_experiment_config({{"campaign", {{"epsilons", {-0.5}}}}}),
      std::invalid_argument);
}

TEST_CASE("single-cell campaign yields one deterministic record",
          "[experiments]") {
  ExperimentConfig cfg = default_experiment_config(1);
  cfg.scenario.run_length = 8;
  cfg.runs = 1;
  cfg.modes = {PlannerMode::kNmpc};
  cfg.behaviors = {BehaviorKind::kNeutral};
  const CampaignResult a = run_campaign(cfg, {});
  REQUIRE(a.records.size() == 1);
  CHECK(a.records[0].steps >= 1);
  CHECK(a.records[0].min_distance > 0.0);

  const CampaignResult b = run_campaign(cfg, {});
  std::ostringstream sa, sb;
  write_campaign_csv(a, sa);
  write_campaign_csv(b, sb);
  CHECK(sa.str() == sb.str());

  const nlohmann::json summary = campaign_summary(a);
  CHECK(summary["cells"].size() == 1);
  CHECK(summary["cells"][0]["runs"] == 1);
}

TEST_CASE("campaign workers do not change the records", "[experiments]") {
  ExperimentConfig cfg = default_experiment_config(1);
  cfg.scenario.run_length = 6;
  cfg.runs = 3;
  cfg.modes = {PlannerMode::kNmpc};
  cfg.behaviors = {BehaviorKind::kNeutral, BehaviorKind::kAdversarial};
  cfg.workers = 1;
  const CampaignResult serial = run_campaign(cfg, {});
  cfg.workers = 4;
  const CampaignResult parallel = run_campaign(cfg, {});
  std::ostringstream ss, sp;
  write_campaign_csv(serial, ss);
  write_campaign_csv(parallel, sp);
  CHECK(ss.str() == sp.str());
}

TEST_CASE("mmd behavior table structure", "[experiments]") {
  std::vector<TrajectoryLog> straight, dodging;
  for (int r = 0; r < 4; ++r) {
    straight.push_back(synthetic_log(20, 10.0 + 0.1 * r));
    TrajectoryLog d = synthetic_log(20, 10.0 + 0.1 * r);
    for (auto& row : d.rows) row.obstacles[0].py += 0.05 * row.k;  // lane change
    dodging.push_back(d);
  }

  const MmdTable table = mmd_behavior_table(
      {{"straight", straight}, {"dodge", dodging}});
  REQUIRE(table.labels.size() == 2);
  CHECK(table.cross(0, 0) == 0.0);
  CHECK(table.cross(0, 1) == table.cross(1, 0));
  CHECK(table.cross(0, 1) > 0.0);

  // Identical groups give exactly zero cross distance.
  const MmdTable same = mmd_behavior_table(
      {{"a", straight}, {"b", straight}});
  CHECK(same.cross(0, 1) == 0.0);

  std::vector<TrajectoryLog> one{synthetic_log(20)};
  CHECK_THROWS_AS(mmd_behavior_table({{"tiny", one}}), std::invalid_argument);
}

TEST_CASE("bootstrap epsilons per lookahead", "[experiments]") {
  std::mt19937 rng(5);
  std::normal_distribution<double> g(0, 1);
  ContextualPredictor pred;
  for (int i = 1; i <= 3; ++i) {
    LookaheadDataset d;
    d.lookahead = i;
    d.contexts.resize(LookaheadDataset::context_dim(i), 8);
    d.outputs.resize(2, 8);
    for (int c = 0; c < 8; ++c) {
      for (Eigen::Index r = 0; r < d.contexts.rows(); ++r) d.contexts(r, c) = g(rng);
      d.outputs(0, c) = g(rng);
      d.outputs(1, c) = g(rng);
    }
    pred.models.push_back(ckme_fit(d, {KernelFamily::kRbf, 1.0},
                                   {KernelFamily::kRbf, 1.0}, 1e-4));
  }
  const auto eps = bootstrap_epsilons(pred, 0.05, 200, 3);
  REQUIRE(eps.size() == 3);
  for (const double e : eps) {
    CHECK(e > 0.0);
    CHECK(e <= analytic_radius(1.0, 8, 0.05));
  }
}
