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

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "drmpc/drmpc.hpp"

namespace fs = std::filesystem;
using namespace drmpc;

namespace {

ExperimentConfig resolve_config(const std::string& config_path,
                                int scenario_id) {
  if (!config_path.empty()) return load_experiment_config_file(config_path);
  return default_experiment_config(scenario_id);
}

std::string run_filename(int index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "run_%03d.csv", index);
  return buf;
}

std::string model_filename(std::size_t obstacle, int lookahead) {
  return "obs" + std::to_string(obstacle) + "_lookahead" +
         std::to_string(lookahead) + ".json";
}

std::vector<TrajectoryLog> load_runs(const std::string& data_dir, double& ts,
                                     std::size_t& n_obstacles) {
  const fs::path manifest_path = fs::path(data_dir) / "manifest.json";
  std::ifstream in(manifest_path);
  if (!in) {
    throw std::runtime_error("cannot open manifest: " + manifest_path.string());
  }
  nlohmann::json manifest;
  in >> manifest;
  ts = manifest.at("ts").get<double>();
  n_obstacles = manifest.at("n_obstacles").get<std::size_t>();
  std::vector<TrajectoryLog> logs;
  for (const auto& f : manifest.at("files")) {
    logs.push_back(
        load_trajectory_csv((fs::path(data_dir) / f.get<std::string>()).string(),
                            ts));
  }
  return logs;
}

std::vector<std::shared_ptr<const ContextualPredictor>> load_predictors(
    const std::string& models_dir, int horizon) {
  std::vector<std::shared_ptr<const ContextualPredictor>> out;
  for (std::size_t o = 0;; ++o) {
    const fs::path first = fs::path(models_dir) / model_filename(o, 1);
    if (!fs::exists(first)) break;
    auto pred = std::make_shared<ContextualPredictor>();
    for (int i = 1; i <= horizon; ++i) {
      const fs::path p = fs::path(models_dir) / model_filename(o, i);
      if (!fs::exists(p)) {
        throw std::runtime_error("missing model file: " + p.string());
      }
      pred->models.push_back(load_model(p.string()));
    }
    out.push_back(std::move(pred));
  }
  if (out.empty()) {
    throw std::runtime_error("no model files found under " + models_dir);
  }
  return out;
}

/// Trains predictors in-process from config: data generation, extraction,
/// subset selection, fit. One predictor per obstacle.
std::vector<std::shared_ptr<const ContextualPredictor>> train_predictors(
    const ExperimentConfig& cfg, bool verbose = true) {
  if (verbose) {
    std::cerr << "training " << cfg.training_runs << " runs (seed "
              << cfg.training_seed << ") ..." << std::endl;
  }
  const auto behaviors = make_behaviors(cfg, BehaviorKind::kCooperative);
  const auto logs = generate_training_runs(cfg.scenario, cfg.ego_planner,
                                           behaviors, cfg.training_runs,
                                           cfg.training_seed);
  std::vector<std::shared_ptr<const ContextualPredictor>> preds;
  for (std::size_t o = 0; o < cfg.scenario.obstacles_init.size(); ++o) {
    const auto datasets = extract_datasets(logs, cfg.ego_planner.horizon, o);
    preds.push_back(std::make_shared<ContextualPredictor>(
        fit_contextual_predictor(datasets, cfg.fit)));
  }
  return preds;
}

std::vector<double> resolve_epsilon_schedule(
    const ExperimentConfig& cfg,
    const std::vector<std::shared_ptr<const ContextualPredictor>>& preds) {
  if (!cfg.bootstrap_epsilon || preds.empty()) return {};
  // Per-step radius; with several obstacles take the conservative maximum.
  std::vector<double> schedule(static_cast<std::size_t>(cfg.ego_planner.horizon),
                               0.0);
  for (const auto& pred : preds) {
    const auto eps = bootstrap_epsilons(*pred, cfg.bootstrap_delta,
                                        cfg.bootstrap_resamples, cfg.seed);
    for (std::size_t i = 0; i < schedule.size() && i < eps.size(); ++i) {
      schedule[i] = std::max(schedule[i], eps[i]);
    }
  }
  return schedule;
}

int cmd_gen_data(const std::string& config_path, int scenario_id, int runs,
                 std::uint64_t seed, const std::string& out_dir) {
  ExperimentConfig cfg = resolve_config(config_path, scenario_id);
  if (runs > 0) cfg.training_runs = runs;
  if (seed != 0) cfg.training_seed = seed;
  const auto behaviors = make_behaviors(cfg, BehaviorKind::kCooperative);
  const auto logs = generate_training_runs(cfg.scenario, cfg.ego_planner,
                                           behaviors, cfg.training_runs,
                                           cfg.training_seed);
  fs::create_directories(out_dir);
  nlohmann::json manifest;
  manifest["scenario"] = cfg.scenario_id;
  manifest["runs"] = cfg.training_runs;
  manifest["seed"] = cfg.training_seed;
  manifest["ts"] = cfg.ego_planner.dynamics.ts;
  manifest["n_obstacles"] = cfg.scenario.obstacles_init.size();
  nlohmann::json files = nlohmann::json::array();
  for (std::size_t r = 0; r < logs.size(); ++r) {
    const std::string name = run_filename(static_cast<int>(r));
    save_trajectory_csv(logs[r], (fs::path(out_dir) / name).string());
    files.push_back(name);
  }
  manifest["files"] = std::move(files);
  std::ofstream mout(fs::path(out_dir) / "manifest.json");
  mout << manifest.dump(2) << '\n';
  std::cout << "wrote " << logs.size() << " runs to " << out_dir << std::endl;
  return 0;
}

int cmd_fit(const std::string& data_dir, int horizon, int ns, double lambda,
            Eigen::Index pool_max, bool exhaustive, const std::string& out_dir) {
  double ts = 0.1;
  std::size_t n_obstacles = 0;
  const auto logs = load_runs(data_dir, ts, n_obstacles);
  fs::create_directories(out_dir);
  FitOptions opts;
  opts.n_select = ns;
  opts.lambda = lambda;
  opts.pool_max = pool_max;
  opts.exhaustive = exhaustive;
  for (std::size_t o = 0; o < n_obstacles; ++o) {
    const auto datasets = extract_datasets(logs, horizon, o);
    const ContextualPredictor pred = fit_contextual_predictor(datasets, opts);
    for (int i = 1; i <= horizon; ++i) {
      save_model(pred.model(i),
                 (fs::path(out_dir) / model_filename(o, i)).string());
    }
    std::cout << "obstacle " << o << ": fitted " << horizon
              << " lookahead models (N_s=" << ns << ")" << std::endl;
  }
  return 0;
}

int cmd_select_subset(const std::string& data_dir, int horizon, int ns,
                      double lambda, Eigen::Index pool_max, bool exhaustive,
                      const std::string& out_path) {
  double ts = 0.1;
  std::size_t n_obstacles = 0;
  const auto logs = load_runs(data_dir, ts, n_obstacles);
  nlohmann::json report = nlohmann::json::array();
  for (std::size_t o = 0; o < n_obstacles; ++o) {
    const auto datasets = extract_datasets(logs, horizon, o);
    for (const auto& full : datasets) {
      const LookaheadDataset pool = thin_dataset(full, pool_max);
      const KernelConfig in{KernelFamily::kRbf, median_heuristic(pool.contexts)};
      const KernelConfig out{KernelFamily::kRbf, median_heuristic(pool.outputs)};
      const Eigen::Index n = std::min<Eigen::Index>(ns, pool.size());
      const SubsetSelection sel =
          exhaustive ? select_training_subset_exhaustive(pool, n, in, out, lambda)
                     : select_training_subset(pool, n, in, out, lambda);
      nlohmann::json entry;
      entry["obstacle"] = o;
      entry["lookahead"] = full.lookahead;
      entry["pool_size"] = pool.size();
      entry["selected"] = sel.indices;
      entry["heldout_mse"] = sel.mse;
      report.push_back(std::move(entry));
    }
  }
  std::ofstream outf(out_path);
  if (!outf) throw std::runtime_error("cannot open: " + out_path);
  outf << report.dump(2) << '\n';
  std::cout << "wrote selection report to " << out_path << std::endl;
  return 0;
}

int cmd_simulate(const std::string& config_path, int scenario_id,
                 const std::string& mode_str, const std::string& behavior_str,
                 double epsilon, const std::string& models_dir,
                 std::optional<std::uint64_t> seed, const std::string& out_path) {
  ExperimentConfig cfg = resolve_config(config_path, scenario_id);
  const PlannerMode mode = planner_mode_from_string(mode_str);
  const BehaviorKind behavior = behavior_from_string(behavior_str);

  std::vector<std::shared_ptr<const ContextualPredictor>> preds;
  if (mode != PlannerMode::kNmpc) {
    preds = models_dir.empty()
                ? train_predictors(cfg)
                : load_predictors(models_dir, cfg.ego_planner.horizon);
  }
  const auto behaviors = make_behaviors(cfg, behavior);
  ScenarioConfig scenario = cfg.scenario;
  if (seed) scenario = perturb_scenario(cfg.scenario, behaviors, *seed);

  MpcConfig ego_cfg = cfg.ego_planner;
  ego_cfg.mode = mode;
  ego_cfg.x_ref = cfg.scenario.ego_target;
  ego_cfg.ambiguity = cfg.ambiguity;
  ego_cfg.ambiguity.epsilon = epsilon;
  const auto schedule = resolve_epsilon_schedule(cfg, preds);
  if (mode == PlannerMode::kDrcmpc && !schedule.empty()) {
    ego_cfg.epsilon_by_step = schedule;
  }
  Planner ego(ego_cfg, preds);
  std::vector<ObstacleController> controllers;
  for (const auto& p : behaviors) controllers.emplace_back(p);
  const TrajectoryLog log = run_closed_loop(scenario, ego, controllers);
  if (!out_path.empty()) save_trajectory_csv(log, out_path);
  std::cout << "steps=" << log.rows.size() - 1
            << " min_dist=" << format_g17(log.min_distance())
            << " collision=" << (log.collided(cfg.ego_planner.d_safe) ? 1 : 0)
            << std::endl;
  return 0;
}

int cmd_montecarlo(const std::string& config_path, int scenario_id,
                   const std::string& models_dir,
                   const std::vector<double>& epsilon_override, int workers,
                   std::optional<std::uint64_t> seed,
                   const std::string& out_dir) {
  ExperimentConfig cfg = resolve_config(config_path, scenario_id);
  if (!epsilon_override.empty()) cfg.epsilon_grid = epsilon_override;
  if (workers > 0) cfg.workers = workers;
  if (seed) cfg.seed = *seed;

  bool needs_models = false;
  for (const PlannerMode m : cfg.modes) {
    needs_models |= (m != PlannerMode::kNmpc);
  }
  std::vector<std::shared_ptr<const ContextualPredictor>> preds;
  if (needs_models) {
    preds = models_dir.empty()
                ? train_predictors(cfg)
                : load_predictors(models_dir, cfg.ego_planner.horizon);
  }
  const auto schedule = resolve_epsilon_schedule(cfg, preds);
  const CampaignResult result = run_campaign(cfg, preds, schedule);

  fs::create_directories(out_dir);
  {
    std::ofstream out(fs::path(out_dir) / "results.csv");
    write_campaign_csv(result, out);
  }
  {
    std::ofstream out(fs::path(out_dir) / "summary.json");
    out << campaign_summary(result).dump(2) << '\n';
  }
  std::cout << "wrote " << result.records.size() << " records to " << out_dir
            << std::endl;
  return 0;
}

int cmd_mmd_table(const std::string& config_path, int scenario_id, int runs,
                  std::optional<std::uint64_t> seed,
                  const std::string& out_path) {
  ExperimentConfig cfg = resolve_config(config_path, scenario_id);
  if (runs > 0) cfg.runs = runs;
  if (seed) cfg.seed = *seed;

  // Behavior-distance protocol: identical non-reactive ego stimulus and a
  // tight initial draw, so distances reflect the obstacle policies.
  cfg.scenario.init_x_stddev = std::min(cfg.scenario.init_x_stddev, 0.05);
  cfg.scenario.init_v_stddev = std::min(cfg.scenario.init_v_stddev, 0.01);

  std::vector<std::pair<std::string, std::vector<TrajectoryLog>>> groups;
  for (const BehaviorKind behavior :
       {BehaviorKind::kNeutral, BehaviorKind::kCooperative,
        BehaviorKind::kAdversarial}) {
    const auto behaviors = make_behaviors(cfg, behavior);
    std::vector<TrajectoryLog> logs;
    for (int r = 0; r < cfg.runs; ++r) {
      const ScenarioConfig drawn = perturb_scenario(
          cfg.scenario, behaviors, cfg.seed + static_cast<std::uint64_t>(r));
      MpcConfig ego_cfg = cfg.ego_planner;
      ego_cfg.mode = PlannerMode::kNmpc;
      ego_cfg.x_ref = cfg.scenario.ego_target;
      Planner ego(ego_cfg);
      std::vector<ObstacleController> controllers;
      for (const auto& p : behaviors) controllers.emplace_back(p);
      logs.push_back(run_closed_loop(drawn, ego, controllers,
                                     /*non_reactive_ego=*/true));
    }
    groups.emplace_back(to_string(behavior), std::move(logs));
  }

  const MmdTable table = mmd_behavior_table(groups);
  nlohmann::json j;
  j["labels"] = table.labels;
  j["length_scale"] = table.length_scale;
  j["within_split_half"] = table.within;
  nlohmann::json cross = nlohmann::json::array();
  for (Eigen::Index a = 0; a < table.cross.rows(); ++a) {
    std::vector<double> row;
    for (Eigen::Index b = 0; b < table.cross.cols(); ++b) {
      row.push_back(table.cross(a, b));
    }
    cross.push_back(row);
  }
  j["cross"] = std::move(cross);
  if (!out_path.empty()) {
    std::ofstream out(out_path);
    if (!out) throw std::runtime_error("cannot open: " + out_path);
    out << j.dump(2) << '\n';
  }
  std::cout << j.dump(2) << std::endl;
  return 0;
}

int cmd_radius(const std::string& models_dir, int horizon, double delta,
               int resamples, std::uint64_t seed, const std::string& out_path) {
  const auto preds = load_predictors(models_dir, horizon);
  nlohmann::json report = nlohmann::json::array();
  for (std::size_t o = 0; o < preds.size(); ++o) {
    const auto boot = bootstrap_epsilons(*preds[o], delta, resamples, seed);
    for (int i = 1; i <= horizon; ++i) {
      const auto& model = preds[o]->model(i);
      nlohmann::json entry;
      entry["obstacle"] = o;
      entry["lookahead"] = i;
      entry["n_samples"] = model.sample_count();
      entry["analytic"] = analytic_radius(
          1.0, static_cast<int>(model.sample_count()), delta);
      entry["bootstrap"] = boot[static_cast<std::size_t>(i - 1)];
      entry["delta"] = delta;
      report.push_back(std::move(entry));
    }
  }
  if (!out_path.empty()) {
    std::ofstream out(out_path);
    if (!out) throw std::runtime_error("cannot open: " + out_path);
    out << report.dump(2) << '\n';
  }
  std::cout << report.dump(2) << std::endl;
  return 0;
}

int cmd_check_grad(const std::string& config_path, int scenario_id,
                   const std::string& mode_str, std::uint64_t seed,
                   int points) {
  ExperimentConfig cfg = resolve_config(config_path, scenario_id);
  const PlannerMode mode = planner_mode_from_string(mode_str);
  std::vector<std::shared_ptr<const ContextualPredictor>> preds;
  if (mode != PlannerMode::kNmpc) preds = train_predictors(cfg);

  MpcConfig ego_cfg = cfg.ego_planner;
  ego_cfg.mode = mode;
  ego_cfg.x_ref = cfg.scenario.ego_target;
  ego_cfg.ambiguity = cfg.ambiguity;
  Planner ego(ego_cfg, preds);
  const NlpProblem problem = ego.build_problem(
      cfg.scenario.ego_init, {0.0, 0.0}, cfg.scenario.obstacles_init);

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, 0.01);
  double worst = 0.0;
  for (int p = 0; p < points; ++p) {
    Eigen::VectorXd x = problem.initial_point;
    for (Eigen::Index k = 0; k < x.size(); ++k) {
      x[k] += n(rng);
      if (std::isfinite(problem.lower[k])) x[k] = std::max(x[k], problem.lower[k] + 1e-3);
      if (std::isfinite(problem.upper[k])) x[k] = std::min(x[k], problem.upper[k] - 1e-3);
    }
    worst = std::max(worst, check_gradients(problem, x).max_rel_error);
  }
  std::cout << "mode=" << mode_str << " points=" << points
            << " max_rel_error=" << format_g17(worst) << std::endl;
  return worst <= 1e-5 ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"distributionally robust contextual MPC toolkit"};
  app.require_subcommand(1);

  std::string config_path, out_path, data_dir, models_dir;
  std::string mode_str = "nmpc", behavior_str = "neutral";
  int scenario_id = 1, runs = 0, horizon = 8, ns = 8, workers = 0, points = 20;
  int resamples = 1000;
  double lambda = 1e-4, epsilon = 0.0, delta = 0.05;
  Eigen::Index pool_max = 400;
  bool exhaustive = false;
  std::uint64_t seed_value = 0;
  bool seed_given = false;

  const auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "experiment config JSON");
    sub->add_option("--scenario", scenario_id, "built-in scenario id (1 or 2)");
  };
  const auto add_seed = [&](CLI::App* sub) {
    sub->add_option("--seed", seed_value, "RNG seed")
        ->each([&](const std::string&) { seed_given = true; });
  };

  auto* gen = app.add_subcommand("gen-data", "generate training trajectories");
  add_common(gen);
  add_seed(gen);
  gen->add_option("--runs", runs, "number of training runs");
  gen->add_option("--out", out_path, "output directory")->required();

  auto* fit = app.add_subcommand("fit", "fit lookahead embeddings");
  fit->add_option("--data", data_dir, "gen-data output directory")->required();
  fit->add_option("--horizon", horizon, "prediction horizon");
  fit->add_option("--ns", ns, "training subset size");
  fit->add_option("--lambda", lambda, "regularization");
  fit->add_option("--pool-max", pool_max, "selection pool cap");
  fit->add_flag("--exhaustive", exhaustive, "exhaustive subset search");
  fit->add_option("--out", out_path, "model output directory")->required();

  auto* sel = app.add_subcommand("select-subset", "report subset selection");
  sel->add_option("--data", data_dir, "gen-data output directory")->required();
  sel->add_option("--horizon", horizon, "prediction horizon");
  sel->add_option("--ns", ns, "training subset size");
  sel->add_option("--lambda", lambda, "regularization");
  sel->add_option("--pool-max", pool_max, "selection pool cap");
  sel->add_flag("--exhaustive", exhaustive, "exhaustive subset search");
  sel->add_option("--out", out_path, "report path")->required();

  auto* sim = app.add_subcommand("simulate", "single closed-loop run");
  add_common(sim);
  add_seed(sim);
  sim->add_option("--mode", mode_str, "nmpc|cmpc|drcmpc");
  sim->add_option("--behavior", behavior_str, "neutral|cooperative|adversarial");
  sim->add_option("--epsilon", epsilon, "ambiguity radius (drcmpc)");
  sim->add_option("--models", models_dir, "fitted model directory");
  sim->add_option("--out", out_path, "trajectory CSV path");

  auto* mc = app.add_subcommand("montecarlo", "seeded campaign");
  add_common(mc);
  add_seed(mc);
  std::vector<double> epsilon_list;
  mc->add_option("--epsilon", epsilon_list, "epsilon grid override");
  mc->add_option("--models", models_dir, "fitted model directory");
  mc->add_option("--workers", workers, "worker threads");
  mc->add_option("--out", out_path, "output directory")->required();

  auto* mmd = app.add_subcommand("mmd-table", "behavior distance table");
  add_common(mmd);
  add_seed(mmd);
  mmd->add_option("--runs", runs, "runs per behavior");
  mmd->add_option("--out", out_path, "table JSON path");

  auto* rad = app.add_subcommand("radius", "ambiguity radius estimates");
  rad->add_option("--models", models_dir, "fitted model directory")->required();
  rad->add_option("--horizon", horizon, "prediction horizon");
  rad->add_option("--delta", delta, "confidence level");
  rad->add_option("--resamples", resamples, "bootstrap resamples");
  add_seed(rad);
  rad->add_option("--out", out_path, "report JSON path");

  auto* cg = app.add_subcommand("check-grad", "verify planner gradients");
  add_common(cg);
  add_seed(cg);
  cg->add_option("--mode", mode_str, "nmpc|cmpc|drcmpc");
  cg->add_option("--points", points, "random evaluation points");

  CLI11_PARSE(app, argc, argv);

  try {
    const std::optional<std::uint64_t> seed_opt =
        seed_given ? std::optional<std::uint64_t>(seed_value) : std::nullopt;
    if (gen->parsed()) {
      return cmd_gen_data(config_path, scenario_id, runs,
                          seed_given ? seed_value : 0, out_path);
    }
    if (fit->parsed()) {
      return cmd_fit(data_dir, horizon, ns, lambda, pool_max, exhaustive,
                     out_path);
    }
    if (sel->parsed()) {
      return cmd_select_subset(data_dir, horizon, ns, lambda, pool_max,
                               exhaustive, out_path);
    }
    if (sim->parsed()) {
      return cmd_simulate(config_path, scenario_id, mode_str, behavior_str,
                          epsilon, models_dir, seed_opt, out_path);
    }
    if (mc->parsed()) {
      return cmd_montecarlo(config_path, scenario_id, models_dir, epsilon_list,
                            workers, seed_opt, out_path);
    }
    if (mmd->parsed()) {
      return cmd_mmd_table(config_path, scenario_id, runs, seed_opt, out_path);
    }
    if (rad->parsed()) {
      return cmd_radius(models_dir, horizon, delta, resamples, seed_value,
                        out_path);
    }
    if (cg->parsed()) {
      return cmd_check_grad(config_path, scenario_id, mode_str, seed_value,
                            points);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return 1;
  }
  return 0;
}
