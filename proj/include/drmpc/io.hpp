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

#include <cstdio>
#include <fstream>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "drmpc/ckme.hpp"
#include "drmpc/sim.hpp"

namespace drmpc {

/// Shortest 17-significant-digit decimal form; round-trips any double.
inline std::string format_g17(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline void write_trajectory_csv(const TrajectoryLog& log, std::ostream& out) {
  const std::size_t n_obs = log.obstacle_count();
  out << "k,t,ego_px,ego_py,ego_theta,ego_v,a,delta";
  for (std::size_t j = 0; j < n_obs; ++j) {
    out << ",obs" << j << "_px,obs" << j << "_py,obs" << j << "_theta,obs" << j
        << "_v";
  }
  out << ",solve_ms,slack,min_dist\n";
  for (const auto& row : log.rows) {
    out << row.k << ',' << format_g17(row.t) << ',' << format_g17(row.ego.px)
        << ',' << format_g17(row.ego.py) << ',' << format_g17(row.ego.theta)
        << ',' << format_g17(row.ego.v) << ',' << format_g17(row.ego_u.a)
        << ',' << format_g17(row.ego_u.delta);
    for (const auto& o : row.obstacles) {
      out << ',' << format_g17(o.px) << ',' << format_g17(o.py) << ','
          << format_g17(o.theta) << ',' << format_g17(o.v);
    }
    out << ',' << format_g17(row.solve_ms) << ',' << format_g17(row.slack)
        << ',' << format_g17(row.min_dist) << '\n';
  }
}

inline void save_trajectory_csv(const TrajectoryLog& log,
                                const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  write_trajectory_csv(log, out);
}

inline TrajectoryLog read_trajectory_csv(std::istream& in, double ts) {
  TrajectoryLog log;
  log.ts = ts;
  std::string line;
  if (!std::getline(in, line)) {
    throw std::runtime_error("trajectory CSV: missing header");
  }
  // 8 leading fields, 4 per obstacle, 3 trailing.
  std::size_t commas = 0;
  for (const char c : line) commas += (c == ',');
  if (commas + 1 < 11 || (commas + 1 - 11) % 4 != 0) {
    throw std::runtime_error("trajectory CSV: unexpected column count");
  }
  const std::size_t n_obs = (commas + 1 - 11) / 4;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::string cell;
    std::vector<double> vals;
    while (std::getline(ss, cell, ',')) vals.push_back(std::stod(cell));
    if (vals.size() != 11 + 4 * n_obs) {
      throw std::runtime_error("trajectory CSV: ragged row");
    }
    LogRow row;
    std::size_t c = 0;
    row.k = static_cast<int>(vals[c++]);
    row.t = vals[c++];
    row.ego = {vals[c], vals[c + 1], vals[c + 2], vals[c + 3]};
    c += 4;
    row.ego_u = {vals[c], vals[c + 1]};
    c += 2;
    for (std::size_t j = 0; j < n_obs; ++j) {
      row.obstacles.push_back({vals[c], vals[c + 1], vals[c + 2], vals[c + 3]});
      c += 4;
    }
    row.solve_ms = vals[c++];
    row.slack = vals[c++];
    row.min_dist = vals[c++];
    log.rows.push_back(std::move(row));
  }
  return log;
}

inline TrajectoryLog load_trajectory_csv(const std::string& path, double ts) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open: " + path);
  return read_trajectory_csv(in, ts);
}

namespace detail {

inline nlohmann::json matrix_to_json(const Eigen::MatrixXd& m) {
  nlohmann::json j;
  j["rows"] = m.rows();
  j["cols"] = m.cols();
  std::vector<double> data;
  data.reserve(static_cast<std::size_t>(m.size()));
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) data.push_back(m(r, c));
  }
  j["data"] = std::move(data);
  return j;
}

inline Eigen::MatrixXd matrix_from_json(const nlohmann::json& j) {
  const auto rows = j.at("rows").get<Eigen::Index>();
  const auto cols = j.at("cols").get<Eigen::Index>();
  const auto data = j.at("data").get<std::vector<double>>();
  if (static_cast<Eigen::Index>(data.size()) != rows * cols) {
    throw std::runtime_error("matrix JSON: size mismatch");
  }
  Eigen::MatrixXd m(rows, cols);
  std::size_t k = 0;
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = data[k++];
  }
  return m;
}

inline nlohmann::json kernel_to_json(const KernelConfig& k) {
  return {{"family", "rbf"}, {"length_scale", k.length_scale}};
}

inline KernelConfig kernel_from_json(const nlohmann::json& j) {
  if (j.at("family").get<std::string>() != "rbf") {
    throw std::runtime_error("kernel JSON: unsupported family");
  }
  return {KernelFamily::kRbf, j.at("length_scale").get<double>()};
}

}  // namespace detail

/// Serialized model: kernels, regularization, training pairs (row-major),
/// and the precomputed weight matrix. The output Gram matrix is recomputed
/// on load from the stored outputs, so a round trip reproduces predictions
/// exactly (JSON numbers are emitted in shortest round-trip form).
inline nlohmann::json model_to_json(const CkmeModel& model) {
  nlohmann::json j;
  j["lookahead"] = model.lookahead;
  j["lambda"] = model.lambda;
  j["input_kernel"] = detail::kernel_to_json(model.input_kernel);
  j["output_kernel"] = detail::kernel_to_json(model.output_kernel);
  j["inputs"] = detail::matrix_to_json(model.inputs);
  j["outputs"] = detail::matrix_to_json(model.outputs);
  j["weight_matrix"] = detail::matrix_to_json(model.weight_matrix);
  return j;
}

inline CkmeModel model_from_json(const nlohmann::json& j) {
  CkmeModel model;
  model.lookahead = j.at("lookahead").get<int>();
  model.lambda = j.at("lambda").get<double>();
  model.input_kernel = detail::kernel_from_json(j.at("input_kernel"));
  model.output_kernel = detail::kernel_from_json(j.at("output_kernel"));
  model.inputs = detail::matrix_from_json(j.at("inputs"));
  model.outputs = detail::matrix_from_json(j.at("outputs"));
  model.weight_matrix = detail::matrix_from_json(j.at("weight_matrix"));
  if (model.weight_matrix.rows() != model.inputs.cols() ||
      model.outputs.cols() != model.inputs.cols()) {
    throw std::runtime_error("model JSON: inconsistent shapes");
  }
  model.output_gram = gram_matrix(model.outputs, model.output_kernel);
  return model;
}

inline void save_model(const CkmeModel& model, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out << model_to_json(model).dump(2) << '\n';
}

inline CkmeModel load_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open: " + path);
  nlohmann::json j;
  in >> j;
  return model_from_json(j);
}

}  // namespace drmpc
