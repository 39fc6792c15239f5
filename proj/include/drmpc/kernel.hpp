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
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace drmpc {

enum class KernelFamily { kRbf };

/// Isotropic kernel parameters. Only the RBF family is supported:
/// k(x, y) = exp(-|x - y|^2 / (2 * length_scale^2)).
struct KernelConfig {
  KernelFamily family{KernelFamily::kRbf};
  double length_scale{1.0};
};

inline double rbf_kernel(const Eigen::Ref<const Eigen::VectorXd>& x,
                         const Eigen::Ref<const Eigen::VectorXd>& y,
                         const KernelConfig& cfg) {
  if (x.size() != y.size()) {
    throw std::invalid_argument("rbf_kernel: dimension mismatch " +
                                std::to_string(x.size()) + " vs " +
                                std::to_string(y.size()));
  }
  const double d2 = (x - y).squaredNorm();
  return std::exp(-d2 / (2.0 * cfg.length_scale * cfg.length_scale));
}

/// Gram matrix G[i][j] = k(p_i, p_j) over the columns of `points`
/// (one point per column).
inline Eigen::MatrixXd gram_matrix(const Eigen::MatrixXd& points,
                                   const KernelConfig& cfg) {
  const Eigen::Index n = points.cols();
  if (n < 1) {
    throw std::invalid_argument("gram_matrix: need at least one point");
  }
  Eigen::MatrixXd g(n, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    g(j, j) = 1.0;
    for (Eigen::Index i = j + 1; i < n; ++i) {
      const double k = rbf_kernel(points.col(i), points.col(j), cfg);
      g(i, j) = k;
      g(j, i) = k;
    }
  }
  return g;
}

/// Median of the pairwise Euclidean distances over all i < j.
/// Even pair counts are resolved by midpoint interpolation.
/// Throws if fewer than two points are given or the median is zero.
inline double median_heuristic(const Eigen::MatrixXd& points) {
  const Eigen::Index n = points.cols();
  if (n < 2) {
    throw std::invalid_argument("median_heuristic: need at least two points");
  }
  std::vector<double> dists;
  dists.reserve(static_cast<std::size_t>(n * (n - 1) / 2));
  for (Eigen::Index j = 0; j < n; ++j) {
    for (Eigen::Index i = j + 1; i < n; ++i) {
      dists.push_back((points.col(i) - points.col(j)).norm());
    }
  }
  std::sort(dists.begin(), dists.end());
  const std::size_t m = dists.size();
  const double med = (m % 2 == 1)
                         ? dists[m / 2]
                         : 0.5 * (dists[m / 2 - 1] + dists[m / 2]);
  if (med <= 0.0) {
    throw std::invalid_argument(
        "median_heuristic: zero median distance (all points identical?)");
  }
  return med;
}

}  // namespace drmpc
