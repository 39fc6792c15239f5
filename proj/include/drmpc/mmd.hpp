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
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "drmpc/kernel.hpp"

namespace drmpc {

enum class RadiusMethod { kAnalyticBound, kBootstrap };

/// Ambiguity-radius estimate together with how it was obtained.
struct RadiusEstimate {
  double epsilon{0.0};
  RadiusMethod method{RadiusMethod::kAnalyticBound};
  double confidence_delta{0.05};
};

/// Biased (V-statistic) MMD estimate between two sample sets (one sample per
/// column): sqrt of mean k(x,x') + mean k(y,y') - 2 mean k(x,y), with the
/// squared value clamped at zero before the root.
inline double empirical_mmd(const Eigen::MatrixXd& samples_p,
                            const Eigen::MatrixXd& samples_q,
                            const KernelConfig& cfg) {
  const Eigen::Index m = samples_p.cols();
  const Eigen::Index n = samples_q.cols();
  if (m < 1 || n < 1) {
    throw std::invalid_argument("empirical_mmd: empty sample set");
  }
  // Identical sample sets have zero distance exactly; short-circuiting also
  // avoids sqrt(roundoff) from the differing accumulation orders below.
  if (m == n && samples_p.rows() == samples_q.rows() &&
      samples_p == samples_q) {
    return 0.0;
  }
  double pp = 0.0, qq = 0.0, pq = 0.0;
  for (Eigen::Index i = 0; i < m; ++i) {
    pp += 1.0;  // diagonal k(x,x) = 1 for RBF
    for (Eigen::Index j = i + 1; j < m; ++j) {
      pp += 2.0 * rbf_kernel(samples_p.col(i), samples_p.col(j), cfg);
    }
  }
  for (Eigen::Index i = 0; i < n; ++i) {
    qq += 1.0;
    for (Eigen::Index j = i + 1; j < n; ++j) {
      qq += 2.0 * rbf_kernel(samples_q.col(i), samples_q.col(j), cfg);
    }
  }
  for (Eigen::Index i = 0; i < m; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      pq += rbf_kernel(samples_p.col(i), samples_q.col(j), cfg);
    }
  }
  const double mmd2 = pp / static_cast<double>(m * m) +
                      qq / static_cast<double>(n * n) -
                      2.0 * pq / static_cast<double>(m * n);
  return std::sqrt(std::max(0.0, mmd2));
}

/// Finite-sample deviation bound on MMD(true distribution, empirical
/// distribution of N samples), valid with probability at least 1 - delta
/// for any kernel with sup k(x,x) <= C:
///   sqrt(C/N) + sqrt(2 C log(1/delta) / N).
inline double analytic_radius(double C, int N, double delta) {
  if (!(C > 0.0)) {
    throw std::invalid_argument("analytic_radius: C must be positive");
  }
  if (N < 1) {
    throw std::invalid_argument("analytic_radius: N must be >= 1");
  }
  if (!(delta > 0.0 && delta <= 1.0)) {
    throw std::invalid_argument("analytic_radius: delta must be in (0, 1]");
  }
  const double n = static_cast<double>(N);
  return std::sqrt(C / n) + std::sqrt(2.0 * C * std::log(1.0 / delta) / n);
}

namespace detail {
/// Empirical quantile with linear interpolation between order statistics.
inline double interpolated_quantile(std::vector<double> values, double q) {
  std::sort(values.begin(), values.end());
  const double pos = q * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, values.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return values[lo] + frac * (values[hi] - values[lo]);
}
}  // namespace detail

/// Bootstrap ambiguity radius: the (1 - delta) quantile of the MMD between
/// the sample (one point per column) and resamples drawn with replacement.
inline double bootstrap_radius(const Eigen::MatrixXd& samples,
                               const KernelConfig& cfg, int resamples,
                               double delta, std::uint64_t seed = 0) {
  const Eigen::Index n = samples.cols();
  if (n < 2) {
    throw std::invalid_argument("bootstrap_radius: need at least two samples");
  }
  if (resamples < 100) {
    throw std::invalid_argument("bootstrap_radius: need at least 100 resamples");
  }
  if (!(delta > 0.0 && delta < 1.0)) {
    throw std::invalid_argument("bootstrap_radius: delta must be in (0, 1)");
  }
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<Eigen::Index> pick(0, n - 1);
  std::vector<double> mmds(static_cast<std::size_t>(resamples));
  Eigen::MatrixXd resample(samples.rows(), n);
  for (int b = 0; b < resamples; ++b) {
    for (Eigen::Index j = 0; j < n; ++j) {
      resample.col(j) = samples.col(pick(rng));
    }
    mmds[static_cast<std::size_t>(b)] = empirical_mmd(samples, resample, cfg);
  }
  return detail::interpolated_quantile(std::move(mmds), 1.0 - delta);
}

}  // namespace drmpc
