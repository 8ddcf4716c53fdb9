// SPDX-License-Identifier: Apache-2.0
#pragma once

// Oracles shared by the unit tests and the acceptance binary.

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "sllm/numerics.hpp"
#include "sllm/sampling.hpp"

namespace sllm::testing {

inline Matrix random_matrix(std::size_t r, std::size_t c, std::uint64_t seed, std::uint64_t stream = 0,
                            double stddev = 1.0) {
  CounterRng rng(seed, stream);
  return gaussian_matrix(r, c, stddev, rng);
}

inline FeatureVec random_vec(std::size_t n, std::uint64_t seed, std::uint64_t stream = 0, double stddev = 1.0) {
  return random_matrix(1, n, seed, stream, stddev).row_vec(0);
}

/// Element-wise relative error with an absolute floor in the denominator.
inline double rel_err(double analytic, double numeric, double floor = 1e-8) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

/// Central differences of a scalar loss w.r.t. every entry of `x`.
/// `x` is perturbed in place and restored.
inline std::vector<double> numeric_grad(std::vector<double>& x, const std::function<double()>& loss,
                                        double eps = 1e-5) {
  std::vector<double> g(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double keep = x[i];
    x[i] = keep + eps;
    const double up = loss();
    x[i] = keep - eps;
    const double down = loss();
    x[i] = keep;
    g[i] = (up - down) / (2.0 * eps);
  }
  return g;
}

/// Max relative error between an analytic gradient and central differences.
/// Entries where both sides are below `floor` count as agreeing.
inline double max_grad_error(std::vector<double>& x, const std::vector<double>& analytic,
                             const std::function<double()>& loss, double eps = 1e-5, double floor = 1e-8) {
  const auto numeric = numeric_grad(x, loss, eps);
  double worst = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (std::abs(analytic[i]) < floor && std::abs(numeric[i]) < floor) continue;
    worst = std::max(worst, rel_err(analytic[i], numeric[i], floor));
  }
  return worst;
}

/// Naive triple loop, the reference for every product kernel.
inline Matrix naive_matmul(const Matrix& a, const Matrix& b) {
  Matrix c(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < b.cols(); ++j) {
      long double acc = 0;
      for (std::size_t k = 0; k < a.cols(); ++k) acc += static_cast<long double>(a(i, k)) * b(k, j);
      c(i, j) = static_cast<double>(acc);
    }
  return c;
}

/// Independent partition oracle: congruence filter, then for every discarded
/// index a scan over all retained pairs for one with nothing retained between.
inline PartitionPlan brute_force_plan(std::size_t total, std::size_t filter) {
  PartitionPlan p;
  p.total = total;
  p.filter = filter;
  for (std::size_t j = 1; j <= total; ++j) ((j - 1) % filter == 0 ? p.retained : p.discarded).push_back(j);
  for (std::size_t m : p.discarded) {
    bool found = false;
    for (std::size_t a : p.retained) {
      for (std::size_t b : p.retained) {
        if (!(a < m && m < b)) continue;
        bool between = false;
        for (std::size_t c : p.retained) between = between || (a < c && c < b);
        if (between) continue;
        p.triples.push_back({a, m, b, static_cast<double>(m - a) / static_cast<double>(filter)});
        found = true;
      }
    }
    if (!found) p.excluded_tail.push_back(m);
  }
  return p;
}

}  // namespace sllm::testing
