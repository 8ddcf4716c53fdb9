// SPDX-License-Identifier: Apache-2.0
#pragma once

// Sampling filter: frames j with j ≡ 1 (mod r) are retained (1-based), the
// rest are discarded. Each discarded frame strictly between two consecutive
// retained frames l < m < r gets a restoration triple with λ = (m − l) / r.
// Discarded frames after the last retained one have no right neighbour and
// are excluded from restoration entirely.

#include <algorithm>
#include <cstddef>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"
#include "sllm/errors.hpp"
#include "sllm/numerics.hpp"

namespace sllm {

struct RestoreTriple {
  std::size_t left = 0;
  std::size_t middle = 0;
  std::size_t right = 0;
  double lambda = 0.0;
  bool operator==(const RestoreTriple&) const = default;
};

struct PartitionPlan {
  std::size_t total = 0;
  std::size_t filter = 0;
  std::vector<std::size_t> retained;
  std::vector<std::size_t> discarded;
  std::vector<RestoreTriple> triples;
  std::vector<std::size_t> excluded_tail;
  /// In-gap discarded indices left unrestored by a per-gap limit.
  std::vector<std::size_t> skipped;

  bool operator==(const PartitionPlan&) const = default;
};

/// \param restore_per_gap  0 restores every in-gap frame; k > 0 restores at
///        most k evenly spaced frames per gap (k = 1 picks the middle).
inline PartitionPlan make_plan(std::size_t total, std::size_t filter, std::size_t restore_per_gap = 0) {
  if (total < 2) throw ConfigError("make_plan: need T >= 2, got " + std::to_string(total));
  if (filter < 2) throw ConfigError("make_plan: need r >= 2, got " + std::to_string(filter));
  PartitionPlan p;
  p.total = total;
  p.filter = filter;
  for (std::size_t j = 1; j <= total; ++j) {
    if (j % filter == 1) {
      p.retained.push_back(j);
    } else {
      p.discarded.push_back(j);
    }
  }
  const std::size_t gap_len = filter - 1;
  const bool all = restore_per_gap == 0 || restore_per_gap >= gap_len;
  for (std::size_t g = 0; g + 1 < p.retained.size(); ++g) {
    const std::size_t l = p.retained[g];
    const std::size_t r = p.retained[g + 1];
    std::vector<std::size_t> chosen;
    if (all) {
      for (std::size_t m = l + 1; m < r; ++m) chosen.push_back(m);
    } else {
      for (std::size_t i = 0; i < restore_per_gap; ++i) {
        const double pos = static_cast<double>((i + 1) * filter) / static_cast<double>(restore_per_gap + 1);
        auto off = static_cast<std::size_t>(std::lround(pos));
        off = std::clamp<std::size_t>(off, 1, gap_len);
        if (chosen.empty() || chosen.back() < l + off) chosen.push_back(l + off);
      }
      for (std::size_t m = l + 1; m < r; ++m) {
        if (std::find(chosen.begin(), chosen.end(), m) == chosen.end()) p.skipped.push_back(m);
      }
    }
    for (std::size_t m : chosen) {
      p.triples.push_back({l, m, r, static_cast<double>(m - l) / static_cast<double>(filter)});
    }
  }
  const std::size_t last = p.retained.back();
  for (std::size_t j : p.discarded)
    if (j > last) p.excluded_tail.push_back(j);
  return p;
}

/// Frame indices in output order of interleave().
inline std::vector<std::size_t> interleave_indices(const PartitionPlan& plan) {
  std::vector<std::size_t> idx = plan.retained;
  for (const auto& t : plan.triples) idx.push_back(t.middle);
  std::sort(idx.begin(), idx.end());
  return idx;
}

/// Merges retained and restored features by original frame index.
inline std::vector<FeatureVec> interleave(const PartitionPlan& plan, const std::vector<FeatureVec>& retained_feats,
                                          const std::map<std::size_t, FeatureVec>& restored) {
  if (retained_feats.size() != plan.retained.size()) {
    throw ConsistencyError("interleave: " + std::to_string(retained_feats.size()) + " retained features for " +
                           std::to_string(plan.retained.size()) + " retained frames");
  }
  if (restored.size() != plan.triples.size()) {
    throw ConsistencyError("interleave: restored map has " + std::to_string(restored.size()) + " entries, plan has " +
                           std::to_string(plan.triples.size()) + " triples");
  }
  std::vector<FeatureVec> out;
  out.reserve(retained_feats.size() + restored.size());
  std::size_t ri = 0;
  std::size_t ti = 0;
  while (ri < plan.retained.size() || ti < plan.triples.size()) {
    const bool take_retained =
        ti == plan.triples.size() || (ri < plan.retained.size() && plan.retained[ri] < plan.triples[ti].middle);
    if (take_retained) {
      out.push_back(retained_feats[ri++]);
    } else {
      const std::size_t m = plan.triples[ti++].middle;
      auto it = restored.find(m);
      if (it == restored.end()) throw ConsistencyError("interleave: no restored feature for frame " + std::to_string(m));
      out.push_back(it->second);
    }
  }
  return out;
}

inline nlohmann::json to_json(const PartitionPlan& p) {
  nlohmann::json j;
  j["T"] = p.total;
  j["r"] = p.filter;
  j["retained"] = p.retained;
  j["discarded"] = p.discarded;
  j["excluded_tail"] = p.excluded_tail;
  j["skipped"] = p.skipped;
  auto& arr = j["triples"] = nlohmann::json::array();
  for (const auto& t : p.triples) {
    arr.push_back({{"l", t.left}, {"m", t.middle}, {"r", t.right}, {"lambda", t.lambda}});
  }
  return j;
}

}  // namespace sllm
