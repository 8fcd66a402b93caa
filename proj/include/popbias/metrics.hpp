// Copyright 2026 The popbias Authors
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

#include <array>
#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "popbias/ingest.hpp"
#include "popbias/matcher.hpp"
#include "popbias/popularity.hpp"
#include "popbias/types.hpp"

namespace popbias {

// Mass over the two popularity bins {popular, niche}. Either sums to one or
// is the designated empty distribution (all zero).
struct BinDistribution {
  std::array<double, 2> mass{0.0, 0.0};

  static BinDistribution from_popular_share(double share) {
    return {{share, 1.0 - share}};
  }
  static BinDistribution point(ItemClass bin) {
    return bin == ItemClass::Popular ? BinDistribution{{1.0, 0.0}}
                                     : BinDistribution{{0.0, 1.0}};
  }
  static BinDistribution empty() { return {}; }

  bool is_empty() const { return mass[0] == 0.0 && mass[1] == 0.0; }
  double popular() const { return mass[0]; }
  double niche() const { return mass[1]; }
};

enum class Divergence { KL, Hellinger, ChiSquared };
std::string_view to_string(Divergence kind);
Divergence parse_divergence(std::string_view text);

inline constexpr double kDefaultSmoothing = 0.01;

// (1 - alpha) * d + alpha * uniform.
BinDistribution smooth(const BinDistribution& d, double alpha);

// KL(p||q) = sum p ln(p/q); Hellinger = ||sqrt p - sqrt q||_2 / sqrt 2;
// ChiSquared = sum (p - q)^2 / q. Throws Error when q has a zero bin under
// KL or ChiSquared.
double divergence(const BinDistribution& p, const BinDistribution& q,
                  Divergence kind);

// Bin shares of the matched slots of prefix; empty when none matched.
BinDistribution list_distribution(std::span<const Slot> prefix,
                                  const PopularityPartition& partition);

// Normalized miscalibration of a list prefix against target:
//   F(p~, q~) / max_b F(p~, delta~_b), clamped to [0, 1],
// with ~ denoting alpha-smoothing and delta_b the point mass on bin b. A
// prefix without matched slots is a void list and scores 1.
double miscalibration(const BinDistribution& target,
                      std::span<const Slot> prefix,
                      const PopularityPartition& partition, Divergence kind,
                      double alpha = kDefaultSmoothing);

// Mean miscalibration over prefixes 1..depth; prefixes longer than the list
// reuse the full list. An empty list scores 1.
double rank_miscalibration(const BinDistribution& target,
                           const MatchedList& list,
                           const PopularityPartition& partition,
                           Divergence kind, std::size_t depth,
                           double alpha = kDefaultSmoothing);

// Per-user miscalibration targets.
using TargetMap = std::map<UserId, BinDistribution>;

// Targets from the users' own training consumption shares.
TargetMap user_targets(const UserSegments& segments);
// The same global share for every user in segments.
TargetMap global_targets(const UserSegments& segments, double popular_share);

// Mean of rank_miscalibration over lists. Throws Error for zero lists or a
// list whose user has no target.
double mean_rank_miscalibration(std::span<const MatchedList> lists,
                                const TargetMap& targets,
                                const PopularityPartition& partition,
                                Divergence kind, std::size_t depth,
                                double alpha = kDefaultSmoothing);

// |(union of matched items) ∩ I_n| / |I_n|. Throws Error for an empty niche
// set or a list whose user is not in test_users (when given).
double long_tail_coverage(std::span<const MatchedList> lists,
                          const PopularityPartition& partition,
                          const std::unordered_set<UserId>* test_users =
                              nullptr);

// Ground-truth relevant items per user, from the test split only.
struct RelevanceSet {
  std::unordered_map<UserId, std::unordered_set<ItemId>> items;
  std::optional<double> rating_floor;

  const std::unordered_set<ItemId>* find(UserId user) const;
};

// Every test interaction is relevant unless rating_floor is set, in which
// case only ratings >= floor are.
RelevanceSet build_relevance(const InteractionSet& test,
                             std::optional<double> rating_floor = {});

struct RankedScore {
  double value = 0.0;
  std::size_t users = 0;     // users averaged
  std::size_t excluded = 0;  // users skipped for having no relevant items
};

// Mean reciprocal rank of the first relevant matched slot within top k.
RankedScore mrr_at_k(std::span<const MatchedList> lists,
                     const RelevanceSet& relevance, std::size_t k);

struct PrecisionRecall {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::size_t users = 0;
  std::size_t excluded = 0;
};

// Per-user precision = hits/k, recall = hits/|I(u)|, f1 their harmonic mean
// (0 when both are 0), averaged over users with |I(u)| >= 1.
PrecisionRecall f1_at_k(std::span<const MatchedList> lists,
                        const RelevanceSet& relevance, std::size_t k);

struct GroupMetrics {
  std::size_t users = 0;
  double ltc = 0.0;
  double mrmc = 0.0;
  double mrr_at_k = 0.0;
  double precision_at_k = 0.0;
  double recall_at_k = 0.0;
  double f1_at_k = 0.0;
};

struct MetricsReport {
  double ltc = 0.0;
  double mrmc = 0.0;
  double mrr_at_k = 0.0;
  double precision_at_k = 0.0;
  double recall_at_k = 0.0;
  double f1_at_k = 0.0;
  double out_of_catalog_rate = 0.0;
  double duplicate_rate = 0.0;
  std::size_t users = 0;
  std::size_t excluded_users = 0;  // no relevant items; not in MRR/F1
  std::size_t slots = 0;
  std::map<UserGroup, GroupMetrics> groups;
  Divergence divergence = Divergence::KL;
  std::size_t k = 10;
  std::size_t depth = 10;
};

struct EvaluationOptions {
  Divergence divergence = Divergence::KL;
  double alpha = kDefaultSmoothing;
  std::size_t k = 10;
  std::size_t depth = 10;  // RMC prefix depth N
};

// Full metric suite for one experiment cell, with per-group breakdown.
// Per-user work runs in parallel; means are summed in list order so the
// result is bitwise independent of the thread count.
MetricsReport evaluate(std::span<const MatchedList> lists,
                       const PopularityPartition& partition,
                       const TargetMap& targets, const UserSegments& segments,
                       const RelevanceSet& relevance,
                       const EvaluationOptions& options);

namespace reference {
// Straight-line single-threaded evaluation, kept as the baseline for the
// parallel kernels.
MetricsReport evaluate_serial(std::span<const MatchedList> lists,
                              const PopularityPartition& partition,
                              const TargetMap& targets,
                              const UserSegments& segments,
                              const RelevanceSet& relevance,
                              const EvaluationOptions& options);
}  // namespace reference

}  // namespace popbias
