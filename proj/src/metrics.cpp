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
#include "popbias/metrics.hpp"

#include <omp.h>

#include <algorithm>
#include <cmath>

namespace popbias {

std::string_view to_string(Divergence kind) {
  switch (kind) {
    case Divergence::KL:
      return "kl";
    case Divergence::Hellinger:
      return "hellinger";
    case Divergence::ChiSquared:
      return "chisq";
  }
  return "?";
}

Divergence parse_divergence(std::string_view text) {
  if (text == "kl" || text == "KL") return Divergence::KL;
  if (text == "hellinger" || text == "Hellinger") return Divergence::Hellinger;
  if (text == "chisq" || text == "chi2" || text == "ChiSq")
    return Divergence::ChiSquared;
  throw ConfigError("unknown divergence '" + std::string(text) + "'");
}

BinDistribution smooth(const BinDistribution& d, double alpha) {
  if (d.is_empty()) return d;
  BinDistribution out;
  for (std::size_t b = 0; b < 2; ++b) {
    out.mass[b] = (1.0 - alpha) * d.mass[b] + alpha * 0.5;
  }
  return out;
}

double divergence(const BinDistribution& p, const BinDistribution& q,
                  Divergence kind) {
  double total = 0.0;
  switch (kind) {
    case Divergence::KL:
      for (std::size_t b = 0; b < 2; ++b) {
        if (q.mass[b] <= 0.0) {
          throw Error("KL divergence against a zero bin; smooth q first");
        }
        if (p.mass[b] > 0.0) total += p.mass[b] * std::log(p.mass[b] / q.mass[b]);
      }
      break;
    case Divergence::Hellinger: {
      for (std::size_t b = 0; b < 2; ++b) {
        const double d = std::sqrt(p.mass[b]) - std::sqrt(q.mass[b]);
        total += d * d;
      }
      total = std::sqrt(total) / std::sqrt(2.0);
      break;
    }
    case Divergence::ChiSquared:
      for (std::size_t b = 0; b < 2; ++b) {
        if (q.mass[b] <= 0.0) {
          throw Error("chi-squared divergence against a zero bin; smooth q first");
        }
        const double d = p.mass[b] - q.mass[b];
        total += d * d / q.mass[b];
      }
      break;
  }
  return std::max(total, 0.0);
}

BinDistribution list_distribution(std::span<const Slot> prefix,
                                  const PopularityPartition& partition) {
  std::size_t popular = 0;
  std::size_t matched = 0;
  for (const Slot& slot : prefix) {
    if (!slot.matched()) continue;
    ++matched;
    if (partition.is_popular(slot.item)) ++popular;
  }
  if (matched == 0) return BinDistribution::empty();
  return BinDistribution::from_popular_share(static_cast<double>(popular) /
                                             static_cast<double>(matched));
}

namespace {

void check_alpha(double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) {
    throw Error("smoothing alpha must lie in (0, 1)");
  }
}

// Smoothed target plus the worst-case (void list) divergence for it.
struct CalibrationFrame {
  BinDistribution target;
  double worst = 0.0;
};

CalibrationFrame make_frame(const BinDistribution& target, Divergence kind,
                            double alpha) {
  if (target.is_empty()) throw Error("miscalibration target is empty");
  CalibrationFrame f;
  f.target = smooth(target, alpha);
  f.worst = std::max(
      divergence(f.target, smooth(BinDistribution::point(ItemClass::Popular), alpha), kind),
      divergence(f.target, smooth(BinDistribution::point(ItemClass::Niche), alpha), kind));
  return f;
}

double frame_miscalibration(const CalibrationFrame& f, std::size_t popular,
                            std::size_t matched, Divergence kind, double alpha) {
  if (matched == 0) return 1.0;
  const BinDistribution q = smooth(
      BinDistribution::from_popular_share(static_cast<double>(popular) /
                                          static_cast<double>(matched)),
      alpha);
  if (f.worst <= 0.0) return 0.0;
  return std::clamp(divergence(f.target, q, kind) / f.worst, 0.0, 1.0);
}

// Mean MC over prefixes 1..depth with incremental bin counts.
double rmc_kernel(const CalibrationFrame& f, const MatchedList& list,
                  const PopularityPartition& partition, Divergence kind,
                  std::size_t depth, double alpha) {
  if (list.slots.empty()) return 1.0;
  std::size_t popular = 0;
  std::size_t matched = 0;
  double sum = 0.0;
  double last = 1.0;
  for (std::size_t k = 1; k <= depth; ++k) {
    if (k <= list.slots.size()) {
      const Slot& slot = list.slots[k - 1];
      if (slot.matched()) {
        ++matched;
        if (partition.is_popular(slot.item)) ++popular;
      }
      last = frame_miscalibration(f, popular, matched, kind, alpha);
    }
    sum += last;
  }
  return sum / static_cast<double>(depth);
}

double reciprocal_rank(const MatchedList& list,
                       const std::unordered_set<ItemId>& relevant,
                       std::size_t k) {
  const std::size_t top = std::min(k, list.slots.size());
  for (std::size_t r = 0; r < top; ++r) {
    const Slot& slot = list.slots[r];
    if (slot.matched() && relevant.contains(slot.item)) {
      return 1.0 / static_cast<double>(r + 1);
    }
  }
  return 0.0;
}

struct Prf {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

Prf precision_recall(const MatchedList& list,
                     const std::unordered_set<ItemId>& relevant,
                     std::size_t k) {
  const std::size_t top = std::min(k, list.slots.size());
  std::size_t hits = 0;
  for (std::size_t r = 0; r < top; ++r) {
    const Slot& slot = list.slots[r];
    if (slot.matched() && relevant.contains(slot.item)) ++hits;
  }
  Prf out;
  out.precision = static_cast<double>(hits) / static_cast<double>(k);
  out.recall = static_cast<double>(hits) / static_cast<double>(relevant.size());
  const double denom = out.precision + out.recall;
  out.f1 = denom > 0.0 ? 2.0 * out.precision * out.recall / denom : 0.0;
  return out;
}

void check_k(std::size_t k) {
  if (k < 1) throw Error("cutoff k must be >= 1");
}

const BinDistribution& target_of(const TargetMap& targets, UserId user) {
  auto it = targets.find(user);
  if (it == targets.end()) {
    throw Error("no miscalibration target for user " + std::to_string(raw(user)));
  }
  return it->second;
}

}  // namespace

double miscalibration(const BinDistribution& target,
                      std::span<const Slot> prefix,
                      const PopularityPartition& partition, Divergence kind,
                      double alpha) {
  check_alpha(alpha);
  const CalibrationFrame f = make_frame(target, kind, alpha);
  std::size_t popular = 0;
  std::size_t matched = 0;
  for (const Slot& slot : prefix) {
    if (!slot.matched()) continue;
    ++matched;
    if (partition.is_popular(slot.item)) ++popular;
  }
  return frame_miscalibration(f, popular, matched, kind, alpha);
}

double rank_miscalibration(const BinDistribution& target,
                           const MatchedList& list,
                           const PopularityPartition& partition,
                           Divergence kind, std::size_t depth, double alpha) {
  check_alpha(alpha);
  if (depth < 1) throw Error("miscalibration depth must be >= 1");
  return rmc_kernel(make_frame(target, kind, alpha), list, partition, kind,
                    depth, alpha);
}

TargetMap user_targets(const UserSegments& segments) {
  TargetMap targets;
  for (const auto& [user, ratio] : segments.ratios) {
    targets.emplace_hint(targets.end(), user,
                         BinDistribution::from_popular_share(ratio));
  }
  return targets;
}

TargetMap global_targets(const UserSegments& segments, double popular_share) {
  TargetMap targets;
  for (const auto& [user, ratio] : segments.ratios) {
    targets.emplace_hint(targets.end(), user,
                         BinDistribution::from_popular_share(popular_share));
  }
  return targets;
}

double mean_rank_miscalibration(std::span<const MatchedList> lists,
                                const TargetMap& targets,
                                const PopularityPartition& partition,
                                Divergence kind, std::size_t depth,
                                double alpha) {
  if (lists.empty()) throw Error("MRMC needs at least one user list");
  check_alpha(alpha);
  if (depth < 1) throw Error("miscalibration depth must be >= 1");
  const auto n = static_cast<std::ptrdiff_t>(lists.size());
  std::vector<double> rmc(lists.size());
  std::exception_ptr error;
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    try {
      const auto f = make_frame(target_of(targets, lists[i].user), kind, alpha);
      rmc[i] = rmc_kernel(f, lists[i], partition, kind, depth, alpha);
    } catch (...) {
#pragma omp critical
      if (!error) error = std::current_exception();
    }
  }
  if (error) std::rethrow_exception(error);
  double sum = 0.0;
  for (double v : rmc) sum += v;
  return sum / static_cast<double>(lists.size());
}

double long_tail_coverage(std::span<const MatchedList> lists,
                          const PopularityPartition& partition,
                          const std::unordered_set<UserId>* test_users) {
  if (partition.niche().empty()) {
    throw Error("long-tail coverage is undefined for an empty niche set");
  }
  std::unordered_set<ItemId> covered;
  for (const MatchedList& list : lists) {
    if (test_users && !test_users->contains(list.user)) {
      throw Error("user " + std::to_string(raw(list.user)) +
                  " is not a test user");
    }
    for (const Slot& slot : list.slots) {
      if (slot.matched() && !partition.is_popular(slot.item)) {
        covered.insert(slot.item);
      }
    }
  }
  return static_cast<double>(covered.size()) /
         static_cast<double>(partition.niche().size());
}

const std::unordered_set<ItemId>* RelevanceSet::find(UserId user) const {
  auto it = items.find(user);
  return it == items.end() ? nullptr : &it->second;
}

RelevanceSet build_relevance(const InteractionSet& test,
                             std::optional<double> rating_floor) {
  RelevanceSet rel;
  rel.rating_floor = rating_floor;
  for (const Interaction& row : test.interactions()) {
    auto& bucket = rel.items[row.user];
    if (!rating_floor || row.rating >= *rating_floor) bucket.insert(row.item);
  }
  return rel;
}

RankedScore mrr_at_k(std::span<const MatchedList> lists,
                     const RelevanceSet& relevance, std::size_t k) {
  check_k(k);
  RankedScore out;
  double sum = 0.0;
  for (const MatchedList& list : lists) {
    const auto* rel = relevance.find(list.user);
    if (!rel || rel->empty()) {
      ++out.excluded;
      continue;
    }
    sum += reciprocal_rank(list, *rel, k);
    ++out.users;
  }
  out.value = out.users ? sum / static_cast<double>(out.users) : 0.0;
  return out;
}

PrecisionRecall f1_at_k(std::span<const MatchedList> lists,
                        const RelevanceSet& relevance, std::size_t k) {
  check_k(k);
  PrecisionRecall out;
  for (const MatchedList& list : lists) {
    const auto* rel = relevance.find(list.user);
    if (!rel || rel->empty()) {
      ++out.excluded;
      continue;
    }
    const Prf prf = precision_recall(list, *rel, k);
    out.precision += prf.precision;
    out.recall += prf.recall;
    out.f1 += prf.f1;
    ++out.users;
  }
  if (out.users) {
    const auto n = static_cast<double>(out.users);
    out.precision /= n;
    out.recall /= n;
    out.f1 /= n;
  }
  return out;
}

namespace {

struct UserRow {
  double rmc = 0.0;
  bool scored = false;  // has relevant items
  double rr = 0.0;
  Prf prf;
};

MetricsReport assemble(std::span<const MatchedList> lists,
                       const PopularityPartition& partition,
                       const UserSegments& segments,
                       const EvaluationOptions& options,
                       const std::vector<UserRow>& rows) {
  MetricsReport report;
  report.divergence = options.divergence;
  report.k = options.k;
  report.depth = options.depth;
  report.users = lists.size();

  struct Acc {
    std::size_t users = 0;
    std::size_t scored = 0;
    double rmc = 0.0, rr = 0.0, p = 0.0, r = 0.0, f1 = 0.0;
    std::vector<MatchedList> members;
  };
  Acc all;
  std::map<UserGroup, Acc> by_group;
  std::size_t unmatched = 0;
  std::size_t duplicates = 0;
  for (std::size_t i = 0; i < lists.size(); ++i) {
    const UserGroup g = segments.group(lists[i].user);
    for (Acc* acc : {&all, &by_group[g]}) {
      ++acc->users;
      acc->rmc += rows[i].rmc;
      if (rows[i].scored) {
        ++acc->scored;
        acc->rr += rows[i].rr;
        acc->p += rows[i].prf.precision;
        acc->r += rows[i].prf.recall;
        acc->f1 += rows[i].prf.f1;
      }
    }
    by_group[g].members.push_back(lists[i]);
    for (const Slot& slot : lists[i].slots) {
      ++report.slots;
      if (slot.kind == MatchKind::Unmatched) ++unmatched;
      if (slot.kind == MatchKind::Duplicate) ++duplicates;
    }
  }

  auto mean = [](double s, std::size_t n) {
    return n ? s / static_cast<double>(n) : 0.0;
  };
  report.ltc = long_tail_coverage(lists, partition);
  report.mrmc = mean(all.rmc, all.users);
  report.mrr_at_k = mean(all.rr, all.scored);
  report.precision_at_k = mean(all.p, all.scored);
  report.recall_at_k = mean(all.r, all.scored);
  report.f1_at_k = mean(all.f1, all.scored);
  report.excluded_users = all.users - all.scored;
  report.out_of_catalog_rate = mean(static_cast<double>(unmatched), report.slots);
  report.duplicate_rate = mean(static_cast<double>(duplicates), report.slots);
  for (auto& [g, acc] : by_group) {
    GroupMetrics gm;
    gm.users = acc.users;
    gm.ltc = long_tail_coverage(acc.members, partition);
    gm.mrmc = mean(acc.rmc, acc.users);
    gm.mrr_at_k = mean(acc.rr, acc.scored);
    gm.precision_at_k = mean(acc.p, acc.scored);
    gm.recall_at_k = mean(acc.r, acc.scored);
    gm.f1_at_k = mean(acc.f1, acc.scored);
    report.groups.emplace(g, gm);
  }
  return report;
}

void check_options(std::span<const MatchedList> lists,
                   const EvaluationOptions& options) {
  if (lists.empty()) throw Error("evaluation needs at least one user list");
  check_alpha(options.alpha);
  check_k(options.k);
  if (options.depth < 1) throw Error("miscalibration depth must be >= 1");
}

}  // namespace

MetricsReport evaluate(std::span<const MatchedList> lists,
                       const PopularityPartition& partition,
                       const TargetMap& targets, const UserSegments& segments,
                       const RelevanceSet& relevance,
                       const EvaluationOptions& options) {
  check_options(lists, options);
  std::vector<UserRow> rows(lists.size());
  const auto n = static_cast<std::ptrdiff_t>(lists.size());
  std::exception_ptr error;
#pragma omp parallel for schedule(dynamic, 16)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    try {
      const MatchedList& list = lists[i];
      const auto frame =
          make_frame(target_of(targets, list.user), options.divergence,
                     options.alpha);
      rows[i].rmc = rmc_kernel(frame, list, partition, options.divergence,
                               options.depth, options.alpha);
      if (const auto* rel = relevance.find(list.user); rel && !rel->empty()) {
        rows[i].scored = true;
        rows[i].rr = reciprocal_rank(list, *rel, options.k);
        rows[i].prf = precision_recall(list, *rel, options.k);
      }
    } catch (...) {
#pragma omp critical
      if (!error) error = std::current_exception();
    }
  }
  if (error) std::rethrow_exception(error);
  return assemble(lists, partition, segments, options, rows);
}

namespace reference {

MetricsReport evaluate_serial(std::span<const MatchedList> lists,
                              const PopularityPartition& partition,
                              const TargetMap& targets,
                              const UserSegments& segments,
                              const RelevanceSet& relevance,
                              const EvaluationOptions& options) {
  check_options(lists, options);
  std::vector<UserRow> rows(lists.size());
  for (std::size_t i = 0; i < lists.size(); ++i) {
    const MatchedList& list = lists[i];
    const BinDistribution& target = target_of(targets, list.user);
    // Every prefix rescored from scratch through the public MC entry point.
    double sum = 0.0;
    if (list.slots.empty()) {
      sum = static_cast<double>(options.depth);
    } else {
      for (std::size_t k = 1; k <= options.depth; ++k) {
        const std::size_t len = std::min(k, list.slots.size());
        sum += miscalibration(target,
                              std::span<const Slot>(list.slots).first(len),
                              partition, options.divergence, options.alpha);
      }
    }
    rows[i].rmc = sum / static_cast<double>(options.depth);

    const auto* rel = relevance.find(list.user);
    if (!rel || rel->empty()) continue;
    rows[i].scored = true;
    const std::size_t top = std::min(options.k, list.slots.size());
    std::size_t hits = 0;
    for (std::size_t r = 0; r < top; ++r) {
      const Slot& slot = list.slots[r];
      if (!slot.matched() || !rel->contains(slot.item)) continue;
      if (hits == 0) rows[i].rr = 1.0 / static_cast<double>(r + 1);
      ++hits;
    }
    rows[i].prf.precision =
        static_cast<double>(hits) / static_cast<double>(options.k);
    rows[i].prf.recall =
        static_cast<double>(hits) / static_cast<double>(rel->size());
    const double d = rows[i].prf.precision + rows[i].prf.recall;
    rows[i].prf.f1 = d > 0 ? 2 * rows[i].prf.precision * rows[i].prf.recall / d : 0.0;
  }
  return assemble(lists, partition, segments, options, rows);
}

}  // namespace reference

}  // namespace popbias
