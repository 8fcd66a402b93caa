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
#include "popbias/popularity.hpp"

#include <omp.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <unordered_map>

namespace popbias {

ItemStats::ItemStats(std::vector<ItemId> items, std::vector<std::int64_t> counts)
    : items_(std::move(items)), counts_(std::move(counts)) {
  if (items_.size() != counts_.size()) {
    throw Error("item and count vectors differ in length");
  }
  total_ = std::accumulate(counts_.begin(), counts_.end(), std::int64_t{0});
}

std::size_t ItemStats::index_of(ItemId item) const {
  auto it = std::lower_bound(items_.begin(), items_.end(), item);
  if (it == items_.end() || *it != item) return npos;
  return static_cast<std::size_t>(it - items_.begin());
}

std::int64_t ItemStats::count(ItemId item) const {
  const std::size_t i = index_of(item);
  if (i == npos) {
    throw Error("item " + std::to_string(raw(item)) + " is not in the catalog");
  }
  return counts_[i];
}

PopularityPartition::PopularityPartition(std::vector<ItemId> popular,
                                         std::vector<ItemId> niche,
                                         double pareto_fraction)
    : popular_(std::move(popular)),
      niche_(std::move(niche)),
      popular_set_(popular_.begin(), popular_.end()),
      pareto_fraction_(pareto_fraction) {
  std::sort(popular_.begin(), popular_.end());
  std::sort(niche_.begin(), niche_.end());
}

UserGroup UserSegments::group(UserId user) const {
  auto it = groups.find(user);
  if (it == groups.end()) {
    throw Error("user " + std::to_string(raw(user)) + " has no segment");
  }
  return it->second;
}

std::size_t UserSegments::count(UserGroup g) const {
  return static_cast<std::size_t>(
      std::count_if(groups.begin(), groups.end(),
                    [g](const auto& kv) { return kv.second == g; }));
}

namespace {

std::vector<ItemId> sorted_catalog(std::span<const ItemId> catalog) {
  std::vector<ItemId> items(catalog.begin(), catalog.end());
  std::sort(items.begin(), items.end());
  items.erase(std::unique(items.begin(), items.end()), items.end());
  return items;
}

[[noreturn]] void throw_unknown(ItemId item) {
  throw Error("training item " + std::to_string(raw(item)) +
              " is not in the catalog");
}

}  // namespace

ItemStats compute_item_stats(const InteractionSet& train,
                             std::span<const ItemId> catalog) {
  std::vector<ItemId> items = sorted_catalog(catalog);
  std::unordered_map<ItemId, std::size_t> slot;
  slot.reserve(items.size());
  for (std::size_t i = 0; i < items.size(); ++i) slot.emplace(items[i], i);

  const auto rows = train.interactions();
  const auto n = static_cast<std::ptrdiff_t>(rows.size());
  std::vector<std::int64_t> counts(items.size(), 0);
  std::ptrdiff_t first_unknown = n;

#pragma omp parallel
  {
    std::vector<std::int64_t> local(items.size(), 0);
    std::ptrdiff_t local_unknown = n;
#pragma omp for schedule(static) nowait
    for (std::ptrdiff_t i = 0; i < n; ++i) {
      auto it = slot.find(rows[i].item);
      if (it == slot.end()) {
        local_unknown = std::min(local_unknown, i);
      } else {
        ++local[it->second];
      }
    }
#pragma omp critical
    {
      for (std::size_t i = 0; i < local.size(); ++i) counts[i] += local[i];
      first_unknown = std::min(first_unknown, local_unknown);
    }
  }
  if (first_unknown < n) throw_unknown(rows[first_unknown].item);
  return ItemStats(std::move(items), std::move(counts));
}

namespace reference {

ItemStats compute_item_stats_serial(const InteractionSet& train,
                                    std::span<const ItemId> catalog) {
  std::vector<ItemId> items = sorted_catalog(catalog);
  std::vector<std::int64_t> counts(items.size(), 0);
  for (const Interaction& row : train.interactions()) {
    auto it = std::lower_bound(items.begin(), items.end(), row.item);
    if (it == items.end() || *it != row.item) throw_unknown(row.item);
    ++counts[static_cast<std::size_t>(it - items.begin())];
  }
  return ItemStats(std::move(items), std::move(counts));
}

}  // namespace reference

std::size_t popular_size(std::size_t total_items, double pareto_fraction) {
  const auto m = static_cast<std::size_t>(
      std::floor(pareto_fraction * static_cast<double>(total_items)));
  return std::max<std::size_t>(m, 1);
}

PopularityPartition classify_items(const ItemStats& stats,
                                   double pareto_fraction) {
  if (!(pareto_fraction > 0.0 && pareto_fraction < 1.0)) {
    throw Error("pareto fraction must lie in (0, 1)");
  }
  const std::size_t total = stats.total_items();
  if (total < 2) throw Error("catalog needs at least 2 items to partition");

  std::vector<std::size_t> order(total);
  std::iota(order.begin(), order.end(), std::size_t{0});
  const auto counts = stats.counts();
  // items() is ascending, so index order doubles as the id tie-break.
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) {
                     return counts[a] > counts[b];
                   });

  const std::size_t m = popular_size(total, pareto_fraction);
  std::vector<ItemId> popular;
  std::vector<ItemId> niche;
  popular.reserve(m);
  niche.reserve(total - m);
  for (std::size_t r = 0; r < total; ++r) {
    (r < m ? popular : niche).push_back(stats.items()[order[r]]);
  }
  return PopularityPartition(std::move(popular), std::move(niche),
                             pareto_fraction);
}

UserSegments classify_users(const InteractionSet& train,
                            const PopularityPartition& partition,
                            double threshold) {
  if (!(threshold > 0.0 && threshold < 1.0)) {
    throw Error("user threshold must lie in (0, 1)");
  }
  const auto users = train.users();
  const auto rows = train.interactions();
  std::vector<double> ratios(users.size(), 0.0);
  const auto n = static_cast<std::ptrdiff_t>(users.size());

#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t u = 0; u < n; ++u) {
    const auto tl = train.timeline_at(static_cast<std::size_t>(u));
    std::size_t hits = 0;
    for (std::size_t p : tl) hits += partition.is_popular(rows[p].item) ? 1 : 0;
    ratios[u] = static_cast<double>(hits) / static_cast<double>(tl.size());
  }

  UserSegments segments;
  segments.threshold = threshold;
  for (std::size_t u = 0; u < users.size(); ++u) {
    segments.ratios.emplace_hint(segments.ratios.end(), users[u], ratios[u]);
    segments.groups.emplace_hint(segments.groups.end(), users[u],
                                 ratios[u] >= threshold ? UserGroup::P
                                                        : UserGroup::N);
  }
  return segments;
}

double popular_interaction_share(const ItemStats& stats,
                                 const PopularityPartition& partition) {
  if (stats.total_interactions() == 0) return 0.0;
  std::int64_t hits = 0;
  for (std::size_t i = 0; i < stats.total_items(); ++i) {
    if (partition.is_popular(stats.items()[i])) hits += stats.counts()[i];
  }
  return static_cast<double>(hits) /
         static_cast<double>(stats.total_interactions());
}

std::string export_partition(const ItemStats& stats,
                             const PopularityPartition& partition) {
  std::ostringstream out;
  out << "item_id,class,train_count\n";
  for (std::size_t i = 0; i < stats.total_items(); ++i) {
    const ItemId item = stats.items()[i];
    out << raw(item) << ',' << to_string(partition.classify(item)) << ','
        << stats.counts()[i] << '\n';
  }
  return out.str();
}

std::string export_segments(const UserSegments& segments) {
  std::ostringstream out;
  out.precision(17);
  out << "user_id,ratio,group\n";
  for (const auto& [user, ratio] : segments.ratios) {
    out << raw(user) << ',' << ratio << ','
        << to_string(segments.groups.at(user)) << '\n';
  }
  return out.str();
}

}  // namespace popbias
