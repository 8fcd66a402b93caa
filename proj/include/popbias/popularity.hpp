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

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <unordered_set>
#include <vector>

#include "popbias/ingest.hpp"
#include "popbias/types.hpp"

namespace popbias {

// Training interaction count for every catalog item, zero-count items
// included. items() is sorted ascending and parallel to counts().
class ItemStats {
 public:
  ItemStats() = default;
  ItemStats(std::vector<ItemId> items, std::vector<std::int64_t> counts);

  std::span<const ItemId> items() const { return items_; }
  std::span<const std::int64_t> counts() const { return counts_; }
  std::size_t total_items() const { return items_.size(); }
  std::int64_t total_interactions() const { return total_; }

  // Count of a catalog item; throws Error for items outside the catalog.
  std::int64_t count(ItemId item) const;
  // Index of item in items(), or npos.
  std::size_t index_of(ItemId item) const;

  static constexpr std::size_t npos = static_cast<std::size_t>(-1);

 private:
  std::vector<ItemId> items_;
  std::vector<std::int64_t> counts_;
  std::int64_t total_ = 0;
};

class PopularityPartition {
 public:
  PopularityPartition() = default;
  PopularityPartition(std::vector<ItemId> popular, std::vector<ItemId> niche,
                      double pareto_fraction);

  // Both sorted ascending.
  std::span<const ItemId> popular() const { return popular_; }
  std::span<const ItemId> niche() const { return niche_; }
  double pareto_fraction() const { return pareto_fraction_; }

  bool is_popular(ItemId item) const { return popular_set_.contains(item); }
  ItemClass classify(ItemId item) const {
    return is_popular(item) ? ItemClass::Popular : ItemClass::Niche;
  }

 private:
  std::vector<ItemId> popular_;
  std::vector<ItemId> niche_;
  std::unordered_set<ItemId> popular_set_;
  double pareto_fraction_ = 0.2;
};

struct UserSegments {
  std::map<UserId, double> ratios;  // share of training interactions on I_p
  std::map<UserId, UserGroup> groups;
  double threshold = 0.5;

  UserGroup group(UserId user) const;
  std::size_t count(UserGroup g) const;
};

// Histogram of train over catalog, computed with per-thread partial counts.
// Throws Error naming the first train item that is not in catalog.
ItemStats compute_item_stats(const InteractionSet& train,
                             std::span<const ItemId> catalog);

// Number of popular slots: floor(fraction * total_items), at least 1.
std::size_t popular_size(std::size_t total_items, double pareto_fraction);

// Top popular_size() items by descending count; equal counts go to the lower
// item id.
PopularityPartition classify_items(const ItemStats& stats,
                                   double pareto_fraction);

// ratio >= threshold is group P.
UserSegments classify_users(const InteractionSet& train,
                            const PopularityPartition& partition,
                            double threshold);

// Share of all training interactions that hit popular items.
double popular_interaction_share(const ItemStats& stats,
                                 const PopularityPartition& partition);

// Audit exports: "item_id,class" and "user_id,ratio,group".
std::string export_partition(const ItemStats& stats,
                             const PopularityPartition& partition);
std::string export_segments(const UserSegments& segments);

namespace reference {
ItemStats compute_item_stats_serial(const InteractionSet& train,
                                    std::span<const ItemId> catalog);
}  // namespace reference

}  // namespace popbias
