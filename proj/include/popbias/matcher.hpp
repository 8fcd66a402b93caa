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

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "popbias/recclient.hpp"
#include "popbias/types.hpp"

namespace popbias {

// Canonical form used for catalog alignment:
//   NFKC + case folding, drop one trailing "(dddd)" year, move a trailing
//   ", the" / ", a" / ", an" to the front, punctuation and symbols to
//   spaces, collapse whitespace, drop leading articles.
// "Matrix, The (1999)" and "The Matrix" both become "matrix".
std::string normalize_title(std::string_view title);

// Trailing parenthetical four-digit year of a raw title, if any.
std::optional<int> title_year(std::string_view title);

// Levenshtein distance over Unicode code points.
std::size_t levenshtein(std::u32string_view a, std::u32string_view b);
// 1 - levenshtein / max(|a|, |b|) over code points of two normalized
// strings; 1 for two empty strings.
double title_similarity(std::string_view a, std::string_view b);

std::u32string to_u32(std::string_view utf8);

class CatalogIndex {
 public:
  struct Entry {
    std::string normalized;
    std::u32string code_points;
    ItemId item{};
    std::optional<int> year;
  };

  // Collision: distinct items sharing a normalized title.
  struct Collision {
    std::string normalized;
    std::vector<ItemId> items;  // ascending; items.front() owns the key
  };

  explicit CatalogIndex(const TitleMap& catalog);

  std::span<const Entry> entries() const { return entries_; }
  std::span<const Collision> collisions() const { return collisions_; }
  // Distinct normalized titles.
  std::size_t exact_size() const { return exact_.size(); }

  // Item owning a normalized title (lowest id among collisions).
  std::optional<ItemId> exact(std::string_view normalized) const;
  // Exact lookup that uses year (+/-1, nearest first) to choose among
  // same-title items before falling back to the lowest id.
  std::optional<ItemId> exact(std::string_view normalized,
                              std::optional<int> year) const;

  // Best fuzzy candidate with score >= threshold, ties to the lower id.
  struct Candidate {
    ItemId item{};
    double score = 0.0;
  };
  std::optional<Candidate> best_fuzzy(std::string_view normalized,
                                      double threshold) const;

 private:
  std::vector<Entry> entries_;  // ascending item id
  // normalized title -> indices into entries_, ascending item id
  std::unordered_map<std::string, std::vector<std::size_t>> exact_;
  std::vector<Collision> collisions_;
  std::vector<std::vector<std::size_t>> by_length_;  // code-point length
};

enum class MatchKind { Exact, Fuzzy, Unmatched, Duplicate };
std::string_view to_string(MatchKind kind);

struct Slot {
  MatchKind kind = MatchKind::Unmatched;
  ItemId item{};       // meaningful for Exact / Fuzzy / Duplicate
  double score = 0.0;  // 1 for Exact, similarity for Fuzzy
  std::string raw_title;

  // Duplicates resolve to an item already in the list and count as misses.
  bool matched() const {
    return kind == MatchKind::Exact || kind == MatchKind::Fuzzy;
  }
};

struct MatchedList {
  UserId user{};
  StrategyKind strategy = StrategyKind::Vanilla;
  std::vector<Slot> slots;
};

inline constexpr double kDefaultFuzzyThreshold = 0.9;

// Resolves every title of rec, preserving order and length.
MatchedList match_titles(const RawRecommendation& rec,
                         const CatalogIndex& index,
                         double fuzzy_threshold = kDefaultFuzzyThreshold);

// Matches independent lists in parallel; output order equals input order.
std::vector<MatchedList> match_all(std::span<const RawRecommendation> recs,
                                   const CatalogIndex& index,
                                   double fuzzy_threshold);

// Audit log, one JSON record per slot:
// {"user_id","rank","raw_title","outcome","item_id","score"}.
std::string match_audit_log(std::span<const MatchedList> lists);

namespace reference {
std::vector<MatchedList> match_all_serial(
    std::span<const RawRecommendation> recs, const CatalogIndex& index,
    double fuzzy_threshold);
}  // namespace reference

}  // namespace popbias
