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
#include <string>
#include <string_view>
#include <vector>

#include "popbias/ingest.hpp"
#include "popbias/popularity.hpp"
#include "popbias/types.hpp"

namespace popbias {

struct PromptStrategy {
  StrategyKind kind = StrategyKind::Vanilla;
  // User threshold the cell is keyed by (0.5 -> "(55)", 0.8 -> "(82)").
  // Absent for Vanilla.
  std::optional<double> threshold;

  bool operator==(const PromptStrategy&) const = default;
};

// Row label used in result tables, e.g. "Vanilla", "FairLRM (55)".
std::string strategy_label(const PromptStrategy& strategy);
// "55" for 0.5, "82" for 0.8; "t0.65"-style for anything else.
std::string threshold_tag(double threshold);

struct HistoryEntry {
  std::string title;
  ItemClass item_class = ItemClass::Niche;
};

struct PromptRequest {
  UserId user{};
  PromptStrategy strategy;
  std::vector<HistoryEntry> history_sample;  // oldest first
  std::size_t list_length = 10;
};

// Fixed sentences of the prompt strategies.
inline constexpr std::string_view kSegmentationRules =
    "The user segmentation rules are as follows: users who watch more than "
    "50% of H-class movies are classified as popular users, those who watch "
    "more than 50% of T-class movies are classified as niche users, and the "
    "remaining are ordinary users. For popular users, more H-class movies "
    "should be recommended, while for niche users, more T-class movies "
    "should be recommended.";
inline constexpr std::string_view kPopDebiasingInstruction =
    "Please apply popularity debiasing: avoid recommending only popular "
    "movies; include long-tail movies when appropriate.";
inline constexpr std::size_t kDefaultHistorySize = 20;

// The user's most recent training interactions (up to max_entries), returned
// oldest first and tagged with their popularity class. Items without a
// catalog title are rendered as "Item <id>".
std::vector<HistoryEntry> sample_history(const InteractionSet& train,
                                         UserId user, const TitleMap& titles,
                                         const PopularityPartition& partition,
                                         std::size_t max_entries =
                                             kDefaultHistorySize);

// Renders the prompt text for one request.
//
// Vanilla:       "I need N movies or TV shows."
// Diversity:     "Please recommend a diverse list of N movies."
// PopDebiasing:  the Vanilla sentence followed by the debiasing instruction.
// FairLRM:       segmentation rules, the user's group, the tagged history
//                ([H] popular / [T] niche) and the Vanilla sentence.
//
// Throws Error when a FairLRM request has no segments or the user is not in
// them, or when segments are passed for Vanilla.
std::string build_prompt(const PromptRequest& request,
                         const UserSegments* segments);

// One line-delimited JSON record {"user_id","strategy","prompt"}.
std::string prompt_record(const PromptRequest& request,
                          std::string_view prompt);

}  // namespace popbias
