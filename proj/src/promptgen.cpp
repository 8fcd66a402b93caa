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
#include "popbias/promptgen.hpp"

#include <cmath>
#include "json.hpp"
#include <sstream>

namespace popbias {

std::string threshold_tag(double threshold) {
  const double tenths = threshold * 10.0;
  if (std::abs(tenths - std::round(tenths)) < 1e-9 && tenths > 0 &&
      tenths < 10) {
    const int head = static_cast<int>(std::round(tenths));
    return std::to_string(head) + std::to_string(10 - head);
  }
  std::ostringstream out;
  out << 't' << threshold;
  return out.str();
}

std::string strategy_label(const PromptStrategy& strategy) {
  std::string label(to_string(strategy.kind));
  if (strategy.threshold) label += " (" + threshold_tag(*strategy.threshold) + ")";
  return label;
}

std::vector<HistoryEntry> sample_history(const InteractionSet& train,
                                         UserId user, const TitleMap& titles,
                                         const PopularityPartition& partition,
                                         std::size_t max_entries) {
  const auto tl = train.timeline(user);
  const std::size_t start = tl.size() > max_entries ? tl.size() - max_entries : 0;
  std::vector<HistoryEntry> history;
  history.reserve(tl.size() - start);
  for (std::size_t i = start; i < tl.size(); ++i) {
    const ItemId item = train.interactions()[tl[i]].item;
    auto it = titles.find(item);
    history.push_back(
        {it != titles.end() ? it->second : "Item " + std::to_string(raw(item)),
         partition.classify(item)});
  }
  return history;
}

namespace {

std::string vanilla_sentence(std::size_t n) {
  return "I need " + std::to_string(n) + " movies or TV shows.";
}

}  // namespace

std::string build_prompt(const PromptRequest& request,
                         const UserSegments* segments) {
  const std::size_t n = request.list_length;
  switch (request.strategy.kind) {
    case StrategyKind::Vanilla:
      if (segments) throw Error("the Vanilla strategy takes no user segments");
      return vanilla_sentence(n);
    case StrategyKind::Diversity:
      return "Please recommend a diverse list of " + std::to_string(n) +
             " movies.";
    case StrategyKind::PopDebiasing:
      return vanilla_sentence(n) + " " + std::string(kPopDebiasingInstruction);
    case StrategyKind::FairLRM:
      break;
  }

  if (!segments) throw Error("the FairLRM strategy requires user segments");
  auto it = segments->groups.find(request.user);
  if (it == segments->groups.end()) {
    throw Error("user " + std::to_string(raw(request.user)) +
                " is not in the user segments");
  }
  std::string prompt(kSegmentationRules);
  prompt += "\nThis user is a ";
  prompt += it->second == UserGroup::P ? "popular" : "niche";
  prompt += " user.\n";
  if (!request.history_sample.empty()) {
    prompt += "Movies this user watched recently, oldest first "
              "([H] = H-class, [T] = T-class):\n";
    for (const HistoryEntry& entry : request.history_sample) {
      prompt += entry.item_class == ItemClass::Popular ? "[H] " : "[T] ";
      prompt += entry.title;
      prompt += '\n';
    }
  }
  prompt += vanilla_sentence(n);
  return prompt;
}

std::string prompt_record(const PromptRequest& request,
                          std::string_view prompt) {
  nlohmann::json record;
  record["user_id"] = raw(request.user);
  record["strategy"] = strategy_label(request.strategy);
  record["prompt"] = std::string(prompt);
  return record.dump();
}

}  // namespace popbias
