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
#include "doctest.h"
#include "popbias/hash.hpp"
#include "popbias/popularity.hpp"
#include "popbias/promptgen.hpp"
#include "popbias/synth.hpp"
#include "support.hpp"

using namespace popbias;
using testing::ix;

namespace {

UserSegments two_users() {
  UserSegments seg;
  seg.threshold = 0.5;
  seg.ratios = {{UserId{1}, 0.9}, {UserId{2}, 0.1}};
  seg.groups = {{UserId{1}, UserGroup::P}, {UserId{2}, UserGroup::N}};
  return seg;
}

PromptRequest request(StrategyKind kind, std::int64_t user = 1,
                      std::optional<double> threshold = std::nullopt) {
  PromptRequest r;
  r.user = UserId{user};
  r.strategy = {kind, threshold};
  r.list_length = 10;
  return r;
}

bool contains(const std::string& hay, std::string_view needle) {
  return hay.find(needle) != std::string::npos;
}

}  // namespace

TEST_CASE("fixed strategy templates") {
  CHECK(build_prompt(request(StrategyKind::Vanilla), nullptr) ==
        "I need 10 movies or TV shows.");
  CHECK(build_prompt(request(StrategyKind::Diversity, 1, 0.5), nullptr) ==
        "Please recommend a diverse list of 10 movies.");
  const auto debias = build_prompt(request(StrategyKind::PopDebiasing, 1, 0.5), nullptr);
  CHECK(contains(debias, "I need 10 movies or TV shows."));
  CHECK(contains(debias, kPopDebiasingInstruction));
}

TEST_CASE("fairness-aware prompt names the user group") {
  const auto seg = two_users();
  const auto p = build_prompt(request(StrategyKind::FairLRM, 1, 0.5), &seg);
  CHECK(contains(p, kSegmentationRules));
  CHECK(contains(p, "This user is a popular user."));
  const auto n = build_prompt(request(StrategyKind::FairLRM, 2, 0.5), &seg);
  CHECK(contains(n, "This user is a niche user."));
  CHECK_THROWS_AS(build_prompt(request(StrategyKind::FairLRM, 1, 0.5), nullptr), Error);
  CHECK_THROWS_AS(build_prompt(request(StrategyKind::FairLRM, 7, 0.5), &seg), Error);
  CHECK_THROWS_AS(build_prompt(request(StrategyKind::Vanilla), &seg), Error);
}

TEST_CASE("strategy separation") {
  const auto seg = two_users();
  const auto v = build_prompt(request(StrategyKind::Vanilla), nullptr);
  CHECK_FALSE(contains(v, "diverse"));
  CHECK_FALSE(contains(v, "debiasing"));
  auto r = request(StrategyKind::FairLRM, 2, 0.8);
  r.history_sample = {{"Heat (1995)", ItemClass::Popular}, {"Obscure (1971)", ItemClass::Niche}};
  const auto f = build_prompt(r, &seg);
  CHECK(contains(f, kSegmentationRules));
  CHECK(contains(f, "[H] Heat (1995)\n[T] Obscure (1971)\n"));
}

TEST_CASE("identical inputs give identical bytes") {
  const auto seg = two_users();
  auto r = request(StrategyKind::FairLRM, 1, 0.5);
  r.history_sample = {{"A (2000)", ItemClass::Niche}};
  CHECK(sha256_hex(build_prompt(r, &seg)) == sha256_hex(build_prompt(r, &seg)));
  CHECK(sha256_hex("abc") ==
        "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST_CASE("labels") {
  CHECK(threshold_tag(0.5) == "55");
  CHECK(threshold_tag(0.8) == "82");
  CHECK(strategy_label({StrategyKind::FairLRM, 0.5}) == "FairLRM (55)");
  CHECK(strategy_label({StrategyKind::Vanilla, std::nullopt}) == "Vanilla");
  CHECK(parse_strategy("pop.debiasing") == StrategyKind::PopDebiasing);
  CHECK_THROWS_AS(parse_strategy("bogus"), ConfigError);
}

TEST_CASE("history comes from training only") {
  SyntheticConfig cfg;
  cfg.users = 40;
  const auto data = generate_synthetic(cfg);
  const auto split = temporal_split(InteractionSet(data.interactions), 0.7);
  std::vector<ItemId> catalog;
  for (auto& [item, t] : data.titles) catalog.push_back(item);
  const auto part = classify_items(compute_item_stats(split.train, catalog), 0.2);
  const auto seg = classify_users(split.train, part, 0.5);
  for (UserId u : split.test.users()) {
    PromptRequest r;
    r.user = u;
    r.strategy = {StrategyKind::FairLRM, 0.5};
    r.history_sample = sample_history(split.train, u, data.titles, part, 1000);
    CHECK(r.history_sample.size() == split.train.timeline(u).size());
    const std::string prompt = build_prompt(r, &seg);
    for (auto p : split.test.timeline(u)) {
      CHECK_FALSE(contains(prompt, data.titles.at(split.test.interactions()[p].item)));
    }
  }
  // truncation keeps the most recent entries, oldest first
  const UserId u = split.train.users()[0];
  const auto full = sample_history(split.train, u, data.titles, part, 1000);
  const auto last3 = sample_history(split.train, u, data.titles, part, 3);
  REQUIRE(last3.size() == 3);
  CHECK(last3.back().title == full.back().title);
  CHECK(last3.front().title == full[full.size() - 3].title);
}
