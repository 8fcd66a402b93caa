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
#include <cmath>

#include "doctest.h"
#include "oracle.hpp"
#include "popbias/metrics.hpp"
#include "popbias/random.hpp"
#include "support.hpp"

using namespace popbias;
using testing::hit;
using testing::list_of;
using testing::miss;

namespace {

// items 1..2 popular, 3..6 niche
PopularityPartition small_partition() {
  return PopularityPartition({ItemId{1}, ItemId{2}},
                             {ItemId{3}, ItemId{4}, ItemId{5}, ItemId{6}}, 0.2);
}

BinDistribution share(double pop) { return BinDistribution::from_popular_share(pop); }

oracle::Kind to_oracle(Divergence d) {
  switch (d) {
    case Divergence::KL:
      return oracle::Kind::KL;
    case Divergence::Hellinger:
      return oracle::Kind::Hellinger;
    case Divergence::ChiSquared:
      return oracle::Kind::ChiSq;
  }
  return oracle::Kind::KL;
}

RelevanceSet relevance_of(std::map<std::int64_t, std::vector<std::int64_t>> sets) {
  RelevanceSet r;
  for (auto& [u, items] : sets) {
    auto& s = r.items[UserId{u}];
    for (auto i : items) s.insert(ItemId{i});
  }
  return r;
}

}  // namespace

TEST_CASE("divergence values") {
  const auto p = share(0.9), q = share(0.5);
  CHECK(divergence(p, q, Divergence::KL) ==
        doctest::Approx(0.9 * std::log(1.8) + 0.1 * std::log(0.2)).epsilon(1e-12));
  CHECK(divergence(p, q, Divergence::KL) == doctest::Approx(0.368).epsilon(1e-3));
  for (auto kind : {Divergence::KL, Divergence::Hellinger, Divergence::ChiSquared}) {
    CHECK(divergence(p, p, kind) == 0.0);
  }
  CHECK(divergence(share(1.0), share(0.0), Divergence::Hellinger) == doctest::Approx(1.0));
  CHECK_THROWS_AS(divergence(p, share(1.0), Divergence::KL), Error);
  CHECK_THROWS_AS(divergence(p, share(0.0), Divergence::ChiSquared), Error);
  CHECK_NOTHROW(divergence(p, share(1.0), Divergence::Hellinger));
  CHECK(parse_divergence("hellinger") == Divergence::Hellinger);
  CHECK_THROWS(parse_divergence("js"));
}

TEST_CASE("hellinger is symmetric") {
  Rng rng(1);
  for (int i = 0; i < 200; ++i) {
    const auto p = share(rng.uniform()), q = share(rng.uniform());
    CHECK(divergence(p, q, Divergence::Hellinger) ==
          doctest::Approx(divergence(q, p, Divergence::Hellinger)).epsilon(1e-14));
  }
}

TEST_CASE("miscalibration examples") {
  const auto part = small_partition();
  const std::vector<Slot> calibrated{hit(1), hit(3)};
  CHECK(miscalibration(share(0.5), calibrated, part, Divergence::KL) ==
        doctest::Approx(0.0).epsilon(1e-15));
  CHECK(miscalibration(share(0.5), {}, part, Divergence::KL) == 1.0);
  const std::vector<Slot> unmatched{miss(), miss()};
  CHECK(miscalibration(share(0.3), unmatched, part, Divergence::Hellinger) == 1.0);

  // p = (0.5, 0.5), all popular: numerator and denominator coincide
  const std::vector<Slot> all_pop{hit(1), hit(2)};
  const double num = 0.5 * std::log(0.5 / 0.995) + 0.5 * std::log(0.5 / 0.005);
  const auto ps = smooth(share(0.5), 0.01);
  CHECK(ps.mass[0] == doctest::Approx(0.5));
  CHECK(divergence(ps, smooth(share(1.0), 0.01), Divergence::KL) == doctest::Approx(num));
  CHECK(miscalibration(share(0.5), all_pop, part, Divergence::KL, 0.01) ==
        doctest::Approx(1.0).epsilon(1e-15));

  // the unmatched slot is not part of the mass
  const std::vector<Slot> mixed{hit(1), miss(), hit(3)};
  CHECK(miscalibration(share(0.5), mixed, part, Divergence::KL) ==
        doctest::Approx(0.0).epsilon(1e-15));
}

TEST_CASE("rank miscalibration averages prefixes") {
  const auto part = small_partition();
  CHECK(rank_miscalibration(share(1.0), list_of(1, {hit(1), hit(2)}), part,
                            Divergence::KL, 5) == doctest::Approx(0.0).epsilon(1e-15));
  CHECK(rank_miscalibration(share(0.7), list_of(1, {}), part, Divergence::KL, 5) == 1.0);
  // depth 2: MC(prefix 1) and MC(prefix 2)
  const auto l = list_of(1, {hit(1), hit(3)});
  const double mc1 = miscalibration(share(0.5), std::span(l.slots).first(1), part,
                                    Divergence::Hellinger);
  const double mc2 = miscalibration(share(0.5), l.slots, part, Divergence::Hellinger);
  CHECK(rank_miscalibration(share(0.5), l, part, Divergence::Hellinger, 2) ==
        doctest::Approx((mc1 + mc2) / 2));
  // prefixes past the end reuse the whole list
  CHECK(rank_miscalibration(share(0.5), l, part, Divergence::Hellinger, 4) ==
        doctest::Approx((mc1 + 3 * mc2) / 4));
}

TEST_CASE("mean rank miscalibration") {
  const auto part = small_partition();
  TargetMap targets{{UserId{1}, share(1.0)}, {UserId{2}, share(1.0)}};
  const std::vector<MatchedList> one{list_of(1, {hit(1)})};
  CHECK(mean_rank_miscalibration(one, targets, part, Divergence::KL, 3) ==
        doctest::Approx(0.0).epsilon(1e-15));
  const std::vector<MatchedList> two{list_of(1, {hit(1)}), list_of(2, {miss()})};
  CHECK(mean_rank_miscalibration(two, targets, part, Divergence::KL, 3) ==
        doctest::Approx(0.5));
  CHECK_THROWS_AS(mean_rank_miscalibration({}, targets, part, Divergence::KL, 3), Error);
  const std::vector<MatchedList> stranger{list_of(9, {hit(1)})};
  CHECK_THROWS_AS(mean_rank_miscalibration(stranger, targets, part, Divergence::KL, 3), Error);
}

TEST_CASE("long-tail coverage") {
  const auto part = small_partition();
  const std::vector<MatchedList> all{list_of(1, {hit(3), hit(4)}), list_of(2, {hit(5), hit(6)})};
  CHECK(long_tail_coverage(all, part) == 1.0);
  const std::vector<MatchedList> head{list_of(1, {hit(1), hit(2)})};
  CHECK(long_tail_coverage(head, part) == 0.0);
  const std::vector<MatchedList> three{list_of(1, {hit(3)}), list_of(2, {hit(3), hit(4)}),
                                       list_of(3, {})};
  CHECK(long_tail_coverage(three, part) == 0.5);
  std::unordered_set<UserId> test_users{UserId{1}};
  CHECK_THROWS_AS(long_tail_coverage(three, part, &test_users), Error);
  const PopularityPartition no_tail({ItemId{1}}, {}, 0.5);
  CHECK_THROWS_AS(long_tail_coverage(head, no_tail), Error);
}

TEST_CASE("ranking metrics") {
  SUBCASE("reciprocal rank") {
    const auto rel = relevance_of({{1, {7}}, {2, {9}}});
    const std::vector<MatchedList> lists{list_of(1, {hit(3), hit(7)}),
                                         list_of(2, {hit(1), miss(), hit(2), hit(4), hit(9)})};
    const auto mrr = mrr_at_k(lists, rel, 10);
    CHECK(mrr.value == doctest::Approx(0.35));
    CHECK(mrr.users == 2);
    CHECK(mrr_at_k(lists, rel, 4).value == doctest::Approx(0.25));
    CHECK(mrr_at_k(lists, relevance_of({{1, {100}}, {2, {100}}}), 10).value == 0.0);
  }
  SUBCASE("precision recall f1") {
    const auto rel = relevance_of({{1, {1, 2, 3, 4, 5, 6, 7, 8}}});
    const std::vector<MatchedList> lists{list_of(
        1, {hit(1), hit(2), hit(3), hit(4), hit(20), hit(21), miss(), miss(), hit(22), hit(23)})};
    const auto pr = f1_at_k(lists, rel, 10);
    CHECK(pr.precision == doctest::Approx(0.4));
    CHECK(pr.recall == doctest::Approx(0.5));
    CHECK(pr.f1 == doctest::Approx(2 * 0.4 * 0.5 / 0.9));
  }
  SUBCASE("perfect and empty overlaps") {
    const auto rel = relevance_of({{1, {1, 2}}, {2, {5}}});
    const std::vector<MatchedList> lists{list_of(1, {hit(1), hit(2)}), list_of(2, {hit(6)})};
    const auto pr = f1_at_k(lists, rel, 2);
    CHECK(pr.users == 2);
    CHECK(pr.precision == doctest::Approx(0.5));
    CHECK(pr.f1 == doctest::Approx(0.5));
  }
  SUBCASE("users without relevant items are excluded and counted") {
    auto rel = relevance_of({{1, {1}}});
    rel.items[UserId{2}];  // present but empty
    const std::vector<MatchedList> lists{list_of(1, {hit(1)}), list_of(2, {hit(1)}),
                                         list_of(3, {hit(1)})};
    const auto pr = f1_at_k(lists, rel, 1);
    CHECK(pr.users == 1);
    CHECK(pr.excluded == 2);
    CHECK(pr.f1 == 1.0);
    CHECK(mrr_at_k(lists, rel, 1).excluded == 2);
  }
  SUBCASE("a repeated item is a miss") {
    const auto rel = relevance_of({{1, {1}}});
    Slot dup = hit(1);
    dup.kind = MatchKind::Duplicate;
    const std::vector<MatchedList> lists{list_of(1, {dup, hit(1)})};
    CHECK(mrr_at_k(lists, rel, 2).value == 0.5);
  }
}

TEST_CASE("relevance from the test split") {
  const InteractionSet test({testing::ix(1, 5, 1, 2.0), testing::ix(1, 6, 2, 4.5),
                             testing::ix(2, 5, 1, 3.0)});
  const auto all = build_relevance(test);
  CHECK(all.find(UserId{1})->size() == 2);
  const auto floored = build_relevance(test, 4.0);
  CHECK(floored.find(UserId{1})->size() == 1);
  CHECK(floored.find(UserId{1})->count(ItemId{6}) == 1);
  CHECK((floored.find(UserId{2}) == nullptr || floored.find(UserId{2})->empty()));
}

TEST_CASE("random instances agree with the brute-force oracle") {
  Rng rng(2024);
  for (int instance = 0; instance < 150; ++instance) {
    const int n_items = 2 + static_cast<int>(rng.below(19));
    const int n_pop = 1 + static_cast<int>(rng.below(n_items - 1));
    std::vector<ItemId> pop, niche;
    std::set<oracle::Item> o_pop, o_niche;
    for (int i = 1; i <= n_items; ++i) {
      (i <= n_pop ? pop : niche).push_back(ItemId{i});
      (i <= n_pop ? o_pop : o_niche).insert(i);
    }
    const PopularityPartition part(pop, niche, 0.2);

    const int n_users = 1 + static_cast<int>(rng.below(10));
    std::vector<MatchedList> lists;
    std::vector<oracle::Ranked> o_lists;
    std::vector<std::set<oracle::Item>> o_rel;
    TargetMap targets;
    RelevanceSet rel;
    for (int u = 0; u < n_users; ++u) {
      const double t = rng.below(4) == 0 ? static_cast<double>(rng.below(2)) : rng.uniform();
      targets[UserId{u}] = share(t);
      MatchedList l;
      l.user = UserId{u};
      oracle::Ranked o;
      std::set<ItemId> seen;
      for (auto len = rng.below(6); len > 0; --len) {
        if (rng.below(4) == 0) {
          l.slots.push_back(miss());
          o.push_back(std::nullopt);
          continue;
        }
        const auto item = static_cast<std::int64_t>(1 + rng.below(n_items));
        Slot s = hit(item);
        if (!seen.insert(ItemId{item}).second) s.kind = MatchKind::Duplicate;
        l.slots.push_back(s);
        o.push_back(item);
      }
      std::set<oracle::Item> r;
      for (auto m = rng.below(4); m > 0; --m) r.insert(static_cast<std::int64_t>(1 + rng.below(n_items)));
      for (auto i : r) rel.items[UserId{u}].insert(ItemId{i});
      lists.push_back(std::move(l));
      o_lists.push_back(std::move(o));
      o_rel.push_back(std::move(r));
    }

    CHECK(long_tail_coverage(lists, part) == doctest::Approx(oracle::ltc(o_lists, o_niche)).epsilon(1e-12));
    for (auto kind : {Divergence::KL, Divergence::Hellinger, Divergence::ChiSquared}) {
      double o_mrmc = 0;
      for (int u = 0; u < n_users; ++u) {
        const double t = targets[UserId{u}].popular();
        const double o_mc = oracle::mc(t, o_lists[u], o_pop, to_oracle(kind), 0.01);
        CHECK(std::abs(miscalibration(targets[UserId{u}], lists[u].slots, part, kind) - o_mc) < 1e-9);
        const double o_rmc = oracle::rmc(t, o_lists[u], o_pop, to_oracle(kind), 10, 0.01);
        CHECK(std::abs(rank_miscalibration(targets[UserId{u}], lists[u], part, kind, 10) - o_rmc) < 1e-9);
        o_mrmc += o_rmc;
      }
      o_mrmc /= n_users;
      CHECK(std::abs(mean_rank_miscalibration(lists, targets, part, kind, 10) - o_mrmc) < 1e-9);
    }
    const auto o_rank = oracle::ranking(o_lists, o_rel, 10);
    if (o_rank.users > 0) {
      CHECK(std::abs(mrr_at_k(lists, rel, 10).value - o_rank.mrr) < 1e-9);
      const auto pr = f1_at_k(lists, rel, 10);
      CHECK(std::abs(pr.precision - o_rank.precision) < 1e-9);
      CHECK(std::abs(pr.recall - o_rank.recall) < 1e-9);
      CHECK(std::abs(pr.f1 - o_rank.f1) < 1e-9);
    }
  }
}

TEST_CASE("metric ranges and invariances") {
  Rng rng(99);
  const auto part = small_partition();
  for (int trial = 0; trial < 300; ++trial) {
    std::vector<Slot> slots;
    for (auto n = rng.below(8); n > 0; --n) {
      slots.push_back(rng.below(5) == 0 ? miss() : hit(static_cast<std::int64_t>(1 + rng.below(6))));
    }
    const auto target = share(rng.uniform());
    for (auto kind : {Divergence::KL, Divergence::Hellinger, Divergence::ChiSquared}) {
      const double mc = miscalibration(target, slots, part, kind);
      CHECK(mc >= 0.0);
      CHECK(mc <= 1.0);
    }
    // permutations leave coverage unchanged; extra niche items never lower it
    auto l = list_of(1, slots);
    const double before = long_tail_coverage(std::vector<MatchedList>{l}, part);
    Rng perm(trial);
    perm.shuffle(l.slots);
    CHECK(long_tail_coverage(std::vector<MatchedList>{l}, part) == before);
    l.slots.push_back(hit(static_cast<std::int64_t>(3 + rng.below(4))));
    CHECK(long_tail_coverage(std::vector<MatchedList>{l}, part) >= before);
  }
}

TEST_CASE("parallel evaluation is bitwise equal to the serial reference") {
  Rng rng(7);
  std::vector<ItemId> pop, niche;
  for (int i = 1; i <= 50; ++i) (i <= 10 ? pop : niche).push_back(ItemId{i});
  const PopularityPartition part(pop, niche, 0.2);
  UserSegments seg;
  RelevanceSet rel;
  std::vector<MatchedList> lists;
  for (int u = 0; u < 400; ++u) {
    const double r = rng.uniform();
    seg.ratios[UserId{u}] = r;
    seg.groups[UserId{u}] = r >= 0.5 ? UserGroup::P : UserGroup::N;
    std::vector<Slot> slots;
    std::set<std::int64_t> seen;
    for (int s = 0; s < 10; ++s) {
      const auto item = static_cast<std::int64_t>(1 + rng.below(50));
      Slot slot = rng.below(10) == 0 ? miss() : hit(item);
      if (slot.matched() && !seen.insert(item).second) slot.kind = MatchKind::Duplicate;
      slots.push_back(slot);
    }
    lists.push_back(list_of(u, slots));
    if (u % 13) {
      for (int m = 0; m < 4; ++m) rel.items[UserId{u}].insert(ItemId{static_cast<std::int64_t>(1 + rng.below(50))});
    }
  }
  const auto targets = user_targets(seg);
  for (auto kind : {Divergence::KL, Divergence::Hellinger, Divergence::ChiSquared}) {
    EvaluationOptions opt;
    opt.divergence = kind;
    const auto a = evaluate(lists, part, targets, seg, rel, opt);
    const auto b = reference::evaluate_serial(lists, part, targets, seg, rel, opt);
    CHECK(a.ltc == b.ltc);
    CHECK(a.mrmc == b.mrmc);
    CHECK(a.mrr_at_k == b.mrr_at_k);
    CHECK(a.f1_at_k == b.f1_at_k);
    CHECK(a.precision_at_k == b.precision_at_k);
    CHECK(a.recall_at_k == b.recall_at_k);
    CHECK(a.out_of_catalog_rate == b.out_of_catalog_rate);
    CHECK(a.duplicate_rate == b.duplicate_rate);
    CHECK(a.excluded_users == b.excluded_users);
    CHECK(a.excluded_users == 31);
    REQUIRE(a.groups.size() == b.groups.size());
    for (auto& [g, gm] : a.groups) {
      CHECK(gm.users == b.groups.at(g).users);
      CHECK(gm.mrmc == b.groups.at(g).mrmc);
      CHECK(gm.ltc == b.groups.at(g).ltc);
      CHECK(gm.f1_at_k == b.groups.at(g).f1_at_k);
    }
    CHECK(a.groups.at(UserGroup::P).users + a.groups.at(UserGroup::N).users == 400);
    CHECK(a.mrmc == doctest::Approx(mean_rank_miscalibration(lists, targets, part, kind, 10)));
  }
}
