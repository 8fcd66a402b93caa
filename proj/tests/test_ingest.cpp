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
#include <algorithm>
#include <map>
#include <sstream>

#include "doctest.h"
#include "popbias/csv.hpp"
#include "popbias/ingest.hpp"
#include "popbias/random.hpp"
#include "popbias/synth.hpp"
#include "support.hpp"

using namespace popbias;
using testing::ix;

namespace {

InteractionSet users_with_counts(std::initializer_list<int> counts) {
  std::vector<Interaction> rows;
  std::int64_t user = 1;
  for (int c : counts) {
    for (int i = 0; i < c; ++i) rows.push_back(ix(user, i + 1, 1000 + i));
    ++user;
  }
  return InteractionSet(std::move(rows));
}

// n interactions for one user with shuffled timestamps.
InteractionSet shuffled_user(std::size_t n, std::uint64_t seed) {
  std::vector<std::int64_t> ts(n);
  for (std::size_t i = 0; i < n; ++i) ts[i] = static_cast<std::int64_t>(i) * 10;
  Rng rng(seed);
  rng.shuffle(ts);
  std::vector<Interaction> rows;
  for (std::size_t i = 0; i < n; ++i) {
    rows.push_back(ix(1, static_cast<std::int64_t>(i) + 1, ts[i]));
  }
  return InteractionSet(std::move(rows));
}

}  // namespace

TEST_CASE("csv records honour quoting") {
  std::vector<std::string> f;
  REQUIRE(csv::split_record(R"x(1,"Matrix, The (1999)",Action)x", f));
  CHECK(f == std::vector<std::string>{"1", "Matrix, The (1999)", "Action"});
  REQUIRE(csv::split_record(R"(2,"He said ""hi""",)", f));
  CHECK(f == std::vector<std::string>{"2", "He said \"hi\"", ""});
  CHECK_FALSE(csv::split_record(R"(3,"open)", f));
  CHECK(csv::escape("a,b") == "\"a,b\"");
  CHECK(csv::escape("plain") == "plain");
}

TEST_CASE("movielens row parses into an interaction") {
  const auto set = parse_interactions(
      "userId,movieId,rating,timestamp\n1,296,5.0,1147880044\n",
      DatasetFormat::MovieLens);
  REQUIRE(set.size() == 1);
  CHECK(set.interactions()[0] == ix(1, 296, 1147880044, 5.0));
  CHECK(set.fully_timestamped());
}

TEST_CASE("header only yields an empty set") {
  const auto set =
      parse_interactions("userId,movieId,rating,timestamp\n", DatasetFormat::MovieLens);
  CHECK(set.empty());
  CHECK(set.user_count() == 0);
}

TEST_CASE("goodbooks rows carry no timestamp") {
  const auto set =
      parse_interactions("user_id,book_id,rating\r\n314,1,5\r\n", DatasetFormat::Goodbooks);
  REQUIRE(set.size() == 1);
  CHECK(set.interactions()[0] == ix(314, 1, std::nullopt, 5.0));
  CHECK_FALSE(set.fully_timestamped());
}

TEST_CASE("malformed rows report their line") {
  const std::string head = "userId,movieId,rating,timestamp\n1,2,4.0,10\n";
  auto line_of = [&](const std::string& body) -> std::size_t {
    try {
      parse_interactions(head + body, DatasetFormat::MovieLens);
    } catch (const ParseError& e) {
      return e.row();
    }
    return 0;
  };
  CHECK(line_of("1,3,7.5,11\n") == 3);   // rating above scale
  CHECK(line_of("1,3,0.0,11\n") == 3);   // below the MovieLens floor
  CHECK(line_of("1,x,4.0,11\n") == 3);
  CHECK(line_of("1,3,4.0\n") == 3);
  CHECK(line_of("\n1,3,4.0,11,9\n") == 4);
  CHECK(line_of("-1,3,4.0,11\n") == 3);
  CHECK_THROWS_AS(parse_interactions("a,b\n1,2\n", DatasetFormat::MovieLens),
                  ParseError);
  CHECK_THROWS_AS(
      parse_interactions("user_id,book_id,rating\n1,2,0.5\n", DatasetFormat::Goodbooks),
      ParseError);
}

TEST_CASE("parallel and serial parsing agree") {
  SyntheticConfig cfg;
  cfg.users = 120;
  const auto data = generate_synthetic(cfg);
  const std::string text = to_movielens_ratings(data.interactions);
  const auto a = parse_interactions(text, DatasetFormat::MovieLens);
  const auto b = reference::parse_interactions_serial(text, DatasetFormat::MovieLens);
  REQUIRE(a.size() == data.interactions.size());
  CHECK(std::equal(a.interactions().begin(), a.interactions().end(),
                   b.interactions().begin(), b.interactions().end()));
  CHECK(std::equal(a.interactions().begin(), a.interactions().end(),
                   data.interactions.begin(), data.interactions.end()));
}

TEST_CASE("catalog parsing finds columns by name") {
  const auto titles = parse_catalog(read_source(testing::fixture("catalog_movies.csv")),
                                    DatasetFormat::MovieLens);
  CHECK(titles.size() == 25);
  CHECK(titles.at(ItemId{2}) == "Matrix, The (1999)");
  const auto books = parse_catalog(
      "id,book_id,authors,title\n1,2767052,Suzanne Collins,\"The Hunger Games\"\n",
      DatasetFormat::Goodbooks);
  CHECK(books.at(ItemId{2767052}) == "The Hunger Games");
  CHECK_THROWS_AS(parse_catalog("movieId,title\n1,A\n1,B\n", DatasetFormat::MovieLens),
                  ParseError);
}

TEST_CASE("timeline orders by timestamp with stable ties") {
  const InteractionSet set({ix(1, 10, 30), ix(2, 5, 1), ix(1, 11, 10), ix(1, 12, 30),
                            ix(1, 13, 20)});
  const auto tl = set.timeline(UserId{1});
  std::vector<std::int64_t> items;
  for (auto p : tl) items.push_back(raw(set.interactions()[p].item));
  CHECK(items == std::vector<std::int64_t>{11, 13, 10, 12});
  CHECK(set.timeline(UserId{99}).empty());
  CHECK(set.users().size() == 2);
}

TEST_CASE("untimed users keep file order") {
  const InteractionSet set({ix(1, 3), ix(1, 1), ix(1, 2)});
  const auto split = temporal_split(set, 0.5);
  std::vector<std::int64_t> train, test;
  for (auto& x : split.train.interactions()) train.push_back(raw(x.item));
  for (auto& x : split.test.interactions()) test.push_back(raw(x.item));
  CHECK(train == std::vector<std::int64_t>{3, 1});
  CHECK(test == std::vector<std::int64_t>{2});
}

TEST_CASE("minimum interaction filter") {
  SUBCASE("29 drops, 30 stays") {
    const auto out = filter_min_interactions(users_with_counts({30, 29}), 30);
    CHECK(out.user_count() == 1);
    CHECK(out.users()[0] == UserId{1});
    CHECK(out.size() == 30);
  }
  SUBCASE("threshold one is the identity") {
    const auto in = users_with_counts({3, 1, 4});
    const auto out = filter_min_interactions(in, 1);
    CHECK(std::equal(in.interactions().begin(), in.interactions().end(),
                     out.interactions().begin(), out.interactions().end()));
  }
  SUBCASE("counts 1..100") {
    std::vector<Interaction> rows;
    for (int u = 1; u <= 100; ++u) {
      for (int i = 0; i < u; ++i) rows.push_back(ix(u, i, i));
    }
    const InteractionSet in(std::move(rows));
    const auto once = filter_min_interactions(in, 30);
    CHECK(once.user_count() == 71);
    const auto twice = filter_min_interactions(once, 30);
    CHECK(std::equal(once.interactions().begin(), once.interactions().end(),
                     twice.interactions().begin(), twice.interactions().end()));
  }
}

TEST_CASE("train size follows the ceiling rule") {
  CHECK(train_size(10, 0.7) == 7);
  CHECK(train_size(9, 0.7) == 7);
  CHECK(train_size(2, 0.5) == 1);
  CHECK(train_size(100, 0.7) == 70);  // 0.7 * 100 is not exactly 70 in binary
  // ceil(7n/10) in integers
  for (std::size_t n = 4; n <= 2000; ++n) {
    CHECK(train_size(n, 0.7) == (7 * n + 9) / 10);
  }
  // a user of 2 at a high ratio still leaves one test interaction
  CHECK(train_size(2, 0.9) == 1);
}

TEST_CASE("temporal split examples") {
  const auto s10 = temporal_split(shuffled_user(10, 3), 0.7);
  CHECK(s10.train.size() == 7);
  CHECK(s10.test.size() == 3);
  const auto s9 = temporal_split(shuffled_user(9, 4), 0.7);
  CHECK(s9.train.size() == 7);
  CHECK(s9.test.size() == 2);
  const auto s2 = temporal_split(shuffled_user(2, 5), 0.5);
  CHECK(s2.train.size() == 1);
  CHECK(s2.test.size() == 1);
  CHECK_THROWS_AS(temporal_split(users_with_counts({5, 1}), 0.7), Error);
}

TEST_CASE("split partitions each user without leakage") {
  Rng rng(11);
  std::vector<Interaction> rows;
  for (std::int64_t u = 1; u <= 200; ++u) {
    const auto n = rng.between(2, 40);
    for (std::uint64_t i = 0; i < n; ++i) {
      rows.push_back(ix(u, static_cast<std::int64_t>(rng.below(500)),
                        static_cast<std::int64_t>(rng.below(50))));
    }
  }
  Rng order(12);
  order.shuffle(rows);
  const InteractionSet set(rows);
  const auto split = temporal_split(set, 0.7);

  // multiset union equals input
  auto key = [](const Interaction& x) {
    return std::make_tuple(raw(x.user), raw(x.item), *x.timestamp);
  };
  std::vector<std::tuple<std::int64_t, std::int64_t, std::int64_t>> all, parts;
  for (auto& x : set.interactions()) all.push_back(key(x));
  for (auto& x : split.train.interactions()) parts.push_back(key(x));
  for (auto& x : split.test.interactions()) parts.push_back(key(x));
  std::sort(all.begin(), all.end());
  std::sort(parts.begin(), parts.end());
  CHECK(all == parts);

  for (UserId u : set.users()) {
    std::int64_t max_train = INT64_MIN, min_test = INT64_MAX;
    for (auto p : split.train.timeline(u)) {
      max_train = std::max(max_train, *split.train.interactions()[p].timestamp);
    }
    for (auto p : split.test.timeline(u)) {
      min_test = std::min(min_test, *split.test.interactions()[p].timestamp);
    }
    CHECK(max_train <= min_test);
    const std::size_t n = set.timeline(u).size();
    CHECK(split.train.timeline(u).size() == std::min((7 * n + 9) / 10, n - 1));
  }
}
