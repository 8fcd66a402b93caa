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
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "popbias/types.hpp"

namespace popbias {

struct Interaction {
  UserId user{};
  ItemId item{};
  double rating = 0.0;
  std::optional<std::int64_t> timestamp;

  bool operator==(const Interaction&) const = default;
};

enum class DatasetFormat { MovieLens, Goodbooks };

DatasetFormat parse_format(std::string_view tag);
std::string_view to_string(DatasetFormat format);

// Valid rating range of a dataset, inclusive.
struct RatingScale {
  double min;
  double max;
};
RatingScale rating_scale(DatasetFormat format);

// An immutable bag of interactions plus a per-user timeline index.
//
// interactions() keeps the order the rows were supplied in. timeline(u)
// lists the positions of u's interactions sorted by timestamp ascending;
// ties keep supplied order, and a user with any missing timestamp keeps
// supplied order throughout.
class InteractionSet {
 public:
  InteractionSet() = default;
  explicit InteractionSet(std::vector<Interaction> interactions);

  std::span<const Interaction> interactions() const { return interactions_; }
  std::size_t size() const { return interactions_.size(); }
  bool empty() const { return interactions_.empty(); }

  // Users in ascending id order.
  std::span<const UserId> users() const { return users_; }
  std::size_t user_count() const { return users_.size(); }
  bool contains(UserId user) const;

  // Positions into interactions(), in timeline order. Empty for unknown users.
  std::span<const std::size_t> timeline(UserId user) const;
  // Same as timeline(users()[index]).
  std::span<const std::size_t> timeline_at(std::size_t index) const;

  // True when every interaction carries a timestamp.
  bool fully_timestamped() const { return fully_timestamped_; }

 private:
  std::vector<Interaction> interactions_;
  std::vector<UserId> users_;
  std::vector<std::size_t> offsets_;    // users_.size() + 1 entries
  std::vector<std::size_t> positions_;  // CSR payload
  bool fully_timestamped_ = true;
};

struct SplitPair {
  InteractionSet train;
  InteractionSet test;
  double ratio = 0.0;
};

// Parses a ratings file. The first line is a header and is skipped; blank
// lines are ignored. Rows are parsed in parallel and merged in file order.
// Throws ParseError naming the 1-based line of the first bad row.
InteractionSet parse_interactions(std::string_view source, DatasetFormat format);
InteractionSet parse_interactions(std::istream& source, DatasetFormat format);

// Reads a catalog (movies.csv / books.csv) into item id -> title.
TitleMap parse_catalog(std::string_view source, DatasetFormat format);
TitleMap parse_catalog(std::istream& source, DatasetFormat format);

// Reads a whole file, or standard input when path is "-".
std::string read_source(const std::string& path);

// Keeps exactly the users with at least min_count interactions.
InteractionSet filter_min_interactions(const InteractionSet& set,
                                       std::size_t min_count);

// Number of a user's n interactions that go to train: ceil(n * ratio),
// capped at n - 1 so the test side is never empty.
std::size_t train_size(std::size_t n, double ratio);

// Per-user chronological split: the first train_size(n, ratio) interactions
// of each timeline go to train, the rest to test.
SplitPair temporal_split(const InteractionSet& set, double train_ratio);

namespace reference {
// Single-threaded parser kept as the baseline for the parallel one.
InteractionSet parse_interactions_serial(std::string_view source,
                                         DatasetFormat format);
}  // namespace reference

}  // namespace popbias
