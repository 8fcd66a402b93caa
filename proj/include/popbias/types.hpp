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
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace popbias {

// Opaque dataset identifiers. Kept as distinct enum types so a user id can
// never be passed where an item id is expected.
enum class UserId : std::int64_t {};
enum class ItemId : std::int64_t {};

constexpr std::int64_t raw(UserId id) { return static_cast<std::int64_t>(id); }
constexpr std::int64_t raw(ItemId id) { return static_cast<std::int64_t>(id); }

// item id -> display title, as read from a movies/books catalog file.
using TitleMap = std::map<ItemId, std::string>;

enum class StrategyKind { Vanilla, Diversity, PopDebiasing, FairLRM };

std::string_view to_string(StrategyKind kind);
// Accepts the canonical names ("vanilla", "diversity", "popdebiasing",
// "fairlrm") case-insensitively, plus "pop.debiasing".
StrategyKind parse_strategy(std::string_view text);

// Popularity class of an item: head (popular) or tail (niche).
enum class ItemClass { Popular, Niche };
// User group: P = popularity-leaning, N = niche-leaning.
enum class UserGroup { P, N };

std::string_view to_string(ItemClass c);
std::string_view to_string(UserGroup g);

// Base class for every error this library raises.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed input data. row is the 1-based physical line number (the header
// is line 1), or 0 when the error is not tied to a row.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t row)
      : Error(row ? "line " + std::to_string(row) + ": " + what : what),
        row_(row) {}
  std::size_t row() const { return row_; }

 private:
  std::size_t row_;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace popbias
