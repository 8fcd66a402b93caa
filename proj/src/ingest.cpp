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
#include "popbias/ingest.hpp"

#include <omp.h>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iostream>
#include <iterator>
#include <limits>
#include <sstream>
#include <unordered_map>

#include "popbias/csv.hpp"

namespace popbias {

DatasetFormat parse_format(std::string_view tag) {
  if (tag == "movielens" || tag == "ml" || tag == "MovieLens")
    return DatasetFormat::MovieLens;
  if (tag == "goodbooks" || tag == "gb" || tag == "Goodbooks")
    return DatasetFormat::Goodbooks;
  throw ParseError("unknown dataset format '" + std::string(tag) + "'", 0);
}

std::string_view to_string(DatasetFormat format) {
  return format == DatasetFormat::MovieLens ? "movielens" : "goodbooks";
}

RatingScale rating_scale(DatasetFormat format) {
  return format == DatasetFormat::MovieLens ? RatingScale{0.5, 5.0}
                                            : RatingScale{1.0, 5.0};
}

namespace {

std::size_t column_count(DatasetFormat format) {
  return format == DatasetFormat::MovieLens ? 4 : 3;
}

template <typename T>
bool parse_number(std::string_view text, T& out) {
  while (!text.empty() && text.front() == ' ') text.remove_prefix(1);
  while (!text.empty() && text.back() == ' ') text.remove_suffix(1);
  if (text.empty()) return false;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), out);
  return ec == std::errc() && ptr == text.data() + text.size();
}

// Splits an unquoted record in place; falls back to the quoting-aware
// splitter when the row has a quote character.
bool split_fields(std::string_view line, std::vector<std::string_view>& out,
                  std::vector<std::string>& storage) {
  out.clear();
  if (line.find('"') != std::string_view::npos) {
    if (!csv::split_record(line, storage)) return false;
    for (const auto& s : storage) out.emplace_back(s);
    return true;
  }
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      out.push_back(line.substr(start));
      return true;
    }
    out.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
}

// Parses one data row; returns an error message or an empty string.
std::string parse_row(std::string_view line, DatasetFormat format,
                      Interaction& out, std::vector<std::string_view>& fields,
                      std::vector<std::string>& storage) {
  if (!split_fields(line, fields, storage)) return "unterminated quote";
  const std::size_t expected = column_count(format);
  if (fields.size() != expected) {
    return "expected " + std::to_string(expected) + " columns, found " +
           std::to_string(fields.size());
  }
  std::int64_t user = 0;
  std::int64_t item = 0;
  double rating = 0.0;
  if (!parse_number(fields[0], user)) return "unparsable user id";
  if (!parse_number(fields[1], item)) return "unparsable item id";
  if (!parse_number(fields[2], rating)) return "unparsable rating";
  if (user < 0 || item < 0) return "negative id";
  const RatingScale scale = rating_scale(format);
  if (!(rating >= scale.min && rating <= scale.max)) {
    return "rating out of range";
  }
  out.user = UserId{user};
  out.item = ItemId{item};
  out.rating = rating;
  out.timestamp.reset();
  if (expected == 4) {
    std::int64_t ts = 0;
    if (!parse_number(fields[3], ts)) return "unparsable timestamp";
    out.timestamp = ts;
  }
  return {};
}

struct DataLines {
  std::vector<std::string_view> lines;
  std::vector<std::size_t> numbers;  // 1-based physical line numbers
};

DataLines collect_lines(std::string_view source, DatasetFormat format) {
  DataLines data;
  csv::LineReader reader(source);
  std::string_view line;
  if (!reader.next(line)) return data;
  std::vector<std::string> header;
  if (!csv::split_record(line, header) ||
      header.size() != column_count(format)) {
    throw ParseError("header does not match the " +
                         std::string(to_string(format)) + " ratings layout",
                     reader.line_number());
  }
  while (reader.next(line)) {
    if (line.empty()) continue;
    data.lines.push_back(line);
    data.numbers.push_back(reader.line_number());
  }
  return data;
}

}  // namespace

// --- InteractionSet --------------------------------------------------------

InteractionSet::InteractionSet(std::vector<Interaction> interactions)
    : interactions_(std::move(interactions)) {
  const std::size_t n = interactions_.size();
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(),
                   [this](std::size_t a, std::size_t b) {
                     return interactions_[a].user < interactions_[b].user;
                   });

  offsets_.push_back(0);
  for (std::size_t i = 0; i < n; ++i) {
    const UserId u = interactions_[order[i]].user;
    if (users_.empty() || users_.back() != u) {
      if (!users_.empty()) offsets_.push_back(i);
      users_.push_back(u);
    }
  }
  if (!users_.empty()) offsets_.push_back(n);
  positions_ = std::move(order);

  const auto user_count = static_cast<std::ptrdiff_t>(users_.size());
  int untimed = 0;
#pragma omp parallel for schedule(dynamic, 64) reduction(+ : untimed)
  for (std::ptrdiff_t u = 0; u < user_count; ++u) {
    auto first = positions_.begin() + static_cast<std::ptrdiff_t>(offsets_[u]);
    auto last =
        positions_.begin() + static_cast<std::ptrdiff_t>(offsets_[u + 1]);
    const bool timed = std::all_of(first, last, [this](std::size_t p) {
      return interactions_[p].timestamp.has_value();
    });
    if (!timed) {
      ++untimed;
      continue;
    }
    std::stable_sort(first, last, [this](std::size_t a, std::size_t b) {
      return *interactions_[a].timestamp < *interactions_[b].timestamp;
    });
  }
  fully_timestamped_ = untimed == 0;
}

bool InteractionSet::contains(UserId user) const {
  return std::binary_search(users_.begin(), users_.end(), user);
}

std::span<const std::size_t> InteractionSet::timeline(UserId user) const {
  auto it = std::lower_bound(users_.begin(), users_.end(), user);
  if (it == users_.end() || *it != user) return {};
  return timeline_at(static_cast<std::size_t>(it - users_.begin()));
}

std::span<const std::size_t> InteractionSet::timeline_at(
    std::size_t index) const {
  return std::span<const std::size_t>(positions_)
      .subspan(offsets_[index], offsets_[index + 1] - offsets_[index]);
}

// --- parsing ---------------------------------------------------------------

InteractionSet parse_interactions(std::string_view source,
                                  DatasetFormat format) {
  const DataLines data = collect_lines(source, format);
  const auto count = static_cast<std::ptrdiff_t>(data.lines.size());
  std::vector<Interaction> rows(data.lines.size());
  std::ptrdiff_t first_bad = count;

#pragma omp parallel
  {
    std::vector<std::string_view> fields;
    std::vector<std::string> storage;
    std::ptrdiff_t local_bad = count;
#pragma omp for schedule(static)
    for (std::ptrdiff_t i = 0; i < count; ++i) {
      if (i > local_bad) continue;
      if (!parse_row(data.lines[i], format, rows[i], fields, storage).empty()) {
        local_bad = std::min(local_bad, i);
      }
    }
#pragma omp critical
    first_bad = std::min(first_bad, local_bad);
  }

  if (first_bad < count) {
    std::vector<std::string_view> fields;
    std::vector<std::string> storage;
    Interaction scratch;
    throw ParseError(
        parse_row(data.lines[first_bad], format, scratch, fields, storage),
        data.numbers[first_bad]);
  }
  return InteractionSet(std::move(rows));
}

InteractionSet parse_interactions(std::istream& source, DatasetFormat format) {
  std::string buffer{std::istreambuf_iterator<char>(source),
                     std::istreambuf_iterator<char>()};
  return parse_interactions(std::string_view(buffer), format);
}

namespace reference {

InteractionSet parse_interactions_serial(std::string_view source,
                                         DatasetFormat format) {
  const DataLines data = collect_lines(source, format);
  std::vector<Interaction> rows;
  rows.reserve(data.lines.size());
  std::vector<std::string_view> fields;
  std::vector<std::string> storage;
  for (std::size_t i = 0; i < data.lines.size(); ++i) {
    Interaction row;
    std::string err = parse_row(data.lines[i], format, row, fields, storage);
    if (!err.empty()) throw ParseError(err, data.numbers[i]);
    rows.push_back(row);
  }
  return InteractionSet(std::move(rows));
}

}  // namespace reference

TitleMap parse_catalog(std::string_view source, DatasetFormat format) {
  csv::LineReader reader(source);
  std::string_view line;
  TitleMap titles;
  if (!reader.next(line)) return titles;

  std::vector<std::string> fields;
  if (!csv::split_record(line, fields)) {
    throw ParseError("malformed catalog header", reader.line_number());
  }
  const std::string id_name =
      format == DatasetFormat::MovieLens ? "movieId" : "book_id";
  std::size_t id_col = fields.size();
  std::size_t title_col = fields.size();
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (fields[i] == id_name && id_col == fields.size()) id_col = i;
    if (fields[i] == "title" && title_col == fields.size()) title_col = i;
  }
  if (id_col == fields.size() || title_col == fields.size()) {
    throw ParseError("catalog header lacks '" + id_name + "' or 'title'",
                     reader.line_number());
  }
  const std::size_t width = fields.size();

  while (reader.next(line)) {
    if (line.empty()) continue;
    if (!csv::split_record(line, fields)) {
      throw ParseError("unterminated quote", reader.line_number());
    }
    if (fields.size() != width) {
      throw ParseError("expected " + std::to_string(width) +
                           " columns, found " + std::to_string(fields.size()),
                       reader.line_number());
    }
    std::int64_t id = 0;
    if (!parse_number(std::string_view(fields[id_col]), id) || id < 0) {
      throw ParseError("unparsable item id", reader.line_number());
    }
    if (!titles.emplace(ItemId{id}, fields[title_col]).second) {
      throw ParseError("duplicate item id " + std::to_string(id),
                       reader.line_number());
    }
  }
  return titles;
}

TitleMap parse_catalog(std::istream& source, DatasetFormat format) {
  std::string buffer{std::istreambuf_iterator<char>(source),
                     std::istreambuf_iterator<char>()};
  return parse_catalog(std::string_view(buffer), format);
}

std::string read_source(const std::string& path) {
  if (path == "-") {
    return std::string{std::istreambuf_iterator<char>(std::cin),
                       std::istreambuf_iterator<char>()};
  }
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return std::move(ss).str();
}

// --- preprocessing ---------------------------------------------------------

InteractionSet filter_min_interactions(const InteractionSet& set,
                                       std::size_t min_count) {
  std::unordered_map<UserId, bool> keep;
  keep.reserve(set.user_count());
  for (std::size_t u = 0; u < set.user_count(); ++u) {
    keep.emplace(set.users()[u], set.timeline_at(u).size() >= min_count);
  }
  std::vector<Interaction> rows;
  rows.reserve(set.size());
  for (const Interaction& row : set.interactions()) {
    if (keep.at(row.user)) rows.push_back(row);
  }
  return InteractionSet(std::move(rows));
}

std::size_t train_size(std::size_t n, double ratio) {
  const double exact = static_cast<double>(n) * ratio;
  // Products such as 10 * 0.7 may land a few ulps above an integer.
  const double nearest = std::round(exact);
  std::size_t t = std::abs(exact - nearest) <= 1e-9 * std::max(1.0, exact)
                      ? static_cast<std::size_t>(nearest)
                      : static_cast<std::size_t>(std::ceil(exact));
  if (n >= 2) t = std::clamp<std::size_t>(t, 1, n - 1);
  return t;
}

SplitPair temporal_split(const InteractionSet& set, double train_ratio) {
  if (!(train_ratio > 0.0 && train_ratio < 1.0)) {
    throw Error("train ratio must lie in (0, 1)");
  }
  std::vector<Interaction> train;
  std::vector<Interaction> test;
  train.reserve(set.size());
  test.reserve(set.size() / 2);
  const auto rows = set.interactions();
  for (std::size_t u = 0; u < set.user_count(); ++u) {
    const auto tl = set.timeline_at(u);
    if (tl.size() < 2) {
      throw Error("user " + std::to_string(raw(set.users()[u])) + " has " +
                  std::to_string(tl.size()) +
                  " interaction(s); a split needs at least 2");
    }
    const std::size_t t = train_size(tl.size(), train_ratio);
    for (std::size_t i = 0; i < tl.size(); ++i) {
      (i < t ? train : test).push_back(rows[tl[i]]);
    }
  }
  return {InteractionSet(std::move(train)), InteractionSet(std::move(test)),
          train_ratio};
}

}  // namespace popbias
