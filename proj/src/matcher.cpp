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
#include "popbias/matcher.hpp"

#include <unicode/normalizer2.h>
#include <unicode/uchar.h>
#include <unicode/unistr.h>
#include <unicode/utf8.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <regex>
#include <unordered_set>

#include "json.hpp"

namespace popbias {

namespace {

std::string fold_case_compat(std::string_view title) {
  UErrorCode status = U_ZERO_ERROR;
  const icu::Normalizer2* nfkc_cf =
      icu::Normalizer2::getNFKCCasefoldInstance(status);
  if (U_FAILURE(status)) throw Error("ICU NFKC_Casefold is unavailable");
  const icu::UnicodeString source = icu::UnicodeString::fromUTF8(
      icu::StringPiece(title.data(), static_cast<int32_t>(title.size())));
  icu::UnicodeString folded = nfkc_cf->normalize(source, status);
  if (U_FAILURE(status)) throw Error("ICU normalization failed");
  std::string out;
  folded.toUTF8String(out);
  return out;
}

bool is_separator(UChar32 c) {
  if (c < 0) return true;  // ill-formed UTF-8
  if (u_isUWhiteSpace(c) || u_iscntrl(c) || u_ispunct(c)) return true;
  return (U_MASK(u_charType(c)) & U_GC_S_MASK) != 0;
}

// Punctuation, symbols and whitespace become single spaces; ends trimmed.
std::string collapse_separators(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  bool pending_space = false;
  int32_t i = 0;
  const auto len = static_cast<int32_t>(s.size());
  const auto* bytes = reinterpret_cast<const uint8_t*>(s.data());
  while (i < len) {
    const int32_t start = i;
    UChar32 c;
    U8_NEXT(bytes, i, len, c);
    if (is_separator(c)) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) {
      out.push_back(' ');
      pending_space = false;
    }
    out.append(s.substr(static_cast<std::size_t>(start),
                        static_cast<std::size_t>(i - start)));
  }
  return out;
}

bool is_article(std::string_view word) {
  return word == "the" || word == "a" || word == "an";
}

}  // namespace

std::string normalize_title(std::string_view title) {
  static const std::regex kTrailingYear(R"(^(.*?)\s*\(\d{4}\)\s*$)");
  static const std::regex kTrailingArticle(R"(^(.*?)\s*,\s*(the|a|an)\s*$)");

  std::string s = fold_case_compat(title);
  std::smatch m;
  if (std::regex_match(s, m, kTrailingYear)) s = m[1].str();
  if (std::regex_match(s, m, kTrailingArticle)) {
    s = m[2].str() + " " + m[1].str();
  }
  s = collapse_separators(s);

  // Drop leading articles while another word follows.
  std::size_t start = 0;
  while (true) {
    const std::size_t space = s.find(' ', start);
    if (space == std::string::npos) break;
    if (!is_article(std::string_view(s).substr(start, space - start))) break;
    start = space + 1;
  }
  return s.substr(start);
}

std::optional<int> title_year(std::string_view title) {
  static const std::regex kYear(R"(\((\d{4})\)\s*$)");
  std::match_results<std::string_view::const_iterator> m;
  if (std::regex_search(title.begin(), title.end(), m, kYear)) {
    return std::stoi(m[1].str());
  }
  return std::nullopt;
}

std::u32string to_u32(std::string_view utf8) {
  std::u32string out;
  out.reserve(utf8.size());
  int32_t i = 0;
  const auto len = static_cast<int32_t>(utf8.size());
  const auto* bytes = reinterpret_cast<const uint8_t*>(utf8.data());
  while (i < len) {
    UChar32 c;
    U8_NEXT(bytes, i, len, c);
    out.push_back(c < 0 ? U'�' : static_cast<char32_t>(c));
  }
  return out;
}

namespace {

// Edit distance, or bound + 1 as soon as it is known to exceed bound.
std::size_t levenshtein_bounded(std::u32string_view a, std::u32string_view b,
                                std::size_t bound) {
  if (a.size() < b.size()) std::swap(a, b);
  if (a.size() - b.size() > bound) return bound + 1;
  std::vector<std::size_t> prev(b.size() + 1);
  std::vector<std::size_t> cur(b.size() + 1);
  for (std::size_t j = 0; j <= b.size(); ++j) prev[j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    cur[0] = i;
    std::size_t row_min = cur[0];
    for (std::size_t j = 1; j <= b.size(); ++j) {
      const std::size_t subst = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, subst});
      row_min = std::min(row_min, cur[j]);
    }
    if (row_min > bound) return bound + 1;
    std::swap(prev, cur);
  }
  return std::min(prev[b.size()], bound + 1);
}

double similarity_from(std::size_t distance, std::size_t longest) {
  if (longest == 0) return 1.0;
  return 1.0 - static_cast<double>(distance) / static_cast<double>(longest);
}

}  // namespace

std::size_t levenshtein(std::u32string_view a, std::u32string_view b) {
  return levenshtein_bounded(a, b, std::max(a.size(), b.size()));
}

double title_similarity(std::string_view a, std::string_view b) {
  const std::u32string ua = to_u32(a);
  const std::u32string ub = to_u32(b);
  return similarity_from(levenshtein(ua, ub), std::max(ua.size(), ub.size()));
}

// --- CatalogIndex -------------------------------------------------------------

CatalogIndex::CatalogIndex(const TitleMap& catalog) {
  entries_.reserve(catalog.size());
  for (const auto& [item, title] : catalog) {
    Entry e;
    e.normalized = normalize_title(title);
    e.code_points = to_u32(e.normalized);
    e.item = item;
    e.year = title_year(title);
    entries_.push_back(std::move(e));
  }
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    exact_[entries_[i].normalized].push_back(i);
    const std::size_t len = entries_[i].code_points.size();
    if (by_length_.size() <= len) by_length_.resize(len + 1);
    by_length_[len].push_back(i);
  }
  std::map<std::string, std::vector<ItemId>> collided;
  for (const auto& [key, indices] : exact_) {
    if (indices.size() < 2) continue;
    auto& items = collided[key];
    for (std::size_t i : indices) items.push_back(entries_[i].item);
  }
  for (auto& [key, items] : collided) {
    collisions_.push_back({key, std::move(items)});
  }
}

std::optional<ItemId> CatalogIndex::exact(std::string_view normalized) const {
  return exact(normalized, std::nullopt);
}

std::optional<ItemId> CatalogIndex::exact(std::string_view normalized,
                                          std::optional<int> year) const {
  auto it = exact_.find(std::string(normalized));
  if (it == exact_.end()) return std::nullopt;
  const auto& indices = it->second;
  if (!year || indices.size() == 1) return entries_[indices.front()].item;
  std::optional<std::size_t> best;
  int best_gap = 2;
  for (std::size_t i : indices) {
    if (!entries_[i].year) continue;
    const int gap = std::abs(*entries_[i].year - *year);
    if (gap < best_gap) {
      best_gap = gap;
      best = i;
    }
  }
  return entries_[best.value_or(indices.front())].item;
}

std::optional<CatalogIndex::Candidate> CatalogIndex::best_fuzzy(
    std::string_view normalized, double threshold) const {
  const std::u32string query = to_u32(normalized);
  const std::size_t la = query.size();
  if (la == 0) return std::nullopt;
  const double slack = 1.0 - threshold;

  std::optional<Candidate> best;
  for (std::size_t lb = 1; lb < by_length_.size(); ++lb) {
    const std::size_t longest = std::max(la, lb);
    // Largest distance that can still reach the threshold, plus one so the
    // final decision is made on the computed score alone.
    const auto bound =
        static_cast<std::size_t>(std::floor(slack * static_cast<double>(longest))) + 1;
    const std::size_t gap = la > lb ? la - lb : lb - la;
    if (gap > bound) continue;
    for (std::size_t i : by_length_[lb]) {
      const Entry& e = entries_[i];
      const std::size_t d = levenshtein_bounded(query, e.code_points, bound);
      if (d > bound) continue;
      const double score = similarity_from(d, longest);
      if (score < threshold) continue;
      if (!best || score > best->score ||
          (score == best->score && e.item < best->item)) {
        best = Candidate{e.item, score};
      }
    }
  }
  return best;
}

// --- matching -------------------------------------------------------------------

std::string_view to_string(MatchKind kind) {
  switch (kind) {
    case MatchKind::Exact:
      return "exact";
    case MatchKind::Fuzzy:
      return "fuzzy";
    case MatchKind::Unmatched:
      return "unmatched";
    case MatchKind::Duplicate:
      return "duplicate";
  }
  return "?";
}

MatchedList match_titles(const RawRecommendation& rec,
                         const CatalogIndex& index, double fuzzy_threshold) {
  if (!(fuzzy_threshold > 0.0 && fuzzy_threshold <= 1.0)) {
    throw Error("fuzzy threshold must lie in (0, 1]");
  }
  MatchedList list;
  list.user = rec.user;
  list.strategy = rec.strategy;
  list.slots.reserve(rec.titles.size());
  std::unordered_set<ItemId> seen;
  for (const std::string& title : rec.titles) {
    Slot slot;
    slot.raw_title = title;
    const std::string norm = normalize_title(title);
    if (!norm.empty()) {
      if (auto hit = index.exact(norm, title_year(title))) {
        slot.kind = MatchKind::Exact;
        slot.item = *hit;
        slot.score = 1.0;
      } else if (auto cand = index.best_fuzzy(norm, fuzzy_threshold)) {
        slot.kind = MatchKind::Fuzzy;
        slot.item = cand->item;
        slot.score = cand->score;
      }
    }
    if (slot.matched() && !seen.insert(slot.item).second) {
      slot.kind = MatchKind::Duplicate;
    }
    list.slots.push_back(std::move(slot));
  }
  return list;
}

std::vector<MatchedList> match_all(std::span<const RawRecommendation> recs,
                                   const CatalogIndex& index,
                                   double fuzzy_threshold) {
  std::vector<MatchedList> out(recs.size());
  const auto n = static_cast<std::ptrdiff_t>(recs.size());
  std::exception_ptr error;
#pragma omp parallel for schedule(dynamic, 4)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    try {
      out[i] = match_titles(recs[i], index, fuzzy_threshold);
    } catch (...) {
#pragma omp critical
      if (!error) error = std::current_exception();
    }
  }
  if (error) std::rethrow_exception(error);
  return out;
}

namespace reference {

std::vector<MatchedList> match_all_serial(
    std::span<const RawRecommendation> recs, const CatalogIndex& index,
    double fuzzy_threshold) {
  std::vector<MatchedList> out;
  out.reserve(recs.size());
  for (const auto& rec : recs) {
    out.push_back(match_titles(rec, index, fuzzy_threshold));
  }
  return out;
}

}  // namespace reference

std::string match_audit_log(std::span<const MatchedList> lists) {
  std::string out;
  for (const MatchedList& list : lists) {
    for (std::size_t r = 0; r < list.slots.size(); ++r) {
      const Slot& slot = list.slots[r];
      nlohmann::json record;
      record["user_id"] = raw(list.user);
      record["strategy"] = std::string(to_string(list.strategy));
      record["rank"] = r + 1;
      record["raw_title"] = slot.raw_title;
      record["outcome"] = std::string(to_string(slot.kind));
      if (slot.kind == MatchKind::Unmatched) {
        record["item_id"] = nullptr;
      } else {
        record["item_id"] = raw(slot.item);
      }
      record["score"] = slot.score;
      out += record.dump();
      out += '\n';
    }
  }
  return out;
}

}  // namespace popbias
