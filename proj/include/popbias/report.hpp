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
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "popbias/matcher.hpp"
#include "popbias/metrics.hpp"
#include "popbias/popularity.hpp"
#include "popbias/promptgen.hpp"

namespace popbias {

struct ExperimentCell {
  PromptStrategy strategy;
  std::string provider;  // e.g. "simulated(bias=1)" or "live(gpt-4o)"
  MetricsReport metrics;
  std::string manifest_hash;
};

enum class TableFormat { Csv, Tsv, Json };
TableFormat parse_table_format(std::string_view tag);

// Fixed three-decimal rendering, ties to even on the exact binary value
// (0.0625 -> "0.062").
std::string format_fixed3(double value);

// One row per cell in input order; columns strategy, LtC, MRMC, MRR@k, F1@k,
// OOC. Delimited formats start with a "# manifest_sha256=..." line. Throws
// Error for an empty cell list or cells from different manifests.
std::string emit_table(std::span<const ExperimentCell> cells,
                       TableFormat format);

struct TableRow {
  std::string label;
  double ltc = 0.0;
  double mrmc = 0.0;
  double mrr_at_k = 0.0;
  double f1_at_k = 0.0;
  double out_of_catalog_rate = 0.0;
};

struct ParsedTable {
  std::string manifest_hash;
  std::size_t k = 0;
  std::vector<TableRow> rows;
};

ParsedTable parse_table(std::string_view text, TableFormat format);

// Detailed per-cell record including precision, recall, exclusions and the
// per-group breakdown.
std::string metrics_json(std::span<const ExperimentCell> cells);

struct ItemExposure {
  ItemId item{};
  ItemClass item_class = ItemClass::Niche;
  std::int64_t train_count = 0;
  std::int64_t exposure = 0;  // matched slots recommending the item
};

// Every catalog item, ordered by descending training count then ascending
// id (the popularity rank order).
std::vector<ItemExposure> compute_exposure(std::span<const MatchedList> lists,
                                           const ItemStats& stats,
                                           const PopularityPartition& partition);

// CSV "rank,item_id,class,train_count,exposure" preceded by the manifest
// line and a "# niche_exposure_share=..." summary line.
std::string emit_exposure(std::span<const MatchedList> lists,
                          const ItemStats& stats,
                          const PopularityPartition& partition,
                          std::string_view manifest_hash);

}  // namespace popbias
