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
#include "popbias/report.hpp"

#include <algorithm>
#include <charconv>
#include <numeric>
#include <sstream>

#include "json.hpp"
#include "popbias/csv.hpp"

namespace popbias {

TableFormat parse_table_format(std::string_view tag) {
  if (tag == "csv") return TableFormat::Csv;
  if (tag == "tsv") return TableFormat::Tsv;
  if (tag == "json") return TableFormat::Json;
  throw Error("unknown table format '" + std::string(tag) + "'");
}

std::string format_fixed3(double value) {
  // to_chars is correctly rounded on the exact binary value, ties to even.
  char buf[64];
  auto [end, ec] =
      std::to_chars(buf, buf + sizeof buf, value, std::chars_format::fixed, 3);
  if (ec != std::errc()) throw Error("cannot render value");
  std::string out(buf, end);
  if (out == "-0.000") out = "0.000";
  return out;
}

namespace {

const std::string& shared_manifest(std::span<const ExperimentCell> cells) {
  if (cells.empty()) throw Error("cannot emit a table without cells");
  for (const auto& cell : cells) {
    if (cell.manifest_hash != cells.front().manifest_hash) {
      throw Error("cells come from different run manifests");
    }
  }
  return cells.front().manifest_hash;
}

std::vector<std::string> column_names(std::size_t k) {
  const std::string at = "@" + std::to_string(k);
  return {"strategy", "LtC", "MRMC", "MRR" + at, "F1" + at, "OOC"};
}

std::vector<double> row_values(const MetricsReport& m) {
  return {m.ltc, m.mrmc, m.mrr_at_k, m.f1_at_k, m.out_of_catalog_rate};
}

}  // namespace

std::string emit_table(std::span<const ExperimentCell> cells,
                       TableFormat format) {
  const std::string& manifest = shared_manifest(cells);
  const std::size_t k = cells.front().metrics.k;
  const auto columns = column_names(k);

  if (format == TableFormat::Json) {
    nlohmann::json doc;
    doc["manifest_sha256"] = manifest;
    doc["k"] = k;
    doc["columns"] = columns;
    doc["rows"] = nlohmann::json::array();
    for (const auto& cell : cells) {
      nlohmann::json row;
      row["strategy"] = strategy_label(cell.strategy);
      row["provider"] = cell.provider;
      const auto values = row_values(cell.metrics);
      for (std::size_t c = 0; c < values.size(); ++c) {
        row[columns[c + 1]] = std::stod(format_fixed3(values[c]));
      }
      doc["rows"].push_back(std::move(row));
    }
    return doc.dump(2) + "\n";
  }

  const char delim = format == TableFormat::Csv ? ',' : '\t';
  std::ostringstream out;
  out << "# manifest_sha256=" << manifest << '\n';
  for (std::size_t c = 0; c < columns.size(); ++c) {
    out << (c ? std::string(1, delim) : "") << columns[c];
  }
  out << '\n';
  for (const auto& cell : cells) {
    out << csv::escape(strategy_label(cell.strategy), delim);
    for (double v : row_values(cell.metrics)) out << delim << format_fixed3(v);
    out << '\n';
  }
  return out.str();
}

ParsedTable parse_table(std::string_view text, TableFormat format) {
  ParsedTable table;
  if (format == TableFormat::Json) {
    const auto doc = nlohmann::json::parse(text);
    table.manifest_hash = doc.at("manifest_sha256").get<std::string>();
    table.k = doc.at("k").get<std::size_t>();
    const auto columns = column_names(table.k);
    for (const auto& row : doc.at("rows")) {
      table.rows.push_back({row.at("strategy").get<std::string>(),
                            row.at(columns[1]).get<double>(),
                            row.at(columns[2]).get<double>(),
                            row.at(columns[3]).get<double>(),
                            row.at(columns[4]).get<double>(),
                            row.at(columns[5]).get<double>()});
    }
    return table;
  }

  const char delim = format == TableFormat::Csv ? ',' : '\t';
  csv::LineReader reader(text);
  std::string_view line;
  std::vector<std::string> fields;
  bool header_seen = false;
  while (reader.next(line)) {
    if (line.empty()) continue;
    if (line.front() == '#') {
      constexpr std::string_view kKey = "# manifest_sha256=";
      if (line.substr(0, kKey.size()) == kKey) {
        table.manifest_hash = std::string(line.substr(kKey.size()));
      }
      continue;
    }
    if (!csv::split_record(line, fields, delim) || fields.size() != 6) {
      throw ParseError("table row needs 6 columns", reader.line_number());
    }
    if (!header_seen) {
      header_seen = true;
      const auto at = fields[3].find('@');
      if (at == std::string::npos) {
        throw ParseError("table header lacks MRR@k", reader.line_number());
      }
      table.k = std::stoul(fields[3].substr(at + 1));
      continue;
    }
    TableRow row;
    row.label = fields[0];
    double* slots[] = {&row.ltc, &row.mrmc, &row.mrr_at_k, &row.f1_at_k,
                       &row.out_of_catalog_rate};
    for (std::size_t c = 0; c < 5; ++c) {
      const auto& f = fields[c + 1];
      auto [ptr, ec] = std::from_chars(f.data(), f.data() + f.size(), *slots[c]);
      if (ec != std::errc() || ptr != f.data() + f.size()) {
        throw ParseError("unparsable table value", reader.line_number());
      }
    }
    table.rows.push_back(std::move(row));
  }
  return table;
}

std::string metrics_json(std::span<const ExperimentCell> cells) {
  nlohmann::json doc = nlohmann::json::array();
  for (const auto& cell : cells) {
    const MetricsReport& m = cell.metrics;
    nlohmann::json row;
    row["strategy"] = strategy_label(cell.strategy);
    row["provider"] = cell.provider;
    row["manifest_sha256"] = cell.manifest_hash;
    row["divergence"] = std::string(to_string(m.divergence));
    row["k"] = m.k;
    row["depth"] = m.depth;
    row["users"] = m.users;
    row["excluded_users"] = m.excluded_users;
    row["slots"] = m.slots;
    row["ltc"] = m.ltc;
    row["mrmc"] = m.mrmc;
    row["mrr_at_k"] = m.mrr_at_k;
    row["precision_at_k"] = m.precision_at_k;
    row["recall_at_k"] = m.recall_at_k;
    row["f1_at_k"] = m.f1_at_k;
    row["out_of_catalog_rate"] = m.out_of_catalog_rate;
    row["duplicate_rate"] = m.duplicate_rate;
    nlohmann::json groups = nlohmann::json::object();
    for (const auto& [g, gm] : m.groups) {
      groups[std::string(to_string(g))] = {
          {"users", gm.users},         {"ltc", gm.ltc},
          {"mrmc", gm.mrmc},           {"mrr_at_k", gm.mrr_at_k},
          {"precision_at_k", gm.precision_at_k},
          {"recall_at_k", gm.recall_at_k}, {"f1_at_k", gm.f1_at_k}};
    }
    row["groups"] = std::move(groups);
    doc.push_back(std::move(row));
  }
  return doc.dump(2) + "\n";
}

std::vector<ItemExposure> compute_exposure(std::span<const MatchedList> lists,
                                           const ItemStats& stats,
                                           const PopularityPartition& partition) {
  std::vector<std::int64_t> exposure(stats.total_items(), 0);
  for (const MatchedList& list : lists) {
    for (const Slot& slot : list.slots) {
      if (!slot.matched()) continue;
      const std::size_t i = stats.index_of(slot.item);
      if (i == ItemStats::npos) {
        throw Error("matched item " + std::to_string(raw(slot.item)) +
                    " is not in the catalog");
      }
      ++exposure[i];
    }
  }
  std::vector<std::size_t> order(stats.total_items());
  std::iota(order.begin(), order.end(), std::size_t{0});
  const auto counts = stats.counts();
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) {
                     return counts[a] > counts[b];
                   });
  std::vector<ItemExposure> rows;
  rows.reserve(order.size());
  for (std::size_t i : order) {
    const ItemId item = stats.items()[i];
    rows.push_back({item, partition.classify(item), counts[i], exposure[i]});
  }
  return rows;
}

std::string emit_exposure(std::span<const MatchedList> lists,
                          const ItemStats& stats,
                          const PopularityPartition& partition,
                          std::string_view manifest_hash) {
  const auto rows = compute_exposure(lists, stats, partition);
  std::int64_t total = 0;
  std::int64_t niche = 0;
  for (const auto& r : rows) {
    total += r.exposure;
    if (r.item_class == ItemClass::Niche) niche += r.exposure;
  }
  std::ostringstream out;
  out << "# manifest_sha256=" << manifest_hash << '\n';
  out << "# niche_exposure_share="
      << (total ? format_fixed3(static_cast<double>(niche) /
                                static_cast<double>(total))
                : std::string("0.000"))
      << '\n';
  out << "rank,item_id,class,train_count,exposure\n";
  for (std::size_t r = 0; r < rows.size(); ++r) {
    out << r + 1 << ',' << raw(rows[r].item) << ','
        << to_string(rows[r].item_class) << ',' << rows[r].train_count << ','
        << rows[r].exposure << '\n';
  }
  return out.str();
}

}  // namespace popbias
