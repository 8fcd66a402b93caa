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
#include <filesystem>
#include <iosfwd>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "popbias/ingest.hpp"
#include "popbias/matcher.hpp"
#include "popbias/metrics.hpp"
#include "popbias/popularity.hpp"
#include "popbias/promptgen.hpp"
#include "popbias/recclient.hpp"
#include "popbias/report.hpp"

namespace popbias {

enum class TargetMode { User, Global };
enum class ProviderMode { Simulate, Live };

// Everything a run depends on. Loaded from a key = value file; every key
// can be overridden from the command line.
struct RunConfig {
  std::string ratings_path;
  std::string catalog_path;  // optional; ids only when empty
  DatasetFormat format = DatasetFormat::MovieLens;

  std::size_t min_interactions = 30;
  double train_ratio = 0.7;
  double pareto_fraction = 0.2;
  std::vector<double> thresholds{0.5, 0.8};
  std::vector<StrategyKind> strategies{
      StrategyKind::Vanilla, StrategyKind::PopDebiasing,
      StrategyKind::Diversity, StrategyKind::FairLRM};

  std::size_t list_length = 10;
  std::size_t k = 10;
  std::size_t depth = 10;
  Divergence divergence = Divergence::KL;
  double smoothing = kDefaultSmoothing;
  double fuzzy_threshold = kDefaultFuzzyThreshold;
  TargetMode target = TargetMode::User;
  std::optional<double> rating_floor;
  std::size_t history_size = kDefaultHistorySize;
  std::size_t max_users = 0;  // 0: every test user

  ProviderMode provider = ProviderMode::Simulate;
  ProviderConfig live;
  double bias_exponent = 1.0;

  std::string out_dir = "out";
  std::string cache_path;  // default <out_dir>/replay_cache.jsonl
  std::uint64_t seed = 42;

  // Sets one key; throws ConfigError for unknown keys or bad values.
  void set(std::string_view key, std::string_view value);
  // Throws ConfigError when a field is out of range.
  void validate() const;
  // Sorted key = value lines of every result-affecting setting. Paths are
  // excluded; datasets enter the manifest by checksum instead.
  std::string canonical() const;
  std::string resolved_cache_path() const;
};

// Parses "key = value" lines ('#' starts a comment) into config.
void apply_config_text(RunConfig& config, std::string_view text);
RunConfig load_config(const std::string& path);

// A failure attributed to a pipeline stage ("ingest", "popularity",
// "prompts", "query", "match", "score", "report").
class StageError : public Error {
 public:
  StageError(std::string stage, const std::string& what)
      : Error("stage " + stage + ": " + what), stage_(std::move(stage)) {}
  const std::string& stage() const { return stage_; }

 private:
  std::string stage_;
};

// Dataset state shared by every subcommand.
struct PreparedData {
  InteractionSet raw;
  InteractionSet filtered;
  SplitPair split;
  TitleMap titles;
  std::vector<ItemId> catalog;
  ItemStats stats;
  PopularityPartition partition;
  std::map<double, UserSegments> segments;  // by threshold
  std::vector<UserId> eval_users;           // ascending
  std::map<std::string, std::string> checksums;
};

PreparedData prepare_data(const RunConfig& config);

// Table 1-style summary.
struct GroupCounts {
  double threshold = 0.0;
  std::size_t p = 0;
  std::size_t n = 0;
};
struct IngestStats {
  std::size_t users = 0;
  std::size_t items_rated = 0;
  std::size_t catalog_items = 0;
  std::size_t interactions = 0;
  std::size_t filtered_users = 0;
  std::size_t filtered_items_rated = 0;
  std::size_t filtered_interactions = 0;
  bool timestamps = true;
  // Segmentation of all interactions, no filter and no split.
  std::vector<GroupCounts> raw_groups;
  // Filter, split, then segmentation of the training side.
  std::vector<GroupCounts> protocol_groups;
};

IngestStats compute_ingest_stats(const RunConfig& config);
std::string format_ingest_stats(const IngestStats& stats);
std::string ingest_stats_json(const IngestStats& stats);

// One (strategy, threshold) cell of the experiment grid, in emission order:
// Vanilla once, the other strategies once per threshold.
std::vector<PromptStrategy> experiment_cells(const RunConfig& config);

struct PromptJob {
  PromptStrategy strategy;
  PromptRequest request;
  std::string prompt;
};

std::vector<PromptJob> build_prompts(const RunConfig& config,
                                     const PreparedData& data);

// Obtains one RawRecommendation per job, in job order. Live mode goes
// through the replay cache first and queries misses concurrently.
struct QueryStats {
  std::size_t cache_hits = 0;
  std::size_t live_requests = 0;
  std::vector<std::string> returned_models;  // sorted, distinct
};
std::vector<RawRecommendation> run_queries(
    const RunConfig& config, const PreparedData& data,
    std::span<const PromptJob> jobs, QueryStats* stats = nullptr,
    std::shared_ptr<HttpTransport> transport = nullptr);

// Line-delimited response records. The first line carries the returned
// model names; then one {"user_id","strategy","threshold","provenance",
// "empty","titles","raw_response"} record per job.
std::string responses_jsonl(std::span<const PromptJob> jobs,
                            std::span<const RawRecommendation> recs,
                            const std::vector<std::string>& returned_models);

struct ResponseFile {
  std::vector<std::string> returned_models;
  std::vector<std::pair<PromptStrategy, RawRecommendation>> responses;
};
ResponseFile parse_responses(std::string_view text);

// Matches and scores responses into cells, in experiment_cells() order.
struct ScoredRun {
  std::vector<ExperimentCell> cells;
  std::vector<std::vector<MatchedList>> lists;  // parallel to cells
};
ScoredRun score_responses(
    const RunConfig& config, const PreparedData& data,
    std::span<const std::pair<PromptStrategy, RawRecommendation>> responses,
    const std::string& manifest_hash);

// Canonical run manifest JSON (no wall-clock fields) and its hash.
std::string build_manifest(const RunConfig& config, const PreparedData& data,
                           const std::vector<std::string>& returned_models);

// Writes table.{csv,json}, metrics.json, match_audit.jsonl and one
// exposure file per cell into out_dir.
void write_reports(const std::filesystem::path& out_dir,
                   const PreparedData& data, const ScoredRun& scored,
                   const std::string& manifest_hash);

struct RunResult {
  std::filesystem::path out_dir;
  std::vector<ExperimentCell> cells;
  std::string manifest_hash;
  QueryStats query;
};

// Full pipeline: ingest -> partition/segment -> prompts -> query -> match
// -> score -> report. On failure throws StageError and leaves an
// INCOMPLETE marker in the output directory.
RunResult run_experiment(const RunConfig& config, std::ostream& log,
                         std::shared_ptr<HttpTransport> transport = nullptr);

// Writes content to out_dir/name, creating the directory.
void write_output(const std::filesystem::path& out_dir, const std::string& name,
                  std::string_view content);

}  // namespace popbias
