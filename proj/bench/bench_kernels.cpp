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
// Parallel kernels against their single-threaded references, on one
// synthetic dataset shared by all benchmarks.
#include <benchmark/benchmark.h>

#include "popbias/ingest.hpp"
#include "popbias/matcher.hpp"
#include "popbias/metrics.hpp"
#include "popbias/popularity.hpp"
#include "popbias/recclient.hpp"
#include "popbias/synth.hpp"

using namespace popbias;

namespace {

struct Workload {
  std::string ratings_csv;
  InteractionSet all;
  SplitPair split;
  std::vector<ItemId> catalog;
  TitleMap titles;
  ItemStats stats;
  PopularityPartition partition;
  UserSegments segments;
  TargetMap targets;
  RelevanceSet relevance;
  std::vector<RawRecommendation> recs;
  std::unique_ptr<CatalogIndex> index;
  std::vector<MatchedList> lists;

  Workload() {
    SyntheticConfig sc;
    sc.users = 5000;
    sc.items = 5000;
    const auto data = generate_synthetic(sc);
    ratings_csv = to_movielens_ratings(data.interactions);
    all = parse_interactions(ratings_csv, DatasetFormat::MovieLens);
    split = temporal_split(all, 0.7);
    titles = data.titles;
    for (const auto& [item, title] : titles) catalog.push_back(item);
    stats = compute_item_stats(split.train, catalog);
    partition = classify_items(stats, 0.2);
    segments = classify_users(split.train, partition, 0.5);
    targets = user_targets(segments);
    relevance = build_relevance(split.test);
    for (UserId u : split.test.users()) {
      PromptRequest req;
      req.user = u;
      recs.push_back(simulate_recommendations(req, stats, titles, 1.0, 42));
      // a typo per list keeps the fuzzy path busy
      std::string& t = recs.back().titles.back();
      if (t.size() > 3) t.erase(2, 1);
    }
    index = std::make_unique<CatalogIndex>(titles);
    lists = match_all(recs, *index, kDefaultFuzzyThreshold);
  }
};

const Workload& workload() {
  static const Workload w;
  return w;
}

void BM_parse_parallel(benchmark::State& state) {
  const auto& w = workload();
  for (auto _ : state) {
    benchmark::DoNotOptimize(parse_interactions(w.ratings_csv, DatasetFormat::MovieLens));
  }
  state.SetBytesProcessed(state.iterations() * static_cast<std::int64_t>(w.ratings_csv.size()));
}

void BM_parse_serial(benchmark::State& state) {
  const auto& w = workload();
  for (auto _ : state) {
    benchmark::DoNotOptimize(
        reference::parse_interactions_serial(w.ratings_csv, DatasetFormat::MovieLens));
  }
  state.SetBytesProcessed(state.iterations() * static_cast<std::int64_t>(w.ratings_csv.size()));
}

void BM_item_stats_parallel(benchmark::State& state) {
  const auto& w = workload();
  for (auto _ : state) benchmark::DoNotOptimize(compute_item_stats(w.split.train, w.catalog));
}

void BM_item_stats_serial(benchmark::State& state) {
  const auto& w = workload();
  for (auto _ : state) {
    benchmark::DoNotOptimize(reference::compute_item_stats_serial(w.split.train, w.catalog));
  }
}

void BM_match_parallel(benchmark::State& state) {
  const auto& w = workload();
  for (auto _ : state) {
    benchmark::DoNotOptimize(match_all(w.recs, *w.index, kDefaultFuzzyThreshold));
  }
}

void BM_match_serial(benchmark::State& state) {
  const auto& w = workload();
  for (auto _ : state) {
    benchmark::DoNotOptimize(
        reference::match_all_serial(w.recs, *w.index, kDefaultFuzzyThreshold));
  }
}

void BM_evaluate_parallel(benchmark::State& state) {
  const auto& w = workload();
  for (auto _ : state) {
    benchmark::DoNotOptimize(
        evaluate(w.lists, w.partition, w.targets, w.segments, w.relevance, {}));
  }
}

void BM_evaluate_serial(benchmark::State& state) {
  const auto& w = workload();
  for (auto _ : state) {
    benchmark::DoNotOptimize(
        reference::evaluate_serial(w.lists, w.partition, w.targets, w.segments, w.relevance, {}));
  }
}

}  // namespace

BENCHMARK(BM_parse_parallel)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_parse_serial)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_item_stats_parallel)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_item_stats_serial)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_match_parallel)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_match_serial)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_evaluate_parallel)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_evaluate_serial)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
