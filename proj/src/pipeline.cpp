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
#include "popbias/pipeline.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <exception>
#include <fstream>
#include <ostream>
#include <set>
#include <sstream>

#include "json.hpp"
#include "popbias/hash.hpp"

namespace popbias {

namespace {

using nlohmann::json;

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

std::string render(double v) {
  char buf[32];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, end);
}

double to_double(std::string_view key, std::string_view value) {
  double out = 0.0;
  auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
  if (ec != std::errc() || ptr != value.data() + value.size()) {
    throw ConfigError("'" + std::string(key) + "' expects a number, got '" +
                      std::string(value) + "'");
  }
  return out;
}

std::uint64_t to_unsigned(std::string_view key, std::string_view value) {
  std::uint64_t out = 0;
  auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
  if (ec != std::errc() || ptr != value.data() + value.size()) {
    throw ConfigError("'" + std::string(key) +
                      "' expects a non-negative integer, got '" +
                      std::string(value) + "'");
  }
  return out;
}

std::vector<std::string_view> split_list(std::string_view value) {
  std::vector<std::string_view> parts;
  while (!value.empty()) {
    const auto comma = value.find(',');
    const auto part = trim(value.substr(0, comma));
    if (!part.empty()) parts.push_back(part);
    if (comma == std::string_view::npos) break;
    value.remove_prefix(comma + 1);
  }
  return parts;
}

// Runs fn, attributing any failure that is not already a StageError.
template <typename Fn>
auto in_stage(const char* stage, Fn&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const StageError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError(stage, e.what());
  }
}

std::string cell_slug(const PromptStrategy& s) {
  std::string slug(to_string(s.kind));
  slug.erase(std::remove(slug.begin(), slug.end(), '.'), slug.end());
  std::transform(slug.begin(), slug.end(), slug.begin(),
                 [](unsigned char c) { return std::tolower(c); });
  if (s.threshold) slug += "_" + threshold_tag(*s.threshold);
  return slug;
}

std::string manifest_line(std::string_view hash) {
  return "# manifest_sha256=" + std::string(hash) + "\n";
}

std::string manifest_record(std::string_view hash) {
  return json{{"manifest_sha256", hash}}.dump() + "\n";
}

std::vector<ItemId> catalog_ids(const TitleMap& titles,
                                const InteractionSet& set) {
  std::vector<ItemId> ids;
  if (!titles.empty()) {
    ids.reserve(titles.size());
    for (const auto& [item, title] : titles) ids.push_back(item);
    return ids;
  }
  for (const auto& x : set.interactions()) ids.push_back(x.item);
  std::sort(ids.begin(), ids.end());
  ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
  return ids;
}

std::size_t distinct_items(const InteractionSet& set) {
  return catalog_ids({}, set).size();
}

}  // namespace

// --- configuration -----------------------------------------------------------

void RunConfig::set(std::string_view key, std::string_view value) {
  value = trim(value);
  if (key == "ratings") {
    ratings_path = value;
  } else if (key == "catalog") {
    catalog_path = value;
  } else if (key == "format") {
    try {
      format = parse_format(value);
    } catch (const Error& e) {
      throw ConfigError(e.what());
    }
  } else if (key == "min_interactions") {
    min_interactions = to_unsigned(key, value);
  } else if (key == "train_ratio") {
    train_ratio = to_double(key, value);
  } else if (key == "pareto_fraction") {
    pareto_fraction = to_double(key, value);
  } else if (key == "thresholds") {
    thresholds.clear();
    for (auto part : split_list(value)) thresholds.push_back(to_double(key, part));
  } else if (key == "strategies") {
    strategies.clear();
    for (auto part : split_list(value)) strategies.push_back(parse_strategy(part));
  } else if (key == "list_length") {
    list_length = to_unsigned(key, value);
  } else if (key == "k") {
    k = to_unsigned(key, value);
  } else if (key == "depth") {
    depth = to_unsigned(key, value);
  } else if (key == "divergence") {
    try {
      divergence = parse_divergence(value);
    } catch (const Error& e) {
      throw ConfigError(e.what());
    }
  } else if (key == "smoothing") {
    smoothing = to_double(key, value);
  } else if (key == "fuzzy_threshold") {
    fuzzy_threshold = to_double(key, value);
  } else if (key == "target") {
    if (value == "user") {
      target = TargetMode::User;
    } else if (value == "global") {
      target = TargetMode::Global;
    } else {
      throw ConfigError("target must be 'user' or 'global'");
    }
  } else if (key == "rating_floor") {
    if (value.empty() || value == "none") {
      rating_floor.reset();
    } else {
      rating_floor = to_double(key, value);
    }
  } else if (key == "history_size") {
    history_size = to_unsigned(key, value);
  } else if (key == "max_users") {
    max_users = to_unsigned(key, value);
  } else if (key == "provider") {
    if (value == "simulate") {
      provider = ProviderMode::Simulate;
    } else if (value == "live") {
      provider = ProviderMode::Live;
    } else {
      throw ConfigError("provider must be 'simulate' or 'live'");
    }
  } else if (key == "bias_exponent") {
    bias_exponent = to_double(key, value);
  } else if (key == "endpoint") {
    live.endpoint = value;
  } else if (key == "model") {
    live.model = value;
  } else if (key == "api_key_env") {
    live.api_key_env = value;
  } else if (key == "max_in_flight") {
    live.max_in_flight = to_unsigned(key, value);
  } else if (key == "timeout_seconds") {
    live.timeout_seconds = to_double(key, value);
  } else if (key == "retry_budget") {
    live.retry_budget = to_unsigned(key, value);
  } else if (key == "rate_limit") {
    live.rate_limit_per_second = to_double(key, value);
  } else if (key == "temperature") {
    live.temperature = to_double(key, value);
  } else if (key == "out") {
    out_dir = value;
  } else if (key == "cache") {
    cache_path = value;
  } else if (key == "seed") {
    seed = to_unsigned(key, value);
    live.seed = seed;
  } else {
    throw ConfigError("unknown configuration key '" + std::string(key) + "'");
  }
}

void RunConfig::validate() const {
  auto unit_open = [](double v) { return v > 0.0 && v < 1.0; };
  if (min_interactions < 2) throw ConfigError("min_interactions must be >= 2");
  if (!unit_open(train_ratio)) throw ConfigError("train_ratio must be in (0, 1)");
  if (!unit_open(pareto_fraction)) {
    throw ConfigError("pareto_fraction must be in (0, 1)");
  }
  if (thresholds.empty()) throw ConfigError("at least one threshold is required");
  for (double t : thresholds) {
    if (!unit_open(t)) throw ConfigError("thresholds must be in (0, 1)");
  }
  if (std::set<double>(thresholds.begin(), thresholds.end()).size() !=
      thresholds.size()) {
    throw ConfigError("thresholds must be distinct");
  }
  if (strategies.empty()) throw ConfigError("at least one strategy is required");
  if (std::set<StrategyKind>(strategies.begin(), strategies.end()).size() !=
      strategies.size()) {
    throw ConfigError("strategies must be distinct");
  }
  if (list_length < 1) throw ConfigError("list_length must be >= 1");
  if (k < 1) throw ConfigError("k must be >= 1");
  if (depth < 1) throw ConfigError("depth must be >= 1");
  if (!unit_open(smoothing)) throw ConfigError("smoothing must be in (0, 1)");
  if (!(fuzzy_threshold > 0.0 && fuzzy_threshold <= 1.0)) {
    throw ConfigError("fuzzy_threshold must be in (0, 1]");
  }
  if (!(bias_exponent >= 0.0)) throw ConfigError("bias_exponent must be >= 0");
  if (provider == ProviderMode::Live) live.validate();
}

std::string RunConfig::canonical() const {
  std::map<std::string, std::string> kv;
  kv["format"] = to_string(format);
  kv["min_interactions"] = std::to_string(min_interactions);
  kv["train_ratio"] = render(train_ratio);
  kv["pareto_fraction"] = render(pareto_fraction);
  std::string list;
  for (double t : thresholds) list += (list.empty() ? "" : ",") + render(t);
  kv["thresholds"] = list;
  list.clear();
  for (auto s : strategies) {
    list += (list.empty() ? "" : ",") + std::string(to_string(s));
  }
  kv["strategies"] = list;
  kv["list_length"] = std::to_string(list_length);
  kv["k"] = std::to_string(k);
  kv["depth"] = std::to_string(depth);
  kv["divergence"] = to_string(divergence);
  kv["smoothing"] = render(smoothing);
  kv["fuzzy_threshold"] = render(fuzzy_threshold);
  kv["target"] = target == TargetMode::User ? "user" : "global";
  kv["rating_floor"] = rating_floor ? render(*rating_floor) : "none";
  kv["history_size"] = std::to_string(history_size);
  kv["max_users"] = std::to_string(max_users);
  kv["seed"] = std::to_string(seed);
  if (provider == ProviderMode::Simulate) {
    kv["provider"] = "simulate";
    kv["bias_exponent"] = render(bias_exponent);
  } else {
    kv["provider"] = "live";
    kv["endpoint"] = live.endpoint;
    kv["model"] = live.model;
    kv["temperature"] = render(live.temperature);
  }
  std::string out;
  for (const auto& [key, value] : kv) out += key + " = " + value + "\n";
  return out;
}

std::string RunConfig::resolved_cache_path() const {
  if (!cache_path.empty()) return cache_path;
  return (std::filesystem::path(out_dir) / "replay_cache.jsonl").string();
}

void apply_config_text(RunConfig& config, std::string_view text) {
  std::size_t line_no = 0;
  while (!text.empty()) {
    ++line_no;
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{}
                                        : text.substr(nl + 1);
    if (const auto hash = line.find('#'); hash != std::string_view::npos) {
      line = line.substr(0, hash);
    }
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw ConfigError("config line " + std::to_string(line_no) +
                        ": expected key = value");
    }
    config.set(trim(line.substr(0, eq)), line.substr(eq + 1));
  }
}

RunConfig load_config(const std::string& path) {
  RunConfig config;
  std::string text;
  try {
    text = read_source(path);
  } catch (const Error& e) {
    throw ConfigError(e.what());
  }
  apply_config_text(config, text);
  return config;
}

// --- data preparation ----------------------------------------------------------

PreparedData prepare_data(const RunConfig& config) {
  PreparedData data;
  in_stage("ingest", [&] {
    if (config.ratings_path.empty()) throw Error("no ratings path configured");
    const std::string ratings = read_source(config.ratings_path);
    data.checksums["ratings"] = sha256_hex(ratings);
    data.raw = parse_interactions(ratings, config.format);
    if (!config.catalog_path.empty()) {
      const std::string catalog = read_source(config.catalog_path);
      data.checksums["catalog"] = sha256_hex(catalog);
      data.titles = parse_catalog(catalog, config.format);
    }
    data.filtered = filter_min_interactions(data.raw, config.min_interactions);
    if (data.filtered.empty()) {
      throw Error("no user has at least " +
                  std::to_string(config.min_interactions) + " interactions");
    }
    data.split = temporal_split(data.filtered, config.train_ratio);
  });
  in_stage("popularity", [&] {
    data.catalog = catalog_ids(data.titles, data.raw);
    if (data.titles.empty()) {
      // ids-only dataset: placeholder titles keep prompts and matching usable
      for (ItemId item : data.catalog) {
        data.titles.emplace(item, "Item " + std::to_string(raw(item)));
      }
    }
    data.stats = compute_item_stats(data.split.train, data.catalog);
    data.partition = classify_items(data.stats, config.pareto_fraction);
    for (double t : config.thresholds) {
      data.segments.emplace(t, classify_users(data.split.train, data.partition, t));
    }
  });
  const auto users = data.split.test.users();
  const std::size_t n = config.max_users && config.max_users < users.size()
                            ? config.max_users
                            : users.size();
  data.eval_users.assign(users.begin(), users.begin() + static_cast<std::ptrdiff_t>(n));
  return data;
}

// --- dataset summary -----------------------------------------------------------

IngestStats compute_ingest_stats(const RunConfig& config) {
  return in_stage("ingest", [&] {
    if (config.ratings_path.empty()) throw Error("no ratings path configured");
    IngestStats out;
    const InteractionSet raw_set =
        parse_interactions(read_source(config.ratings_path), config.format);
    TitleMap titles;
    if (!config.catalog_path.empty()) {
      titles = parse_catalog(read_source(config.catalog_path), config.format);
    }
    out.users = raw_set.user_count();
    out.items_rated = distinct_items(raw_set);
    out.catalog_items = titles.size();
    out.interactions = raw_set.size();
    out.timestamps = raw_set.fully_timestamped();

    const auto catalog = catalog_ids(titles, raw_set);
    {
      const ItemStats stats = compute_item_stats(raw_set, catalog);
      const PopularityPartition part =
          classify_items(stats, config.pareto_fraction);
      for (double t : config.thresholds) {
        const UserSegments seg = classify_users(raw_set, part, t);
        out.raw_groups.push_back(
            {t, seg.count(UserGroup::P), seg.count(UserGroup::N)});
      }
    }
    const InteractionSet filtered =
        filter_min_interactions(raw_set, config.min_interactions);
    out.filtered_users = filtered.user_count();
    out.filtered_items_rated = distinct_items(filtered);
    out.filtered_interactions = filtered.size();
    if (!filtered.empty()) {
      const SplitPair split = temporal_split(filtered, config.train_ratio);
      const ItemStats stats = compute_item_stats(split.train, catalog);
      const PopularityPartition part =
          classify_items(stats, config.pareto_fraction);
      for (double t : config.thresholds) {
        const UserSegments seg = classify_users(split.train, part, t);
        out.protocol_groups.push_back(
            {t, seg.count(UserGroup::P), seg.count(UserGroup::N)});
      }
    }
    return out;
  });
}

std::string format_ingest_stats(const IngestStats& s) {
  std::ostringstream out;
  out << "users               " << s.users << '\n'
      << "items rated         " << s.items_rated << '\n'
      << "catalog items       " << s.catalog_items << '\n'
      << "interactions        " << s.interactions << '\n'
      << "timestamps          " << (s.timestamps ? "yes" : "no (file order)")
      << '\n'
      << "after filter:\n"
      << "  users             " << s.filtered_users << '\n'
      << "  items rated       " << s.filtered_items_rated << '\n'
      << "  interactions      " << s.filtered_interactions << '\n'
      << "user groups (variant, threshold, P, N):\n";
  auto rows = [&](const char* variant, const std::vector<GroupCounts>& groups) {
    for (const auto& g : groups) {
      out << "  " << variant << "  (" << threshold_tag(g.threshold) << ")  P "
          << g.p << "  N " << g.n << '\n';
    }
  };
  rows("raw     ", s.raw_groups);
  rows("protocol", s.protocol_groups);
  return out.str();
}

std::string ingest_stats_json(const IngestStats& s) {
  auto groups = [](const std::vector<GroupCounts>& gs) {
    json arr = json::array();
    for (const auto& g : gs) {
      arr.push_back({{"threshold", g.threshold},
                     {"label", threshold_tag(g.threshold)},
                     {"P", g.p},
                     {"N", g.n}});
    }
    return arr;
  };
  json doc{{"users", s.users},
           {"items_rated", s.items_rated},
           {"catalog_items", s.catalog_items},
           {"interactions", s.interactions},
           {"timestamps", s.timestamps},
           {"filtered_users", s.filtered_users},
           {"filtered_items_rated", s.filtered_items_rated},
           {"filtered_interactions", s.filtered_interactions},
           {"raw_groups", groups(s.raw_groups)},
           {"protocol_groups", groups(s.protocol_groups)}};
  return doc.dump(2) + "\n";
}

// --- prompts and queries -------------------------------------------------------

std::vector<PromptStrategy> experiment_cells(const RunConfig& config) {
  std::vector<PromptStrategy> cells;
  for (StrategyKind kind : config.strategies) {
    if (kind == StrategyKind::Vanilla) {
      cells.push_back({kind, std::nullopt});
      continue;
    }
    for (double t : config.thresholds) cells.push_back({kind, t});
  }
  return cells;
}

std::vector<PromptJob> build_prompts(const RunConfig& config,
                                     const PreparedData& data) {
  return in_stage("prompts", [&] {
    std::vector<PromptJob> jobs;
    for (const PromptStrategy& cell : experiment_cells(config)) {
      const UserSegments* segments = nullptr;
      if (cell.kind == StrategyKind::FairLRM) {
        segments = &data.segments.at(*cell.threshold);
      }
      for (UserId user : data.eval_users) {
        PromptJob job;
        job.strategy = cell;
        job.request.user = user;
        job.request.strategy = cell;
        job.request.list_length = config.list_length;
        if (cell.kind == StrategyKind::FairLRM) {
          job.request.history_sample =
              sample_history(data.split.train, user, data.titles,
                             data.partition, config.history_size);
        }
        job.prompt = build_prompt(job.request, segments);
        jobs.push_back(std::move(job));
      }
    }
    return jobs;
  });
}

std::vector<RawRecommendation> run_queries(
    const RunConfig& config, const PreparedData& data,
    std::span<const PromptJob> jobs, QueryStats* stats,
    std::shared_ptr<HttpTransport> transport) {
  return in_stage("query", [&] {
    std::vector<RawRecommendation> recs(jobs.size());
    QueryStats local;
    if (config.provider == ProviderMode::Simulate) {
      std::exception_ptr failure;
#pragma omp parallel for schedule(static)
      for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(jobs.size()); ++i) {
        try {
          recs[i] = simulate_recommendations(jobs[i].request, data.stats,
                                             data.titles, config.bias_exponent,
                                             config.seed);
        } catch (...) {
#pragma omp critical(popbias_sim_error)
          if (!failure) failure = std::current_exception();
        }
      }
      if (failure) std::rethrow_exception(failure);
      if (stats) *stats = local;
      return recs;
    }

    ReplayCache cache(config.resolved_cache_path());
    const std::string& model = config.live.model;
    // identical prompts (Vanilla has no user context) are fetched once
    std::vector<std::size_t> misses;
    std::set<std::string_view> pending;
    for (std::size_t i = 0; i < jobs.size(); ++i) {
      if (!cache.find(model, jobs[i].prompt) && pending.insert(jobs[i].prompt).second) {
        misses.push_back(i);
      }
    }
    local.cache_hits = jobs.size() - misses.size();
    local.live_requests = misses.size();
    // The client is only built when something must be fetched, so a warm
    // cache reruns without credentials or network.
    std::unique_ptr<ChatClient> client;
    if (!misses.empty()) {
      client = std::make_unique<ChatClient>(
          config.live, transport ? transport : make_http_transport());
      dispatch_bounded(misses.size(), config.live.max_in_flight,
                       [&](std::size_t m) {
                         const PromptJob& job = jobs[misses[m]];
                         request_recommendations(job.request.user,
                                                 job.strategy.kind, job.prompt,
                                                 config.list_length, *client,
                                                 &cache);
                       });
    }
    std::set<std::string> models;
    for (std::size_t i = 0; i < jobs.size(); ++i) {
      const auto entry = cache.find(model, jobs[i].prompt);
      if (!entry) throw Error("replay cache lost a stored response");
      RawRecommendation& rec = recs[i];
      rec.user = jobs[i].request.user;
      rec.strategy = jobs[i].strategy.kind;
      rec.raw_response = entry->response;
      rec.titles = extract_titles(rec.raw_response, config.list_length);
      rec.provenance = Provenance::Live;
      rec.empty_flagged = rec.titles.empty();
      if (!entry->returned_model.empty()) models.insert(entry->returned_model);
    }
    local.returned_models.assign(models.begin(), models.end());
    if (stats) *stats = local;
    return recs;
  });
}

std::string responses_jsonl(std::span<const PromptJob> jobs,
                            std::span<const RawRecommendation> recs,
                            const std::vector<std::string>& returned_models) {
  if (jobs.size() != recs.size()) throw Error("jobs and responses differ in size");
  std::string out = json{{"returned_models", returned_models}}.dump() + "\n";
  for (std::size_t i = 0; i < jobs.size(); ++i) {
    const RawRecommendation& rec = recs[i];
    json record{{"user_id", raw(rec.user)},
                {"strategy", to_string(jobs[i].strategy.kind)},
                {"threshold", nullptr},
                {"provenance", to_string(rec.provenance)},
                {"empty", rec.empty_flagged},
                {"titles", rec.titles},
                {"raw_response", rec.raw_response}};
    if (jobs[i].strategy.threshold) {
      record["threshold"] = *jobs[i].strategy.threshold;
    }
    out += record.dump();
    out += '\n';
  }
  return out;
}

ResponseFile parse_responses(std::string_view text) {
  ResponseFile file;
  std::size_t line_no = 0;
  while (!text.empty()) {
    ++line_no;
    const auto nl = text.find('\n');
    const std::string_view line = trim(text.substr(0, nl));
    text = nl == std::string_view::npos ? std::string_view{}
                                        : text.substr(nl + 1);
    if (line.empty()) continue;
    json record;
    try {
      record = json::parse(line);
    } catch (const json::exception& e) {
      throw ParseError(std::string("malformed response record: ") + e.what(),
                       line_no);
    }
    if (record.contains("returned_models")) {
      file.returned_models =
          record["returned_models"].get<std::vector<std::string>>();
      continue;
    }
    if (record.contains("manifest_sha256")) continue;
    try {
      PromptStrategy strategy;
      strategy.kind = parse_strategy(record.at("strategy").get<std::string>());
      if (!record.at("threshold").is_null()) {
        strategy.threshold = record["threshold"].get<double>();
      }
      RawRecommendation rec;
      rec.user = UserId{record.at("user_id").get<std::int64_t>()};
      rec.strategy = strategy.kind;
      rec.titles = record.at("titles").get<std::vector<std::string>>();
      rec.raw_response = record.at("raw_response").get<std::string>();
      rec.provenance = record.at("provenance").get<std::string>() == "live"
                           ? Provenance::Live
                           : Provenance::Simulated;
      rec.empty_flagged = record.at("empty").get<bool>();
      file.responses.emplace_back(strategy, std::move(rec));
    } catch (const json::exception& e) {
      throw ParseError(std::string("bad response record: ") + e.what(), line_no);
    }
  }
  return file;
}

// --- scoring -------------------------------------------------------------------

ScoredRun score_responses(
    const RunConfig& config, const PreparedData& data,
    std::span<const std::pair<PromptStrategy, RawRecommendation>> responses,
    const std::string& manifest_hash) {
  const auto cells = experiment_cells(config);
  std::vector<std::vector<RawRecommendation>> grouped(cells.size());
  for (const auto& [strategy, rec] : responses) {
    const auto it = std::find(cells.begin(), cells.end(), strategy);
    if (it == cells.end()) {
      throw StageError("score", "response for " + strategy_label(strategy) +
                                    " is not part of this configuration");
    }
    grouped[static_cast<std::size_t>(it - cells.begin())].push_back(rec);
  }

  ScoredRun run;
  run.lists = in_stage("match", [&] {
    const CatalogIndex index(data.titles);
    std::vector<std::vector<MatchedList>> lists;
    for (const auto& recs : grouped) {
      lists.push_back(match_all(recs, index, config.fuzzy_threshold));
    }
    return lists;
  });

  run.cells = in_stage("score", [&] {
    const RelevanceSet relevance =
        build_relevance(data.split.test, config.rating_floor);
    const double global_share =
        popular_interaction_share(data.stats, data.partition);
    EvaluationOptions options;
    options.divergence = config.divergence;
    options.alpha = config.smoothing;
    options.k = config.k;
    options.depth = config.depth;
    const std::string provider =
        config.provider == ProviderMode::Simulate
            ? "simulated(bias=" + render(config.bias_exponent) + ")"
            : "live(" + config.live.model + ")";

    std::vector<ExperimentCell> out;
    for (std::size_t c = 0; c < cells.size(); ++c) {
      if (run.lists[c].empty()) {
        throw Error("no responses for " + strategy_label(cells[c]));
      }
      // Vanilla has no threshold of its own; its group breakdown uses the
      // first configured one.
      const double t = cells[c].threshold.value_or(config.thresholds.front());
      const UserSegments& segments = data.segments.at(t);
      const TargetMap targets = config.target == TargetMode::User
                                    ? user_targets(segments)
                                    : global_targets(segments, global_share);
      out.push_back({cells[c], provider,
                     evaluate(run.lists[c], data.partition, targets, segments,
                              relevance, options),
                     manifest_hash});
    }
    return out;
  });
  return run;
}

std::string build_manifest(const RunConfig& config, const PreparedData& data,
                           const std::vector<std::string>& returned_models) {
  json config_kv = json::object();
  const std::string canonical = config.canonical();
  std::string_view rest = canonical;
  while (!rest.empty()) {
    const auto nl = rest.find('\n');
    const std::string_view line = rest.substr(0, nl);
    rest = nl == std::string_view::npos ? std::string_view{} : rest.substr(nl + 1);
    const auto eq = line.find(" = ");
    config_kv[std::string(line.substr(0, eq))] = std::string(line.substr(eq + 3));
  }
  json cells = json::array();
  for (const auto& cell : experiment_cells(config)) {
    cells.push_back(strategy_label(cell));
  }
  json doc{{"tool", "popbias"},
           {"seed", config.seed},
           {"config", config_kv},
           {"config_sha256", sha256_hex(canonical)},
           {"datasets", data.checksums},
           {"timeline_order", data.raw.fully_timestamped()
                                  ? "timestamp"
                                  : "file order (timestamps absent)"},
           {"cells", cells},
           {"evaluated_users", data.eval_users.size()},
           {"returned_models", returned_models}};
  return doc.dump(2) + "\n";
}

// --- output --------------------------------------------------------------------

void write_output(const std::filesystem::path& out_dir, const std::string& name,
                  std::string_view content) {
  std::filesystem::create_directories(out_dir);
  const auto path = out_dir / name;
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write '" + path.string() + "'");
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
  if (!out) throw Error("short write to '" + path.string() + "'");
}

void write_reports(const std::filesystem::path& out_dir,
                   const PreparedData& data, const ScoredRun& scored,
                   const std::string& manifest_hash) {
  write_output(out_dir, "table.csv", emit_table(scored.cells, TableFormat::Csv));
  write_output(out_dir, "table.json",
               emit_table(scored.cells, TableFormat::Json));
  write_output(out_dir, "metrics.json", metrics_json(scored.cells));
  std::string audit = manifest_record(manifest_hash);
  for (const auto& lists : scored.lists) audit += match_audit_log(lists);
  write_output(out_dir, "match_audit.jsonl", audit);
  for (std::size_t c = 0; c < scored.cells.size(); ++c) {
    write_output(out_dir,
                 "exposure_" + cell_slug(scored.cells[c].strategy) + ".csv",
                 emit_exposure(scored.lists[c], data.stats, data.partition,
                               manifest_hash));
  }
  write_output(out_dir, "partition.csv",
               manifest_line(manifest_hash) +
                   export_partition(data.stats, data.partition));
  for (const auto& [t, segments] : data.segments) {
    write_output(out_dir, "segments_" + threshold_tag(t) + ".csv",
                 manifest_line(manifest_hash) + export_segments(segments));
  }
}

RunResult run_experiment(const RunConfig& config, std::ostream& log,
                         std::shared_ptr<HttpTransport> transport) {
  const std::filesystem::path out_dir(config.out_dir);
  const auto marker = out_dir / "INCOMPLETE";
  const auto started = std::chrono::steady_clock::now();
  auto elapsed = [&] {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                         started)
        .count();
  };
  in_stage("report", [&] {
    std::filesystem::create_directories(out_dir);
    write_output(out_dir, "INCOMPLETE", "run in progress\n");
  });

  try {
    config.validate();
    RunResult result;
    result.out_dir = out_dir;

    const PreparedData data = prepare_data(config);
    log << "[" << elapsed() << "s] ingest: " << data.raw.size()
        << " interactions, " << data.filtered.user_count()
        << " users after filter, " << data.eval_users.size() << " evaluated\n";

    const auto jobs = build_prompts(config, data);
    log << "[" << elapsed() << "s] prompts: " << jobs.size() << '\n';

    const auto recs = run_queries(config, data, jobs, &result.query, transport);
    log << "[" << elapsed() << "s] query: " << recs.size() << " responses ("
        << result.query.cache_hits << " cached, " << result.query.live_requests
        << " live)\n";

    const std::string manifest =
        build_manifest(config, data, result.query.returned_models);
    result.manifest_hash = sha256_hex(manifest);

    std::vector<std::pair<PromptStrategy, RawRecommendation>> responses;
    responses.reserve(recs.size());
    for (std::size_t i = 0; i < recs.size(); ++i) {
      responses.emplace_back(jobs[i].strategy, recs[i]);
    }
    ScoredRun scored =
        score_responses(config, data, responses, result.manifest_hash);
    log << "[" << elapsed() << "s] scored " << scored.cells.size()
        << " cells\n";

    in_stage("report", [&] {
      write_output(out_dir, "manifest.json", manifest);
      std::string prompts = manifest_record(result.manifest_hash);
      for (const auto& job : jobs) prompts += prompt_record(job.request, job.prompt) + "\n";
      write_output(out_dir, "prompts.jsonl", prompts);
      write_output(out_dir, "responses.jsonl",
                   manifest_record(result.manifest_hash) +
                       responses_jsonl(jobs, recs, result.query.returned_models));
      write_reports(out_dir, data, scored, result.manifest_hash);
      std::filesystem::remove(marker);
    });
    log << "[" << elapsed() << "s] wrote " << out_dir.string() << '\n';
    result.cells = std::move(scored.cells);
    return result;
  } catch (const StageError& e) {
    std::ofstream(marker, std::ios::trunc) << e.what() << '\n';
    throw;
  } catch (const ConfigError& e) {
    std::ofstream(marker, std::ios::trunc) << "invalid configuration: "
                                           << e.what() << '\n';
    throw;
  }
}

}  // namespace popbias
