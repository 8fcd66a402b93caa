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
// popbias: command-line driver for the popularity-bias evaluation pipeline.
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "popbias/hash.hpp"
#include "popbias/pipeline.hpp"
#include "popbias/synth.hpp"

using namespace popbias;

namespace {

struct GlobalFlags {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out_dir;
  bool simulate = false;
  std::vector<std::string> overrides;
};

RunConfig resolve_config(const GlobalFlags& flags) {
  RunConfig config =
      flags.config_path.empty() ? RunConfig{} : load_config(flags.config_path);
  for (const auto& kv : flags.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("--set expects key=value, got '" + kv + "'");
    }
    config.set(kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (flags.seed) config.set("seed", std::to_string(*flags.seed));
  if (!flags.out_dir.empty()) config.out_dir = flags.out_dir;
  if (flags.simulate) config.provider = ProviderMode::Simulate;
  config.validate();
  return config;
}

std::filesystem::path out_path(const RunConfig& config) {
  return std::filesystem::path(config.out_dir);
}

std::string manifest_line(const std::string& hash) {
  return "# manifest_sha256=" + hash + "\n";
}

std::string manifest_record(const std::string& hash) {
  return "{\"manifest_sha256\":\"" + hash + "\"}\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Popularity-bias evaluation for LLM recommenders"};
  app.require_subcommand(1);
  app.fallthrough();

  GlobalFlags flags;
  app.add_option("--config", flags.config_path, "key = value configuration file");
  app.add_option("--seed", flags.seed, "global seed");
  app.add_option("--out", flags.out_dir, "output directory");
  app.add_flag("--simulate", flags.simulate, "use the offline simulator");
  app.add_option("--set", flags.overrides, "override a config key (key=value)");

  bool stats_json = false;
  auto* ingest = app.add_subcommand("ingest-stats", "dataset summary and user group counts");
  ingest->add_flag("--json", stats_json, "emit JSON");

  auto* partition = app.add_subcommand("partition", "write the popular/niche item partition");
  auto* segment = app.add_subcommand("segment", "write user segments per threshold");
  auto* prompts = app.add_subcommand("prompts", "write the prompt for every cell and user");
  auto* query = app.add_subcommand("query", "obtain responses (cache first)");

  std::string responses_path;
  auto* score = app.add_subcommand("score", "match and score a responses file");
  score->add_option("--responses", responses_path,
                    "responses file (default <out>/responses.jsonl)");

  auto* run = app.add_subcommand("run", "full pipeline");

  SyntheticConfig synth_config;
  auto* synth = app.add_subcommand("synth", "write a synthetic MovieLens-shaped dataset");
  synth->add_option("--users", synth_config.users);
  synth->add_option("--items", synth_config.items);
  synth->add_option("--min-per-user", synth_config.min_per_user);
  synth->add_option("--max-per-user", synth_config.max_per_user);
  synth->add_option("--zipf", synth_config.zipf_exponent);

  CLI11_PARSE(app, argc, argv);

  const char* stage = "config";
  try {
    if (synth->parsed()) {
      if (flags.seed) synth_config.seed = *flags.seed;
      const std::filesystem::path dir(flags.out_dir.empty() ? "synth" : flags.out_dir);
      const SyntheticDataset data = generate_synthetic(synth_config);
      write_output(dir, "ratings.csv", to_movielens_ratings(data.interactions));
      write_output(dir, "movies.csv", to_movielens_movies(data.titles));
      std::cout << "wrote " << data.interactions.size() << " interactions to "
                << (dir / "ratings.csv").string() << '\n';
      return EXIT_SUCCESS;
    }

    const RunConfig config = resolve_config(flags);

    if (ingest->parsed()) {
      const IngestStats stats = compute_ingest_stats(config);
      std::cout << (stats_json ? ingest_stats_json(stats) : format_ingest_stats(stats));
      return EXIT_SUCCESS;
    }

    if (run->parsed()) {
      stage = "run";
      const RunResult result = run_experiment(config, std::cerr);
      std::cout << emit_table(result.cells, TableFormat::Csv);
      return EXIT_SUCCESS;
    }

    const PreparedData data = prepare_data(config);
    const auto dir = out_path(config);

    if (partition->parsed()) {
      stage = "popularity";
      const std::string hash = sha256_hex(build_manifest(config, data, {}));
      write_output(dir, "partition.csv",
                   manifest_line(hash) + export_partition(data.stats, data.partition));
      std::cout << data.partition.popular().size() << " popular, "
                << data.partition.niche().size() << " niche items; popular share "
                << format_fixed3(popular_interaction_share(data.stats, data.partition))
                << '\n';
      return EXIT_SUCCESS;
    }

    if (segment->parsed()) {
      stage = "popularity";
      const std::string hash = sha256_hex(build_manifest(config, data, {}));
      for (const auto& [t, seg] : data.segments) {
        write_output(dir, "segments_" + threshold_tag(t) + ".csv",
                     manifest_line(hash) + export_segments(seg));
        std::cout << "(" << threshold_tag(t) << ") P " << seg.count(UserGroup::P)
                  << "  N " << seg.count(UserGroup::N) << '\n';
      }
      return EXIT_SUCCESS;
    }

    const auto jobs = build_prompts(config, data);
    if (prompts->parsed()) {
      stage = "prompts";
      std::string text =
          manifest_record(sha256_hex(build_manifest(config, data, {})));
      for (const auto& job : jobs) text += prompt_record(job.request, job.prompt) + "\n";
      write_output(dir, "prompts.jsonl", text);
      std::cout << jobs.size() << " prompts\n";
      return EXIT_SUCCESS;
    }

    if (query->parsed()) {
      QueryStats qs;
      const auto recs = run_queries(config, data, jobs, &qs);
      stage = "report";
      const std::string manifest = build_manifest(config, data, qs.returned_models);
      write_output(dir, "manifest.json", manifest);
      write_output(dir, "responses.jsonl",
                   manifest_record(sha256_hex(manifest)) +
                       responses_jsonl(jobs, recs, qs.returned_models));
      std::cout << recs.size() << " responses (" << qs.cache_hits << " cached, "
                << qs.live_requests << " live)\n";
      return EXIT_SUCCESS;
    }

    if (score->parsed()) {
      stage = "score";
      const std::string path = responses_path.empty()
                                   ? (dir / "responses.jsonl").string()
                                   : responses_path;
      const ResponseFile file = parse_responses(read_source(path));
      const std::string manifest = build_manifest(config, data, file.returned_models);
      const std::string hash = sha256_hex(manifest);
      const ScoredRun scored = score_responses(config, data, file.responses, hash);
      stage = "report";
      write_output(dir, "manifest.json", manifest);
      write_reports(dir, data, scored, hash);
      std::cout << emit_table(scored.cells, TableFormat::Csv);
      return EXIT_SUCCESS;
    }
  } catch (const StageError& e) {
    std::cerr << "popbias: " << e.what() << '\n';
    return 2;
  } catch (const ConfigError& e) {
    std::cerr << "popbias: configuration: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "popbias: stage " << stage << ": " << e.what() << '\n';
    return 2;
  }
  return EXIT_SUCCESS;
}
