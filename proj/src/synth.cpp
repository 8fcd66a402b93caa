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
#include "popbias/synth.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <numeric>
#include <sstream>

#include "popbias/csv.hpp"

namespace popbias {

ZipfSampler::ZipfSampler(std::size_t n, double exponent) {
  if (n == 0) throw Error("zipf sampler needs at least one rank");
  if (!(exponent >= 0.0)) throw Error("zipf exponent must be non-negative");
  cdf_.resize(n);
  double acc = 0.0;
  for (std::size_t r = 0; r < n; ++r) {
    acc += 1.0 / std::pow(static_cast<double>(r + 1), exponent);
    cdf_[r] = acc;
  }
  for (double& c : cdf_) c /= acc;
  cdf_.back() = 1.0;
}

std::size_t ZipfSampler::operator()(Rng& rng) const {
  const double u = rng.uniform();
  const auto it = std::lower_bound(cdf_.begin(), cdf_.end(), u);
  return static_cast<std::size_t>(it - cdf_.begin());
}

double ZipfSampler::probability(std::size_t rank) const {
  if (rank >= cdf_.size()) return 0.0;
  return rank == 0 ? cdf_[0] : cdf_[rank] - cdf_[rank - 1];
}

namespace {

constexpr const char* kAdjectives[] = {
    "Silent", "Crimson", "Hidden", "Broken", "Golden",  "Last",
    "Distant", "Frozen", "Wild",  "Secret", "Electric", "Lonely",
    "Burning", "Hollow", "Velvet", "Iron",  "Paper",   "Midnight",
    "Falling", "Northern"};
constexpr const char* kNouns[] = {
    "River",  "Garden", "Kingdom", "Signal", "Harbor", "Mirror", "Orchard",
    "Empire", "Witness", "Lantern", "Frontier", "Summer", "Engine", "Island",
    "Promise", "Circus", "Horizon", "Letter", "Station", "Voyage"};

std::string invented_title(std::size_t index, Rng& rng) {
  constexpr std::size_t kA = std::size(kAdjectives);
  constexpr std::size_t kN = std::size(kNouns);
  const std::size_t combo = index % (kA * kN);
  const std::size_t round = index / (kA * kN);
  std::string title = kAdjectives[combo / kN];
  title += ' ';
  title += kNouns[combo % kN];
  if (round > 0) title += " " + std::to_string(round + 1);
  const auto year = 1950 + rng.below(70);
  title += " (" + std::to_string(year) + ")";
  if (combo % 7 == 0) title = "The " + title;
  return title;
}

}  // namespace

SyntheticDataset generate_synthetic(const SyntheticConfig& config) {
  if (config.items == 0 || config.users == 0) {
    throw ConfigError("synthetic dataset needs users and items");
  }
  if (config.min_per_user > config.max_per_user) {
    throw ConfigError("min_per_user exceeds max_per_user");
  }
  if (config.max_per_user > config.items) {
    throw ConfigError("max_per_user exceeds the number of items");
  }
  Rng rng(mix_seed({config.seed, 0x73796e7468ULL}));

  // rank -> item id, so that ids carry no popularity signal
  std::vector<std::int64_t> by_rank(config.items);
  std::iota(by_rank.begin(), by_rank.end(), std::int64_t{1});
  rng.shuffle(by_rank);

  SyntheticDataset out;
  for (std::size_t i = 0; i < config.items; ++i) {
    out.titles.emplace(ItemId{static_cast<std::int64_t>(i + 1)},
                       invented_title(i, rng));
  }

  const ZipfSampler zipf(config.items, config.zipf_exponent);
  std::vector<char> taken(config.items, 0);
  std::vector<std::size_t> picked;
  for (std::size_t u = 0; u < config.users; ++u) {
    const double affinity = rng.uniform();
    const std::size_t n =
        rng.between(config.min_per_user, config.max_per_user);
    picked.clear();
    while (picked.size() < n) {
      const std::size_t rank = rng.uniform() < affinity
                                   ? zipf(rng)
                                   : rng.below(config.items);
      if (taken[rank]) continue;
      taken[rank] = 1;
      picked.push_back(rank);
    }
    std::int64_t clock = 1'000'000'000 + static_cast<std::int64_t>(u) * 1000;
    for (std::size_t rank : picked) {
      taken[rank] = 0;
      clock += 1 + static_cast<std::int64_t>(rng.below(86'400));
      const double rating = static_cast<double>(rng.between(1, 10)) / 2.0;
      out.interactions.push_back({UserId{static_cast<std::int64_t>(u + 1)},
                                  ItemId{by_rank[rank]}, rating, clock});
    }
  }
  return out;
}

std::string to_movielens_ratings(std::span<const Interaction> interactions) {
  std::string out = "userId,movieId,rating,timestamp\n";
  char buf[32];
  for (const auto& x : interactions) {
    out += std::to_string(raw(x.user));
    out += ',';
    out += std::to_string(raw(x.item));
    out += ',';
    auto [end, ec] = std::to_chars(buf, buf + sizeof buf, x.rating);
    out.append(buf, end);
    out += ',';
    if (x.timestamp) out += std::to_string(*x.timestamp);
    out += '\n';
  }
  return out;
}

std::string to_movielens_movies(const TitleMap& titles) {
  std::string out = "movieId,title,genres\n";
  for (const auto& [item, title] : titles) {
    out += std::to_string(raw(item));
    out += ',';
    out += csv::escape(title, ',');
    out += ",(no genres listed)\n";
  }
  return out;
}

}  // namespace popbias
