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
#include <span>
#include <string>
#include <vector>

#include "popbias/ingest.hpp"
#include "popbias/random.hpp"
#include "popbias/types.hpp"

namespace popbias {

// Samples ranks 0..n-1 with P(r) proportional to 1 / (r + 1)^exponent by
// inverse CDF over the cumulative weights.
class ZipfSampler {
 public:
  ZipfSampler(std::size_t n, double exponent);
  std::size_t operator()(Rng& rng) const;
  double probability(std::size_t rank) const;
  std::size_t size() const { return cdf_.size(); }

 private:
  std::vector<double> cdf_;
};

// Synthetic MovieLens-shaped dataset. Item popularity follows Zipf; each
// user draws a mainstream affinity a ~ U(0, 1) and samples each of their
// n ~ U[min, max] distinct items from a * Zipf + (1 - a) * uniform, so
// the population spans niche-leaning to popularity-leaning users.
// Timestamps increase along each user's history.
struct SyntheticConfig {
  std::size_t users = 200;
  std::size_t items = 500;
  std::size_t min_per_user = 30;
  std::size_t max_per_user = 80;
  double zipf_exponent = 1.0;
  std::uint64_t seed = 7;
};

struct SyntheticDataset {
  std::vector<Interaction> interactions;
  TitleMap titles;
};

SyntheticDataset generate_synthetic(const SyntheticConfig& config);

// MovieLens file layouts ("userId,movieId,rating,timestamp" and
// "movieId,title,genres").
std::string to_movielens_ratings(std::span<const Interaction> interactions);
std::string to_movielens_movies(const TitleMap& titles);

}  // namespace popbias
