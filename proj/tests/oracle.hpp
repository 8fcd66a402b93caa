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
// Brute-force reference for the evaluation metrics. Works on plain item ids
// so it shares nothing with the library beyond the definitions themselves.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <set>
#include <stdexcept>
#include <vector>

namespace oracle {

using Item = std::int64_t;
// nullopt marks a title that resolved to nothing.
using Ranked = std::vector<std::optional<Item>>;

enum class Kind { KL, Hellinger, ChiSq };

inline double div(double p0, double p1, double q0, double q1, Kind kind) {
  const double p[2] = {p0, p1};
  const double q[2] = {q0, q1};
  double acc = 0.0;
  for (int b = 0; b < 2; ++b) {
    switch (kind) {
      case Kind::KL:
        if (p[b] > 0) acc += p[b] * std::log(p[b] / q[b]);
        break;
      case Kind::Hellinger: {
        const double d = std::sqrt(p[b]) - std::sqrt(q[b]);
        acc += d * d;
        break;
      }
      case Kind::ChiSq:
        acc += (p[b] - q[b]) * (p[b] - q[b]) / q[b];
        break;
    }
  }
  return kind == Kind::Hellinger ? std::sqrt(acc) / std::sqrt(2.0) : acc;
}

// Keeps the first occurrence of every item; later repeats behave as misses.
inline Ranked dedupe(const Ranked& list) {
  Ranked out;
  std::set<Item> seen;
  for (const auto& slot : list) {
    if (slot && seen.insert(*slot).second) {
      out.push_back(slot);
    } else {
      out.push_back(std::nullopt);
    }
  }
  return out;
}

inline double mc(double target_pop, const Ranked& prefix,
                 const std::set<Item>& popular, Kind kind, double alpha) {
  int pop = 0;
  int all = 0;
  for (const auto& slot : dedupe(prefix)) {
    if (!slot) continue;
    ++all;
    if (popular.count(*slot)) ++pop;
  }
  if (all == 0) return 1.0;
  const double q_pop = static_cast<double>(pop) / all;
  auto sm = [alpha](double x) { return (1 - alpha) * x + alpha * 0.5; };
  const double p0 = sm(target_pop), p1 = sm(1 - target_pop);
  const double num = div(p0, p1, sm(q_pop), sm(1 - q_pop), kind);
  const double worst = std::max(div(p0, p1, sm(1), sm(0), kind),
                                div(p0, p1, sm(0), sm(1), kind));
  if (worst <= 0) return 0.0;
  return std::clamp(num / worst, 0.0, 1.0);
}

inline double rmc(double target_pop, const Ranked& list,
                  const std::set<Item>& popular, Kind kind, int depth,
                  double alpha) {
  if (list.empty()) return 1.0;
  double sum = 0.0;
  for (int n = 1; n <= depth; ++n) {
    const std::size_t len = std::min<std::size_t>(n, list.size());
    sum += mc(target_pop, Ranked(list.begin(), list.begin() + len), popular,
              kind, alpha);
  }
  return sum / depth;
}

inline double ltc(const std::vector<Ranked>& lists, const std::set<Item>& niche) {
  std::set<Item> hit;
  for (const auto& list : lists) {
    for (const auto& slot : list) {
      if (slot && niche.count(*slot)) hit.insert(*slot);
    }
  }
  return static_cast<double>(hit.size()) / niche.size();
}

struct Ranking {
  double mrr = 0;
  double precision = 0;
  double recall = 0;
  double f1 = 0;
  int users = 0;
};

// Users whose relevant set is empty are skipped.
inline Ranking ranking(const std::vector<Ranked>& lists,
                       const std::vector<std::set<Item>>& relevant, int k) {
  Ranking r;
  for (std::size_t u = 0; u < lists.size(); ++u) {
    if (relevant[u].empty()) continue;
    ++r.users;
    const Ranked list = dedupe(lists[u]);
    double rr = 0;
    int hits = 0;
    for (int i = 0; i < k && i < static_cast<int>(list.size()); ++i) {
      if (list[i] && relevant[u].count(*list[i])) {
        if (rr == 0) rr = 1.0 / (i + 1);
        ++hits;
      }
    }
    const double p = static_cast<double>(hits) / k;
    const double rec = static_cast<double>(hits) / relevant[u].size();
    r.mrr += rr;
    r.precision += p;
    r.recall += rec;
    r.f1 += (p + rec) > 0 ? 2 * p * rec / (p + rec) : 0.0;
  }
  if (r.users) {
    r.mrr /= r.users;
    r.precision /= r.users;
    r.recall /= r.users;
    r.f1 /= r.users;
  }
  return r;
}

}  // namespace oracle
