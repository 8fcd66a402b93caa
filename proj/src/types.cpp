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
#include "popbias/types.hpp"

#include <algorithm>
#include <cctype>
#include <string>

namespace popbias {

std::string_view to_string(StrategyKind kind) {
  switch (kind) {
    case StrategyKind::Vanilla:
      return "Vanilla";
    case StrategyKind::Diversity:
      return "Diversity";
    case StrategyKind::PopDebiasing:
      return "Pop.Debiasing";
    case StrategyKind::FairLRM:
      return "FairLRM";
  }
  return "?";
}

StrategyKind parse_strategy(std::string_view text) {
  std::string t(text);
  std::transform(t.begin(), t.end(), t.begin(),
                 [](unsigned char c) { return std::tolower(c); });
  if (t == "vanilla") return StrategyKind::Vanilla;
  if (t == "diversity") return StrategyKind::Diversity;
  if (t == "popdebiasing" || t == "pop.debiasing" || t == "pop_debiasing")
    return StrategyKind::PopDebiasing;
  if (t == "fairlrm") return StrategyKind::FairLRM;
  throw ConfigError("unknown strategy '" + std::string(text) + "'");
}

std::string_view to_string(ItemClass c) {
  return c == ItemClass::Popular ? "popular" : "niche";
}

std::string_view to_string(UserGroup g) { return g == UserGroup::P ? "P" : "N"; }

}  // namespace popbias
