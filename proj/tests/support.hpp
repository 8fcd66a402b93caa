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

#include <unistd.h>

#include <atomic>
#include <filesystem>
#include <string>
#include <vector>

#include "popbias/ingest.hpp"
#include "popbias/matcher.hpp"
#include "popbias/random.hpp"

namespace testing {

inline std::string fixture(const std::string& name) {
  return std::string(POPBIAS_FIXTURES) + "/" + name;
}

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("popbias_" + tag + "_" + std::to_string(::getpid()) + "_" +
             std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::string file(const std::string& name) const { return (path_ / name).string(); }

 private:
  std::filesystem::path path_;
};

inline popbias::Interaction ix(std::int64_t user, std::int64_t item,
                               std::optional<std::int64_t> ts = {},
                               double rating = 4.0) {
  return {popbias::UserId{user}, popbias::ItemId{item}, rating, ts};
}

inline popbias::Slot hit(std::int64_t item) {
  popbias::Slot s;
  s.kind = popbias::MatchKind::Exact;
  s.item = popbias::ItemId{item};
  s.score = 1.0;
  return s;
}

inline popbias::Slot miss() { return popbias::Slot{}; }

inline popbias::MatchedList list_of(std::int64_t user,
                                    std::vector<popbias::Slot> slots) {
  popbias::MatchedList l;
  l.user = popbias::UserId{user};
  l.slots = std::move(slots);
  return l;
}

}  // namespace testing
