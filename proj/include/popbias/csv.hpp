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

#include <string>
#include <string_view>
#include <vector>

namespace popbias::csv {

// Splits one record using RFC 4180 quoting ("a,""b""",c -> [a,"b"], [c]).
// A trailing '\r' is ignored. Returns false on an unterminated quote.
bool split_record(std::string_view line, std::vector<std::string>& fields,
                  char delimiter = ',');

// Quotes a field when it contains the delimiter, a quote or a line break.
std::string escape(std::string_view field, char delimiter = ',');

// Iterates physical lines of a buffer. Quoted fields spanning lines are not
// supported; none of the supported dataset files use them.
class LineReader {
 public:
  explicit LineReader(std::string_view buffer) : buffer_(buffer) {}

  // Next line without its terminator; false at end of buffer.
  bool next(std::string_view& line);
  // 1-based number of the line last returned by next().
  std::size_t line_number() const { return line_number_; }

 private:
  std::string_view buffer_;
  std::size_t pos_ = 0;
  std::size_t line_number_ = 0;
};

}  // namespace popbias::csv
