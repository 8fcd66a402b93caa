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

#include <atomic>
#include <chrono>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <thread>
#include <unordered_map>
#include <vector>

#include "popbias/popularity.hpp"
#include "popbias/promptgen.hpp"
#include "popbias/types.hpp"

namespace popbias {

struct ProviderConfig {
  std::string endpoint = "https://api.openai.com/v1/chat/completions";
  std::string model = "gpt-4o-mini";
  std::string api_key_env = "OPENAI_API_KEY";  // empty: no auth header
  std::size_t max_in_flight = 4;
  double timeout_seconds = 60.0;
  std::size_t retry_budget = 3;
  double rate_limit_per_second = 0.0;  // 0: unlimited
  double temperature = 0.0;
  std::uint64_t seed = 42;

  // Throws ConfigError when a field is out of range.
  void validate() const;
};

enum class Provenance { Live, Simulated };
std::string_view to_string(Provenance p);

struct RawRecommendation {
  UserId user{};
  StrategyKind strategy = StrategyKind::Vanilla;
  std::vector<std::string> titles;
  std::string raw_response;
  Provenance provenance = Provenance::Simulated;
  // Set when the response contained no extractable title.
  bool empty_flagged = false;
};

// Pulls an ordered title list out of free-form model output.
//
// Lines starting with an enumeration ("1.", "1)", "-", "*", "•") are items;
// when any such line exists, all other lines are treated as commentary.
// Otherwise every non-empty line is a title, except lines ending in '.' or
// ':' which read as prose. Enumeration tokens, markdown emphasis, surrounding
// quotes and a trailing " - description" are stripped; a parenthetical year
// is kept. At most max_titles are returned, in response order.
std::vector<std::string> extract_titles(std::string_view response,
                                        std::size_t max_titles);

// ---------------------------------------------------------------------------
// Transport

struct HttpResponse {
  int status = 0;
  std::string body;
};

// Network failure (connect, timeout, TLS). Retriable.
class TransportError : public Error {
 public:
  using Error::Error;
};

// Non-success HTTP status from the provider.
class ProviderError : public Error {
 public:
  ProviderError(int status, const std::string& body)
      : Error("provider returned HTTP " + std::to_string(status) + ": " +
              body.substr(0, 200)),
        status_(status) {}
  int status() const { return status_; }

 private:
  int status_;
};

class HttpTransport {
 public:
  virtual ~HttpTransport() = default;
  // Throws TransportError when no HTTP response was obtained.
  virtual HttpResponse post(const std::string& url,
                            const std::vector<std::pair<std::string,
                                                        std::string>>& headers,
                            const std::string& body,
                            std::chrono::milliseconds timeout) = 0;
};

// cpp-httplib backed transport (http:// and https://).
std::shared_ptr<HttpTransport> make_http_transport();

// Minimum-interval limiter shared by all dispatch workers.
class RateLimiter {
 public:
  explicit RateLimiter(double per_second);
  void acquire();

 private:
  std::mutex mu_;
  std::chrono::steady_clock::duration interval_{};
  std::chrono::steady_clock::time_point next_{};
};

struct Completion {
  std::string text;
  std::string returned_model;  // as reported by the provider, may be empty
  std::size_t attempts = 0;
};

// Chat-completion client: a single user message, deterministic decoding,
// exponential backoff (1s, 2s, 4s, ... with +/-50% jitter) on transport
// errors, HTTP 429 and 5xx.
class ChatClient {
 public:
  using Sleeper = std::function<void(std::chrono::milliseconds)>;

  ChatClient(ProviderConfig config, std::shared_ptr<HttpTransport> transport,
             Sleeper sleeper = {});

  Completion complete(const std::string& prompt);
  const ProviderConfig& config() const { return config_; }

  // Request body sent for prompt.
  std::string request_body(const std::string& prompt) const;
  // First text segment of a chat-completion response body. Understands
  // choices[0].message.content and content[0].text.
  static Completion parse_response(const std::string& body);

 private:
  ProviderConfig config_;
  std::shared_ptr<HttpTransport> transport_;
  Sleeper sleeper_;
  RateLimiter limiter_;
  std::optional<std::string> api_key_;
};

// Runs task(0..count-1) on at most max_in_flight threads. on_change, when
// set, is called with the number of tasks in flight after every start and
// finish. The first exception thrown by a task is rethrown after all
// workers stop; remaining tasks are skipped.
void dispatch_bounded(std::size_t count, std::size_t max_in_flight,
                      const std::function<void(std::size_t)>& task,
                      const std::function<void(std::size_t)>& on_change = {});

// Append-only line-delimited store of prompt -> raw response.
class ReplayCache {
 public:
  struct Entry {
    std::string key;
    std::string model;
    std::string prompt;
    std::string response;
    std::string returned_model;
  };

  ReplayCache() = default;
  // Loads path if it exists. A torn final line is ignored.
  explicit ReplayCache(std::string path);

  static std::string key_for(std::string_view model, std::string_view prompt);

  std::optional<Entry> find(std::string_view model,
                            std::string_view prompt) const;
  // Appends and flushes one record. Thread safe.
  void store(const Entry& entry);
  std::size_t size() const;

 private:
  std::string path_;
  mutable std::mutex mu_;
  std::unordered_map<std::string, Entry> entries_;
  bool needs_newline_ = false;
};

// Live path: query (cache first) and extract titles.
RawRecommendation request_recommendations(UserId user, StrategyKind strategy,
                                          const std::string& prompt,
                                          std::size_t list_length,
                                          ChatClient& client,
                                          ReplayCache* cache = nullptr,
                                          bool* cache_hit = nullptr);

// Desk-scale stand-in for an LLM: samples list_length distinct catalog items
// without replacement with probability proportional to
// (count + 1)^bias_exponent, deterministically in (seed, user, strategy).
RawRecommendation simulate_recommendations(const PromptRequest& request,
                                           const ItemStats& stats,
                                           const TitleMap& titles,
                                           double bias_exponent,
                                           std::uint64_t seed);

}  // namespace popbias
