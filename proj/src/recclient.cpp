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
#include "popbias/recclient.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <fstream>
#include <regex>
#include <sstream>

#include "json.hpp"
#include "popbias/hash.hpp"
#include "popbias/random.hpp"

namespace popbias {

std::string_view to_string(Provenance p) {
  return p == Provenance::Live ? "live" : "simulated";
}

void ProviderConfig::validate() const {
  if (max_in_flight < 1) throw ConfigError("max_in_flight must be >= 1");
  if (!(timeout_seconds > 0.0)) throw ConfigError("timeout must be > 0");
  if (rate_limit_per_second < 0.0) {
    throw ConfigError("rate limit must be >= 0");
  }
  if (endpoint.empty()) throw ConfigError("endpoint is empty");
  if (model.empty()) throw ConfigError("model is empty");
}

// --- title extraction ------------------------------------------------------

namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\f\v");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\f\v");
  return s.substr(first, last - first + 1);
}

std::string strip_wrappers(std::string s) {
  static const std::vector<std::pair<std::string, std::string>> kPairs = {
      {"**", "**"}, {"__", "__"}, {"*", "*"},   {"\"", "\""},
      {"'", "'"},   {"`", "`"},   {"\xE2\x80\x9C", "\xE2\x80\x9D"}};
  bool changed = true;
  while (changed) {
    changed = false;
    s = std::string(trim(s));
    for (const auto& [open, close] : kPairs) {
      if (s.size() >= open.size() + close.size() + 1 &&
          s.compare(0, open.size(), open) == 0 &&
          s.compare(s.size() - close.size(), close.size(), close) == 0) {
        s = s.substr(open.size(), s.size() - open.size() - close.size());
        changed = true;
        break;
      }
    }
  }
  return s;
}

std::string clean_title(std::string_view text) {
  static const std::regex kDescribedYear(
      R"(^(.*?\(\d{4}\))\s*(?:-|:|\xE2\x80\x93|\xE2\x80\x94)\s+.*$)");
  static const std::regex kQuotedThenYear(
      R"(^(?:\*\*|"|\xE2\x80\x9C)(.+?)(?:\*\*|"|\xE2\x80\x9D)\s*(\(\d{4}\))$)");
  std::string s(trim(text));
  std::smatch m;
  if (std::regex_match(s, m, kDescribedYear)) s = m[1].str();
  s = strip_wrappers(std::move(s));
  if (std::regex_match(s, m, kQuotedThenYear)) {
    s = strip_wrappers(m[1].str()) + " " + m[2].str();
  }
  return std::string(trim(s));
}

}  // namespace

std::vector<std::string> extract_titles(std::string_view response,
                                        std::size_t max_titles) {
  static const std::regex kEnumerated(
      R"(^(?:\d{1,3}\s*[.)]|[-*+]|\xE2\x80\xA2)\s*(.+)$)");
  std::vector<std::string> lines;
  std::istringstream in{std::string(response)};
  for (std::string line; std::getline(in, line);) {
    auto t = trim(line);
    if (!t.empty()) lines.emplace_back(t);
  }

  std::vector<std::string> enumerated;
  for (const auto& line : lines) {
    std::smatch m;
    // "- " and "* " need the space so "-Man" or "*batteries*" stay titles.
    if (std::regex_match(line, m, kEnumerated)) {
      const char lead = line.front();
      if ((lead == '-' || lead == '*' || lead == '+') &&
          (line.size() < 2 || line[1] != ' ')) {
        continue;
      }
      enumerated.push_back(m[1].str());
    }
  }

  std::vector<std::string> titles;
  if (!enumerated.empty()) {
    for (const auto& item : enumerated) {
      if (titles.size() == max_titles) break;
      std::string title = clean_title(item);
      if (!title.empty()) titles.push_back(std::move(title));
    }
    return titles;
  }
  for (const auto& line : lines) {
    if (titles.size() == max_titles) break;
    if (line.back() == '.' || line.back() == ':') continue;
    std::string title = clean_title(line);
    if (!title.empty()) titles.push_back(std::move(title));
  }
  return titles;
}

// --- rate limiting and dispatch ---------------------------------------------

RateLimiter::RateLimiter(double per_second) {
  if (per_second > 0.0) {
    interval_ = std::chrono::duration_cast<std::chrono::steady_clock::duration>(
        std::chrono::duration<double>(1.0 / per_second));
  }
}

void RateLimiter::acquire() {
  if (interval_ == std::chrono::steady_clock::duration::zero()) return;
  std::chrono::steady_clock::time_point slot;
  {
    std::lock_guard lock(mu_);
    const auto now = std::chrono::steady_clock::now();
    slot = std::max(now, next_);
    next_ = slot + interval_;
  }
  std::this_thread::sleep_until(slot);
}

void dispatch_bounded(std::size_t count, std::size_t max_in_flight,
                      const std::function<void(std::size_t)>& task,
                      const std::function<void(std::size_t)>& on_change) {
  if (count == 0) return;
  if (max_in_flight < 1) throw Error("max_in_flight must be >= 1");
  std::atomic<std::size_t> next{0};
  std::atomic<std::size_t> in_flight{0};
  std::atomic<bool> failed{false};
  std::exception_ptr first_error;
  std::mutex error_mu;
  std::mutex hook_mu;

  auto notify = [&](std::size_t value) {
    if (!on_change) return;
    std::lock_guard lock(hook_mu);
    on_change(value);
  };

  auto worker = [&] {
    while (!failed.load()) {
      const std::size_t i = next.fetch_add(1);
      if (i >= count) return;
      notify(in_flight.fetch_add(1) + 1);
      try {
        task(i);
      } catch (...) {
        std::lock_guard lock(error_mu);
        if (!first_error) first_error = std::current_exception();
        failed = true;
      }
      notify(in_flight.fetch_sub(1) - 1);
    }
  };

  const std::size_t width = std::min(count, max_in_flight);
  std::vector<std::thread> threads;
  threads.reserve(width);
  for (std::size_t t = 0; t < width; ++t) threads.emplace_back(worker);
  for (auto& t : threads) t.join();
  if (first_error) std::rethrow_exception(first_error);
}

// --- chat client -------------------------------------------------------------

ChatClient::ChatClient(ProviderConfig config,
                       std::shared_ptr<HttpTransport> transport,
                       Sleeper sleeper)
    : config_(std::move(config)),
      transport_(std::move(transport)),
      sleeper_(std::move(sleeper)),
      limiter_(config_.rate_limit_per_second) {
  config_.validate();
  if (!transport_) throw ConfigError("no HTTP transport");
  if (!sleeper_) {
    sleeper_ = [](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); };
  }
  if (!config_.api_key_env.empty()) {
    const char* key = std::getenv(config_.api_key_env.c_str());
    if (!key || !*key) {
      throw ConfigError("environment variable " + config_.api_key_env +
                        " is not set");
    }
    api_key_ = key;
  }
}

std::string ChatClient::request_body(const std::string& prompt) const {
  nlohmann::json body;
  body["model"] = config_.model;
  body["messages"] = nlohmann::json::array(
      {nlohmann::json{{"role", "user"}, {"content", prompt}}});
  body["temperature"] = config_.temperature;
  return body.dump();
}

Completion ChatClient::parse_response(const std::string& body) {
  const auto doc = nlohmann::json::parse(body, nullptr, false);
  if (doc.is_discarded() || !doc.is_object()) {
    throw Error("provider response is not a JSON object");
  }
  Completion out;
  if (auto it = doc.find("model"); it != doc.end() && it->is_string()) {
    out.returned_model = it->get<std::string>();
  }
  auto text_of = [](const nlohmann::json& v) {
    return v.is_string() ? v.get<std::string>() : std::string();
  };
  if (auto it = doc.find("choices");
      it != doc.end() && it->is_array() && !it->empty()) {
    const auto& choice = it->front();
    if (auto msg = choice.find("message");
        msg != choice.end() && msg->is_object() && msg->contains("content")) {
      out.text = text_of((*msg)["content"]);
    } else if (choice.contains("text")) {
      out.text = text_of(choice["text"]);
    }
    return out;
  }
  if (auto it = doc.find("content"); it != doc.end() && it->is_array()) {
    for (const auto& part : *it) {
      if (part.is_object() && part.contains("text")) {
        out.text = text_of(part["text"]);
        return out;
      }
    }
  }
  throw Error("provider response has no text segment");
}

Completion ChatClient::complete(const std::string& prompt) {
  const std::string body = request_body(prompt);
  std::vector<std::pair<std::string, std::string>> headers;
  if (api_key_) headers.emplace_back("Authorization", "Bearer " + *api_key_);
  const auto timeout = std::chrono::milliseconds(
      static_cast<std::int64_t>(config_.timeout_seconds * 1000.0));
  Rng jitter(mix_seed({config_.seed, std::hash<std::string>{}(prompt)}));

  for (std::size_t attempt = 0;; ++attempt) {
    const bool last = attempt == config_.retry_budget;
    limiter_.acquire();
    HttpResponse response;
    try {
      response = transport_->post(config_.endpoint, headers, body, timeout);
    } catch (const TransportError&) {
      if (last) throw;
      sleeper_(std::chrono::milliseconds(static_cast<std::int64_t>(
          1000.0 * std::ldexp(1.0, static_cast<int>(attempt)) *
          (0.5 + jitter.uniform()))));
      continue;
    }
    if (response.status >= 200 && response.status < 300) {
      Completion c = parse_response(response.body);
      c.attempts = attempt + 1;
      return c;
    }
    const bool retriable = response.status == 429 || response.status >= 500;
    if (!retriable || last) throw ProviderError(response.status, response.body);
    sleeper_(std::chrono::milliseconds(static_cast<std::int64_t>(
        1000.0 * std::ldexp(1.0, static_cast<int>(attempt)) *
        (0.5 + jitter.uniform()))));
  }
}

// --- replay cache ------------------------------------------------------------

ReplayCache::ReplayCache(std::string path) : path_(std::move(path)) {
  std::ifstream in(path_, std::ios::binary);
  if (!in) return;
  std::string line;
  while (std::getline(in, line)) {
    const auto doc = nlohmann::json::parse(line, nullptr, false);
    if (doc.is_discarded() || !doc.is_object()) continue;
    try {
      Entry e{doc.at("key").get<std::string>(),
              doc.at("model").get<std::string>(),
              doc.at("prompt").get<std::string>(),
              doc.at("response").get<std::string>(),
              doc.value("returned_model", std::string())};
      entries_.insert_or_assign(e.key, std::move(e));
    } catch (const nlohmann::json::exception&) {
      continue;
    }
  }
  // A torn last line has no terminator; the next append starts a new line.
  in.clear();
  in.seekg(0, std::ios::end);
  if (in.tellg() > 0) {
    in.seekg(-1, std::ios::end);
    needs_newline_ = in.get() != '\n';
  }
}

std::string ReplayCache::key_for(std::string_view model,
                                 std::string_view prompt) {
  std::string material(model);
  material.push_back('\0');
  material.append(prompt);
  return sha256_hex(material);
}

std::optional<ReplayCache::Entry> ReplayCache::find(
    std::string_view model, std::string_view prompt) const {
  std::lock_guard lock(mu_);
  auto it = entries_.find(key_for(model, prompt));
  if (it == entries_.end() || it->second.prompt != prompt ||
      it->second.model != model) {
    return std::nullopt;
  }
  return it->second;
}

void ReplayCache::store(const Entry& entry) {
  std::lock_guard lock(mu_);
  if (!path_.empty()) {
    nlohmann::json record{{"key", entry.key},
                          {"model", entry.model},
                          {"prompt", entry.prompt},
                          {"response", entry.response},
                          {"returned_model", entry.returned_model}};
    const auto parent = std::filesystem::path(path_).parent_path();
    if (!parent.empty()) std::filesystem::create_directories(parent);
    std::ofstream out(path_, std::ios::app | std::ios::binary);
    if (!out) throw Error("cannot append to replay cache '" + path_ + "'");
    if (needs_newline_) out << '\n';
    needs_newline_ = false;
    out << record.dump() << '\n';
    out.flush();
  }
  entries_.insert_or_assign(entry.key, entry);
}

std::size_t ReplayCache::size() const {
  std::lock_guard lock(mu_);
  return entries_.size();
}

RawRecommendation request_recommendations(UserId user, StrategyKind strategy,
                                          const std::string& prompt,
                                          std::size_t list_length,
                                          ChatClient& client,
                                          ReplayCache* cache, bool* cache_hit) {
  const std::string& model = client.config().model;
  std::optional<ReplayCache::Entry> entry;
  if (cache) entry = cache->find(model, prompt);
  if (cache_hit) *cache_hit = entry.has_value();
  if (!entry) {
    Completion c = client.complete(prompt);
    entry = ReplayCache::Entry{ReplayCache::key_for(model, prompt), model,
                               prompt, std::move(c.text), c.returned_model};
    if (cache) cache->store(*entry);
  }
  RawRecommendation rec;
  rec.user = user;
  rec.strategy = strategy;
  rec.raw_response = entry->response;
  rec.titles = extract_titles(rec.raw_response, list_length);
  rec.provenance = Provenance::Live;
  rec.empty_flagged = rec.titles.empty();
  return rec;
}

// --- simulator ---------------------------------------------------------------

RawRecommendation simulate_recommendations(const PromptRequest& request,
                                           const ItemStats& stats,
                                           const TitleMap& titles,
                                           double bias_exponent,
                                           std::uint64_t seed) {
  const std::size_t n = stats.total_items();
  if (n == 0) throw Error("simulator needs a nonempty catalog");
  if (!(bias_exponent >= 0.0)) throw Error("bias exponent must be >= 0");
  if (request.list_length > n) {
    throw Error("list length " + std::to_string(request.list_length) +
                " exceeds catalog size " + std::to_string(n));
  }

  // Weighted sampling without replacement (Efraimidis-Spirakis) in log
  // space: the k smallest ln(E_i) - b ln(c_i + 1), E_i ~ Exp(1).
  Rng rng(mix_seed({seed, static_cast<std::uint64_t>(raw(request.user)),
                    static_cast<std::uint64_t>(request.strategy.kind)}));
  std::vector<std::pair<double, std::size_t>> keys(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double e = -std::log(rng.uniform());
    const double log_w =
        bias_exponent * std::log(static_cast<double>(stats.counts()[i]) + 1.0);
    keys[i] = {std::log(e) - log_w, i};
  }
  std::partial_sort(keys.begin(),
                    keys.begin() + static_cast<std::ptrdiff_t>(request.list_length),
                    keys.end());

  RawRecommendation rec;
  rec.user = request.user;
  rec.strategy = request.strategy.kind;
  rec.provenance = Provenance::Simulated;
  for (std::size_t r = 0; r < request.list_length; ++r) {
    const ItemId item = stats.items()[keys[r].second];
    auto it = titles.find(item);
    rec.titles.push_back(it != titles.end()
                             ? it->second
                             : "Item " + std::to_string(raw(item)));
    rec.raw_response += std::to_string(r + 1) + ". " + rec.titles.back() + "\n";
  }
  rec.empty_flagged = rec.titles.empty();
  return rec;
}

}  // namespace popbias
