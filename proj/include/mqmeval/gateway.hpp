#pragma once

// Access to chat/base LLM endpoints over an OpenAI-compatible HTTP JSON
// protocol, with a digest-keyed replay store for deterministic reruns and
// token/cost accounting.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <functional>
#include <future>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <regex>
#include <shared_mutex>
#include <span>
#include <sstream>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>
#include <openssl/evp.h>

#include "httplib.h"
#include "mqmeval/error.hpp"
#include "mqmeval/prompting.hpp"
#include "mqmeval/scoring.hpp"
#include "mqmeval/text.hpp"
#include "mqmeval/types.hpp"

namespace mqmeval {

inline std::string sha256_hex(std::string_view data) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), md, &len, EVP_sha256(), nullptr) != 1)
    throw Error("SHA-256 digest failed");
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  out.reserve(2 * len);
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(kHex[md[i] >> 4]);
    out.push_back(kHex[md[i] & 0xF]);
  }
  return out;
}

struct ModelSpec {
  std::string name;
  ModelKind kind = ModelKind::Chat;
  /// Chat-completions URL, e.g. http://localhost:8000/v1/chat/completions.
  std::string endpoint;
  /// Completions URL used for log-prob scoring; derived from `endpoint`
  /// when empty.
  std::string completions_endpoint;
  double temperature = 0.0;
  int max_tokens = 512;

  std::string scoring_endpoint() const {
    if (!completions_endpoint.empty()) return completions_endpoint;
    static const std::string kChat = "chat/completions";
    if (auto pos = endpoint.rfind(kChat); pos != std::string::npos)
      return endpoint.substr(0, pos) + "completions";
    return endpoint;
  }
};

struct PriceTable {
  double prompt_per_1k = 0.0;
  double completion_per_1k = 0.0;
};

struct Usage {
  long prompt_tokens = 0;
  long completion_tokens = 0;
  long requests = 0;

  long tokens() const { return prompt_tokens + completion_tokens; }

  double cost(const PriceTable& p) const {
    return static_cast<double>(prompt_tokens) / 1000.0 * p.prompt_per_1k +
           static_cast<double>(completion_tokens) / 1000.0 * p.completion_per_1k;
  }

  Usage& operator+=(const Usage& o) {
    prompt_tokens += o.prompt_tokens;
    completion_tokens += o.completion_tokens;
    requests += o.requests;
    return *this;
  }
};

struct Transcript {
  std::string key;
  std::string model;
  nlohmann::json request;
  std::string response_text;
  std::optional<std::vector<TokenLogprob>> token_logprobs;
  long prompt_tokens = 0;
  long completion_tokens = 0;
};

// ---------------------------------------------------------------------------
// Transport

struct HttpResponse {
  int status = 0;
  std::string body;
  std::string transport_error;  // non-empty when no response arrived
};

using Headers = std::vector<std::pair<std::string, std::string>>;

class Transport {
 public:
  virtual ~Transport() = default;
  virtual HttpResponse post(const std::string& url, const std::string& body, const Headers& headers) = 0;
};

class HttpTransport : public Transport {
 public:
  explicit HttpTransport(std::chrono::seconds timeout = std::chrono::seconds(120)) : timeout_(timeout) {}

  HttpResponse post(const std::string& url, const std::string& body, const Headers& headers) override {
    static const std::regex kUrl(R"(^(https?://[^/]+)(/.*)?$)");
    std::smatch m;
    if (!std::regex_match(url, m, kUrl)) throw ConfigError("malformed endpoint URL '" + url + "'");
    httplib::Client client(m[1].str());
    client.set_connection_timeout(timeout_);
    client.set_read_timeout(timeout_);
    client.set_write_timeout(timeout_);
    httplib::Headers h;
    for (const auto& [k, v] : headers) h.emplace(k, v);
    const std::string path = m[2].matched ? m[2].str() : "/";
    auto res = client.Post(path, h, body, "application/json");
    HttpResponse out;
    if (!res) {
      out.transport_error = httplib::to_string(res.error());
      return out;
    }
    out.status = res->status;
    out.body = res->body;
    return out;
  }

 private:
  std::chrono::seconds timeout_;
};

// ---------------------------------------------------------------------------
// Replay store

/// Directory of `<digest>.json` transcript files. Reads may run
/// concurrently; writes are serialized and atomic (write + rename).
class ReplayStore {
 public:
  explicit ReplayStore(std::filesystem::path dir) : dir_(std::move(dir)) {}

  const std::filesystem::path& dir() const { return dir_; }

  std::optional<Transcript> get(const std::string& key) const {
    {
      std::shared_lock lock(mutex_);
      if (auto it = cache_.find(key); it != cache_.end()) return it->second;
    }
    const auto path = dir_ / (key + ".json");
    std::ifstream in(path);
    if (!in) return std::nullopt;
    nlohmann::json j;
    try {
      in >> j;
    } catch (const nlohmann::json::exception& e) {
      throw DataError("corrupt replay transcript " + path.string() + ": " + e.what());
    }
    auto t = from_json(j);
    std::unique_lock lock(mutex_);
    cache_.emplace(key, t);
    return t;
  }

  void put(const Transcript& t) {
    std::unique_lock lock(mutex_);
    std::filesystem::create_directories(dir_);
    const auto path = dir_ / (t.key + ".json");
    const auto tmp = dir_ / (t.key + ".json.tmp");
    {
      std::ofstream out(tmp);
      if (!out) throw Error("cannot write replay transcript " + tmp.string());
      out << to_json(t).dump(2) << '\n';
    }
    std::filesystem::rename(tmp, path);
    cache_[t.key] = t;
  }

  static nlohmann::json to_json(const Transcript& t) {
    nlohmann::json j;
    j["key"] = t.key;
    j["model"] = t.model;
    j["request"] = t.request;
    j["response_text"] = t.response_text;
    if (t.token_logprobs) {
      auto arr = nlohmann::json::array();
      for (const auto& tl : *t.token_logprobs) arr.push_back({tl.token, tl.logprob});
      j["token_logprobs"] = std::move(arr);
    } else {
      j["token_logprobs"] = nullptr;
    }
    j["prompt_tokens"] = t.prompt_tokens;
    j["completion_tokens"] = t.completion_tokens;
    return j;
  }

  static Transcript from_json(const nlohmann::json& j) {
    Transcript t;
    t.key = j.at("key").get<std::string>();
    t.model = j.value("model", "");
    t.request = j.value("request", nlohmann::json());
    t.response_text = j.value("response_text", "");
    if (auto it = j.find("token_logprobs"); it != j.end() && it->is_array()) {
      std::vector<TokenLogprob> v;
      for (const auto& e : *it) v.push_back({e.at(0).get<std::string>(), e.at(1).get<double>()});
      t.token_logprobs = std::move(v);
    }
    t.prompt_tokens = j.value("prompt_tokens", 0L);
    t.completion_tokens = j.value("completion_tokens", 0L);
    return t;
  }

 private:
  std::filesystem::path dir_;
  mutable std::shared_mutex mutex_;
  mutable std::map<std::string, Transcript> cache_;
};

// ---------------------------------------------------------------------------
// Gateway

enum class ReplayMode { Live, Record, Replay };

inline ReplayMode parse_replay_mode(std::string_view s) {
  const auto l = text::ascii_lower(text::trim(s));
  if (l == "live" || l == "off") return ReplayMode::Live;
  if (l == "record") return ReplayMode::Record;
  if (l == "replay" || l == "strict") return ReplayMode::Replay;
  throw ConfigError("unknown replay mode '" + std::string(s) + "' (live, record, replay)");
}

struct RetryPolicy {
  int max_retries = 3;
  std::vector<std::chrono::milliseconds> backoff{std::chrono::seconds(1), std::chrono::seconds(4),
                                                 std::chrono::seconds(16)};
};

struct Completion {
  std::string text;
  Usage usage;
  bool from_store = false;
};

struct ScoredContinuation {
  std::vector<TokenLogprob> tokens;
  Usage usage;
  bool from_store = false;
};

using Sleeper = std::function<void(std::chrono::milliseconds)>;

/// Runs fn(i) for i in [0, n) on at most `max_in_flight` threads. Exceptions
/// are rethrown after all workers finish, lowest index first.
inline void run_bounded(std::size_t n, std::size_t max_in_flight, const std::function<void(std::size_t)>& fn) {
  std::vector<std::exception_ptr> errors(n);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const std::size_t workers = std::max<std::size_t>(1, std::min(max_in_flight, n));
  if (workers == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

class Gateway {
 public:
  struct Options {
    ReplayMode mode = ReplayMode::Record;
    RetryPolicy retry;
    std::string api_key;
    std::size_t max_in_flight = 4;
  };

  Gateway(std::shared_ptr<Transport> transport, std::shared_ptr<ReplayStore> store, Options options,
          Sleeper sleeper = [](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); })
      : transport_(std::move(transport)),
        store_(std::move(store)),
        options_(std::move(options)),
        sleep_(std::move(sleeper)) {
    if (options_.mode != ReplayMode::Live && !store_)
      throw ConfigError("replay mode '" + std::string(options_.mode == ReplayMode::Record ? "record" : "replay") +
                        "' needs a replay store directory");
  }

  static std::string digest(const std::string& model, const nlohmann::json& body) {
    return sha256_hex(model + "\n" + body.dump());
  }

  static nlohmann::json chat_request(const ModelSpec& spec, const std::string& prompt) {
    nlohmann::json body;
    body["model"] = spec.name;
    body["messages"] = nlohmann::json::array({{{"role", "user"}, {"content", prompt}}});
    body["temperature"] = spec.temperature;
    body["max_tokens"] = spec.max_tokens;
    return body;
  }

  /// Completions request that echoes the prompt with per-token logprobs.
  static nlohmann::json scoring_request(const ModelSpec& spec, const std::string& context,
                                        const std::string& continuation) {
    nlohmann::json body;
    body["model"] = spec.name;
    body["prompt"] = context + continuation;
    body["echo"] = true;
    body["logprobs"] = 1;
    body["max_tokens"] = 1;
    body["temperature"] = 0.0;
    return body;
  }

  /// Greedy completion of a rendered prompt.
  Completion complete(const ModelSpec& spec, const RenderedPrompt& prompt) {
    const auto body = chat_request(spec, prompt.text);
    bool from_store = false;
    auto t = fetch(spec, spec.endpoint, body, from_store, [&](const nlohmann::json& resp, Transcript& out) {
      try {
        out.response_text = resp.at("choices").at(0).at("message").at("content").get<std::string>();
      } catch (const nlohmann::json::exception&) {
        throw GatewayError("chat response lacks choices[0].message.content", 200, resp.dump());
      }
    });
    Completion c;
    c.text = t.response_text;
    c.usage = {t.prompt_tokens, t.completion_tokens, 1};
    c.from_store = from_store;
    return c;
  }

  /// Log-probabilities of the tokens of `continuation` given `context`.
  ScoredContinuation score_continuation(const ModelSpec& spec, const std::string& context,
                                        const std::string& continuation) {
    if (continuation.empty()) throw DataError("score_continuation: empty continuation");
    const auto body = scoring_request(spec, context, continuation);
    const std::size_t context_len = text::decode(context).size();
    const std::size_t full_len = context_len + text::decode(continuation).size();
    bool from_store = false;
    auto t = fetch(spec, spec.scoring_endpoint(), body, from_store, [&](const nlohmann::json& resp, Transcript& out) {
      const nlohmann::json* lp = nullptr;
      try {
        lp = &resp.at("choices").at(0).at("logprobs");
      } catch (const nlohmann::json::exception&) {
      }
      if (!lp || !lp->is_object() || !lp->contains("tokens") || !lp->contains("token_logprobs") ||
          !lp->contains("text_offset"))
        throw CapabilityError("endpoint returned no echoed token logprobs; replay-feed this run instead", 200,
                              resp.dump());
      const auto& toks = lp->at("tokens");
      const auto& lps = lp->at("token_logprobs");
      const auto& offs = lp->at("text_offset");
      std::vector<TokenLogprob> picked;
      for (std::size_t i = 0; i < toks.size() && i < lps.size() && i < offs.size(); ++i) {
        const auto tok = toks[i].get<std::string>();
        const auto begin = offs[i].get<std::size_t>();
        const auto end = begin + text::decode(tok).size();
        if (begin >= full_len || end <= context_len) continue;  // context or generated token
        if (lps[i].is_null()) continue;  // first token with no conditioning context
        picked.push_back({tok, lps[i].get<double>()});
      }
      out.token_logprobs = std::move(picked);
    });
    if (!t.token_logprobs) throw CapabilityError("replayed transcript " + t.key + " holds no token logprobs");
    ScoredContinuation s;
    s.tokens = *t.token_logprobs;
    s.usage = {t.prompt_tokens, t.completion_tokens, 1};
    s.from_store = from_store;
    return s;
  }

  /// Completions for a batch, at most `max_in_flight` concurrently; output
  /// order follows input order.
  std::vector<Completion> complete_batch(const ModelSpec& spec, std::span<const RenderedPrompt> prompts) {
    std::vector<Completion> out(prompts.size());
    run_bounded(prompts.size(), options_.max_in_flight, [&](std::size_t i) { out[i] = complete(spec, prompts[i]); });
    return out;
  }

  std::vector<ScoredContinuation> score_batch(const ModelSpec& spec, std::span<const RenderedPrompt> prompts) {
    std::vector<ScoredContinuation> out(prompts.size());
    run_bounded(prompts.size(), options_.max_in_flight, [&](std::size_t i) {
      if (!prompts[i].continuation) throw ConfigError("prompt has no continuation to score");
      out[i] = score_continuation(spec, prompts[i].text, *prompts[i].continuation);
    });
    return out;
  }

  /// Usage summed over every served request (store hits included).
  Usage usage() const {
    std::lock_guard lock(stats_mutex_);
    return usage_;
  }

  long network_calls() const { return network_calls_.load(); }

 private:
  using Extract = std::function<void(const nlohmann::json&, Transcript&)>;

  Transcript fetch(const ModelSpec& spec, const std::string& url, const nlohmann::json& body, bool& from_store,
                   const Extract& extract) {
    const auto key = digest(spec.name, body);
    std::optional<Transcript> t;
    if (options_.mode != ReplayMode::Live) t = store_->get(key);
    if (t) {
      from_store = true;
    } else {
      if (options_.mode == ReplayMode::Replay) throw GatewayError("replay miss for request digest " + key);
      t = fetch_network(spec, url, body, key, extract);
    }
    std::lock_guard lock(stats_mutex_);
    usage_ += Usage{t->prompt_tokens, t->completion_tokens, 1};
    return *t;
  }

  // Identical requests in flight at the same time share one network call.
  Transcript fetch_network(const ModelSpec& spec, const std::string& url, const nlohmann::json& body,
                           const std::string& key, const Extract& extract) {
    std::promise<Transcript> promise;
    std::shared_future<Transcript> future;
    bool owner = false;
    {
      std::lock_guard lock(inflight_mutex_);
      if (auto it = inflight_.find(key); it != inflight_.end()) {
        future = it->second;
      } else {
        future = promise.get_future().share();
        inflight_.emplace(key, future);
        owner = true;
      }
    }
    if (!owner) return future.get();
    try {
      // Another thread may have stored it between our lookup and now.
      std::optional<Transcript> t;
      if (store_ && options_.mode != ReplayMode::Live) t = store_->get(key);
      if (!t) {
        const auto resp = post_with_retry(url, body.dump());
        nlohmann::json parsed;
        try {
          parsed = nlohmann::json::parse(resp.body);
        } catch (const nlohmann::json::parse_error&) {
          throw GatewayError("endpoint returned non-JSON body", resp.status, resp.body);
        }
        Transcript fresh;
        fresh.key = key;
        fresh.model = spec.name;
        fresh.request = body;
        extract(parsed, fresh);
        if (auto u = parsed.find("usage"); u != parsed.end() && u->is_object()) {
          fresh.prompt_tokens = u->value("prompt_tokens", 0L);
          fresh.completion_tokens = u->value("completion_tokens", 0L);
        }
        if (store_ && options_.mode == ReplayMode::Record) store_->put(fresh);
        t = std::move(fresh);
      }
      promise.set_value(*t);
    } catch (...) {
      promise.set_exception(std::current_exception());
    }
    {
      std::lock_guard lock(inflight_mutex_);
      inflight_.erase(key);
    }
    return future.get();
  }

  HttpResponse post_with_retry(const std::string& url, const std::string& body) {
    Headers headers{{"Content-Type", "application/json"}};
    if (!options_.api_key.empty()) headers.emplace_back("Authorization", "Bearer " + options_.api_key);
    HttpResponse last;
    for (int attempt = 0;; ++attempt) {
      ++network_calls_;
      last = transport_->post(url, body, headers);
      const bool transient = !last.transport_error.empty() || last.status == 429 || last.status >= 500;
      if (!transient) break;
      if (attempt >= options_.retry.max_retries) {
        throw GatewayError("endpoint " + url + " failed after " + std::to_string(attempt + 1) + " attempts: " +
                               (last.transport_error.empty() ? "HTTP " + std::to_string(last.status) : last.transport_error),
                           last.status, last.body);
      }
      const auto& b = options_.retry.backoff;
      if (!b.empty()) sleep_(b[std::min<std::size_t>(static_cast<std::size_t>(attempt), b.size() - 1)]);
    }
    if (last.status < 200 || last.status >= 300)
      throw GatewayError("endpoint " + url + " returned HTTP " + std::to_string(last.status) + ": " + last.body,
                         last.status, last.body);
    return last;
  }

  std::shared_ptr<Transport> transport_;
  std::shared_ptr<ReplayStore> store_;
  Options options_;
  Sleeper sleep_;

  mutable std::mutex stats_mutex_;
  Usage usage_;
  std::atomic<long> network_calls_{0};

  std::mutex inflight_mutex_;
  std::map<std::string, std::shared_future<Transcript>> inflight_;
};

// ---------------------------------------------------------------------------
// Usage accounting

struct UsageEntry {
  Template template_id = Template::GembaSqm;
  InputMode mode = InputMode::T;
  std::string lp;
  long prompt_tokens = 0;
  long completion_tokens = 0;
};

struct UsageRow {
  Template template_id = Template::GembaSqm;
  std::optional<InputMode> mode;  // empty on a per-template total row
  std::string lp;                 // empty on a total row
  long samples = 0;
  long tokens = 0;
  double cost = 0.0;
};

/// One row per (template, mode, lp), followed by each template's total row.
inline std::vector<UsageRow> usage_report(std::span<const UsageEntry> entries, const PriceTable& prices) {
  std::map<std::tuple<Template, InputMode, std::string>, Usage> cells;
  for (const auto& e : entries) cells[{e.template_id, e.mode, e.lp}] += Usage{e.prompt_tokens, e.completion_tokens, 1};
  std::vector<UsageRow> rows;
  std::map<Template, UsageRow> totals;
  for (const auto& [k, u] : cells) {
    const auto& [tpl, mode, lp] = k;
    rows.push_back({tpl, mode, lp, u.requests, u.tokens(), u.cost(prices)});
    auto& t = totals[tpl];
    t.template_id = tpl;
    t.samples += u.requests;
    t.tokens += u.tokens();
    t.cost += u.cost(prices);
  }
  std::vector<UsageRow> out;
  for (auto& [tpl, total] : totals) {
    for (const auto& r : rows)
      if (r.template_id == tpl) out.push_back(r);
    out.push_back(total);
  }
  return out;
}

}  // namespace mqmeval
