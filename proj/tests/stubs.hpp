#pragma once

// Test doubles for the gateway: an in-process transport answering with a
// callback, a transport that fails on use, and a local HTTP server speaking
// the chat/completions protocol.

#include <atomic>
#include <functional>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "httplib.h"
#include "mqmeval/gateway.hpp"
#include "mqmeval/text.hpp"

namespace stub {

using nlohmann::json;

inline json chat_reply(const std::string& content, long prompt_tokens = 10, long completion_tokens = 2) {
  return {{"choices", json::array({{{"message", {{"role", "assistant"}, {"content", content}}}}})},
          {"usage", {{"prompt_tokens", prompt_tokens}, {"completion_tokens", completion_tokens}}}};
}

/// Echo+logprobs reply for a completions request: the prompt is split into
/// whitespace-led words, each with logprob -(index + 1) / 10, followed by
/// one generated token. Offsets count code points.
inline json echo_reply(const std::string& prompt) {
  json tokens = json::array(), lps = json::array(), offs = json::array();
  const auto cps = mqmeval::text::decode(prompt);
  std::size_t i = 0, index = 0;
  while (i < cps.size()) {
    std::size_t j = i;
    while (j < cps.size() && mqmeval::text::is_space(cps[j].value)) ++j;
    while (j < cps.size() && !mqmeval::text::is_space(cps[j].value)) ++j;
    const auto begin = cps[i].begin;
    const auto end = j < cps.size() ? cps[j].begin : prompt.size();
    tokens.push_back(prompt.substr(begin, end - begin));
    lps.push_back(index == 0 ? json(nullptr) : json(-static_cast<double>(index + 1) / 10.0));
    offs.push_back(i);
    ++index;
    i = j;
  }
  tokens.push_back(" <gen>");
  lps.push_back(-9.0);
  offs.push_back(cps.size());
  return {{"choices", json::array({{{"text", prompt + " <gen>"},
                                     {"logprobs", {{"tokens", tokens}, {"token_logprobs", lps}, {"text_offset", offs}}}}})},
          {"usage", {{"prompt_tokens", static_cast<long>(index)}, {"completion_tokens", 1}}}};
}

/// Answers in-process through a callback on the parsed request body.
class CallbackTransport : public mqmeval::Transport {
 public:
  using Handler = std::function<mqmeval::HttpResponse(const std::string& url, const json& body)>;
  explicit CallbackTransport(Handler h) : handler_(std::move(h)) {}

  mqmeval::HttpResponse post(const std::string& url, const std::string& body, const mqmeval::Headers& headers) override {
    ++calls;
    {
      std::lock_guard lock(mutex_);
      last_headers = headers;
    }
    return handler_(url, json::parse(body));
  }

  std::atomic<int> calls{0};
  mqmeval::Headers last_headers;

 private:
  Handler handler_;
  std::mutex mutex_;
};

/// Any use is a test failure: replay runs must not touch the network.
class FailingTransport : public mqmeval::Transport {
 public:
  mqmeval::HttpResponse post(const std::string& url, const std::string&, const mqmeval::Headers&) override {
    ++calls;
    throw std::logic_error("network access attempted: " + url);
  }
  std::atomic<int> calls{0};
};

/// Chat handler: GEMBA-style prompts get "Score: 90", anything else
/// "no-error"; the completions path echoes logprobs.
inline mqmeval::HttpResponse default_handler(const std::string& url, const json& body) {
  if (url.find("/chat/completions") == std::string::npos)
    return {200, echo_reply(body.at("prompt").get<std::string>()).dump(), {}};
  const auto prompt = body.at("messages").at(0).at("content").get<std::string>();
  const bool sqm = prompt.find("Score (0-100):") != std::string::npos;
  return {200, chat_reply(sqm ? "Score: 90" : "no-error").dump(), {}};
}

/// Local HTTP server on an ephemeral port.
class Server {
 public:
  explicit Server(std::function<void(const httplib::Request&, httplib::Response&)> chat = {},
                  bool logprobs = true) {
    server_.Post("/v1/chat/completions", [this, chat](const httplib::Request& req, httplib::Response& res) {
      ++chat_requests;
      if (chat) return chat(req, res);
      res.set_content(default_handler("/v1/chat/completions", json::parse(req.body)).body, "application/json");
    });
    server_.Post("/v1/completions", [this, logprobs](const httplib::Request& req, httplib::Response& res) {
      ++completion_requests;
      const auto body = json::parse(req.body);
      if (!logprobs) {
        res.set_content(json{{"choices", json::array({{{"text", "x"}}})}}.dump(), "application/json");
        return;
      }
      res.set_content(echo_reply(body.at("prompt").get<std::string>()).dump(), "application/json");
    });
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }

  ~Server() {
    server_.stop();
    thread_.join();
  }

  std::string chat_url() const { return "http://127.0.0.1:" + std::to_string(port_) + "/v1/chat/completions"; }

  std::atomic<int> chat_requests{0};
  std::atomic<int> completion_requests{0};

 private:
  httplib::Server server_;
  int port_ = 0;
  std::thread thread_;
};

}  // namespace stub
