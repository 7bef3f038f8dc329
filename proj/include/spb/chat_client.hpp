#pragma once

// OpenAI-compatible chat-completions client.

#include <cstdlib>
#include <map>
#include <memory>
#include <mutex>
#include <string>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "spb/core.hpp"
#include "spb/error.hpp"

namespace spb {

struct SamplingParams {
  double temperature = 0.0;
  int max_tokens = 2048;
};

struct EndpointConfig {
  std::string base_url;                  // e.g. https://api.example.com/v1
  std::map<ModelId, std::string> models;  // judge id -> endpoint model name
  std::string auth_env;                  // env var holding the bearer token; empty for none
  double timeout_seconds = 120.0;

  const std::string& model_for(const ModelId& judge) const {
    auto it = models.find(judge);
    if (it == models.end()) throw ConfigError("judge '" + judge + "' has no endpoint model");
    return it->second;
  }

  void validate(const std::vector<ModelId>& judges) const {
    if (base_url.empty()) throw ConfigError("endpoint base_url is empty");
    for (const auto& j : judges) model_for(j);
    if (!(timeout_seconds > 0)) throw ConfigError("endpoint timeout must be positive");
  }
};

struct ChatRequest {
  std::string model;
  std::string prompt;
  SamplingParams sampling;
};

class ChatClient {
 public:
  virtual ~ChatClient() = default;
  // Returns the assistant message text; throws TransportError.
  virtual std::string complete(const ChatRequest& request) = 0;
};

inline nlohmann::json chat_request_body(const ChatRequest& r) {
  return {{"model", r.model},
          {"messages", nlohmann::json::array({{{"role", "user"}, {"content", r.prompt}}})},
          {"temperature", r.sampling.temperature},
          {"max_tokens", r.sampling.max_tokens}};
}

inline std::string chat_response_text(const std::string& body) {
  auto j = nlohmann::json::parse(body, nullptr, false);
  if (j.is_discarded()) throw TransportError("endpoint returned non-JSON body");
  try {
    const auto& content = j.at("choices").at(0).at("message").at("content");
    if (content.is_null()) throw TransportError("endpoint returned an empty message");
    return content.get<std::string>();
  } catch (const nlohmann::json::exception&) {
    throw TransportError("endpoint response lacks choices[0].message.content");
  }
}

class HttpChatClient : public ChatClient {
 public:
  explicit HttpChatClient(EndpointConfig config) : config_(std::move(config)) {
    const auto scheme_end = config_.base_url.find("://");
    if (scheme_end == std::string::npos) throw ConfigError("endpoint base_url needs a scheme: " + config_.base_url);
    const auto path_start = config_.base_url.find('/', scheme_end + 3);
    origin_ = config_.base_url.substr(0, path_start);
    prefix_ = path_start == std::string::npos ? "" : config_.base_url.substr(path_start);
    while (!prefix_.empty() && prefix_.back() == '/') prefix_.pop_back();
    if (!config_.auth_env.empty()) {
      const char* token = std::getenv(config_.auth_env.c_str());
      if (!token || !*token) throw ConfigError("environment variable " + config_.auth_env + " is not set");
      token_ = token;
    }
  }

  std::string complete(const ChatRequest& request) override {
    // httplib::Client is not safe for concurrent use; one per call keeps workers independent.
    httplib::Client cli(origin_);
    const auto secs = static_cast<time_t>(config_.timeout_seconds);
    const auto usecs = static_cast<time_t>((config_.timeout_seconds - static_cast<double>(secs)) * 1e6);
    cli.set_connection_timeout(secs, usecs);
    cli.set_read_timeout(secs, usecs);
    cli.set_write_timeout(secs, usecs);
    httplib::Headers headers;
    if (!token_.empty()) headers.emplace("Authorization", "Bearer " + token_);

    auto res = cli.Post(prefix_ + "/chat/completions", headers, chat_request_body(request).dump(),
                        "application/json");
    if (!res) throw TransportError("request to " + origin_ + " failed: " + httplib::to_string(res.error()));
    if (res->status != 200) {
      const bool retryable = res->status == 408 || res->status == 429 || res->status >= 500;
      throw TransportError("endpoint returned HTTP " + std::to_string(res->status), retryable);
    }
    return chat_response_text(res->body);
  }

 private:
  EndpointConfig config_;
  std::string origin_;
  std::string prefix_;
  std::string token_;
};

}  // namespace spb
