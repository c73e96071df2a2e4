#include "mrdrag/llm_gateway.hpp"

#include <algorithm>

#include <spdlog/spdlog.h>

#include "mrdrag/http_client.hpp"
#include "mrdrag/util.hpp"

namespace mrdrag {

using nlohmann::json;

std::string_view to_string(Role r) {
  switch (r) {
    case Role::System: return "system";
    case Role::User: return "user";
    case Role::Assistant: return "assistant";
  }
  return "user";
}

std::string_view to_string(Purpose p) {
  switch (p) {
    case Purpose::Gate: return "Gate";
    case Purpose::Analyzer: return "Analyzer";
    case Purpose::Doctor: return "Doctor";
    case Purpose::Patient: return "Patient";
    case Purpose::Judge: return "Judge";
  }
  return "?";
}

std::optional<Purpose> parse_purpose(std::string_view s) {
  const auto lower = to_lower_ascii(s);
  for (Purpose p : kAllPurposes) {
    if (to_lower_ascii(to_string(p)) == lower) return p;
  }
  return std::nullopt;
}

std::string ChatRequest::joined_content() const {
  std::string out;
  for (const auto& m : messages) {
    out += m.content;
    out += '\n';
  }
  return out;
}

void validate_request(const ChatRequest& request) {
  if (request.messages.empty()) throw Error(ErrorCode::InvalidRequest, "chat request has no messages");
  if (request.messages.front().role == Role::Assistant) {
    throw Error(ErrorCode::InvalidRequest, "first chat message must be system or user");
  }
  for (const auto& m : request.messages) {
    if (trim(m.content).empty()) throw Error(ErrorCode::InvalidRequest, "chat message with empty content");
  }
}

// ---------------------------------------------------------------------------

OpenAiChatBackend::OpenAiChatBackend(RemoteEndpoint endpoint)
    : endpoint_(std::move(endpoint)), in_flight_(std::max(1, endpoint_.max_in_flight)) {}

std::string OpenAiChatBackend::complete(const ChatRequest& request) {
  json messages = json::array();
  for (const auto& m : request.messages) {
    messages.push_back({{"role", std::string(to_string(m.role))}, {"content", m.content}});
  }
  const json body = {{"model", request.model_name},
                     {"messages", std::move(messages)},
                     {"temperature", request.temperature},
                     {"max_tokens", request.max_output_tokens}};

  in_flight_.acquire();
  std::string response;
  try {
    response = post_json_with_retries(endpoint_, "/chat/completions", body.dump());
  } catch (...) {
    in_flight_.release();
    throw;
  }
  in_flight_.release();

  try {
    const auto j = json::parse(response);
    const auto& content = j.at("choices").at(0).at("message").at("content");
    return content.is_null() ? std::string{} : content.get<std::string>();
  } catch (const json::exception& e) {
    throw Error(ErrorCode::BackendUnavailable, std::string("unexpected chat response: ") + e.what());
  }
}

// ---------------------------------------------------------------------------

MockScript MockScript::from_json(const json& j) {
  MockScript script;
  auto purpose_of = [](const json& item) {
    const auto name = item.at("purpose").get<std::string>();
    auto p = parse_purpose(name);
    if (!p) throw Error(ErrorCode::ConfigError, "mock script: unknown purpose '" + name + "'");
    return *p;
  };
  try {
    for (const auto& item : j.value("queue", json::array())) {
      script.queue.emplace_back(purpose_of(item), item.at("text").get<std::string>());
    }
    for (const auto& item : j.value("rules", json::array())) {
      MockRule rule;
      if (item.contains("purpose")) rule.purpose = purpose_of(item);
      rule.contains = item.value("contains", "");
      rule.reply = item.at("reply").get<std::string>();
      script.rules.push_back(std::move(rule));
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ConfigError, std::string("mock script: ") + e.what());
  }
  return script;
}

json MockScript::to_json() const {
  json q = json::array();
  for (const auto& [p, text] : queue) q.push_back({{"purpose", std::string(mrdrag::to_string(p))}, {"text", text}});
  json r = json::array();
  for (const auto& rule : rules) {
    json item = {{"contains", rule.contains}, {"reply", rule.reply}};
    if (rule.purpose) item["purpose"] = std::string(mrdrag::to_string(*rule.purpose));
    r.push_back(std::move(item));
  }
  return {{"queue", std::move(q)}, {"rules", std::move(r)}};
}

MockChatBackend::MockChatBackend(MockScript script)
    : queue_(std::move(script.queue)), consumed_(queue_.size(), false), rules_(std::move(script.rules)) {}

std::string MockChatBackend::complete(const ChatRequest& request) {
  std::lock_guard lock(mu_);
  for (std::size_t i = 0; i < queue_.size(); ++i) {
    if (!consumed_[i] && queue_[i].first == request.purpose) {
      consumed_[i] = true;
      return queue_[i].second;
    }
  }
  const std::string content = request.joined_content();
  for (const auto& rule : rules_) {
    if (rule.purpose && *rule.purpose != request.purpose) continue;
    if (!rule.contains.empty() && content.find(rule.contains) == std::string::npos) continue;
    return rule.reply;
  }
  throw Error(ErrorCode::ScriptExhausted,
              "mock script has no reply left for purpose " + std::string(to_string(request.purpose)));
}

std::size_t MockChatBackend::remaining() const {
  std::lock_guard lock(mu_);
  return static_cast<std::size_t>(std::count(consumed_.begin(), consumed_.end(), false));
}

// ---------------------------------------------------------------------------

GatewayConfig GatewayConfig::defaults() {
  GatewayConfig c;
  c.purposes[Purpose::Doctor] = {"gpt-4o-mini", 0.7, 1024};
  c.purposes[Purpose::Analyzer] = {"gpt-4o-mini", 0.7, 1536};
  c.purposes[Purpose::Gate] = {"gpt-4o-mini", 0.0, 8};
  c.purposes[Purpose::Patient] = {"gpt-4o-mini", 0.7, 512};
  c.purposes[Purpose::Judge] = {"gpt-4o", 0.0, 512};
  return c;
}

const PurposeSettings& GatewayConfig::at(Purpose p) const {
  auto it = purposes.find(p);
  if (it == purposes.end()) throw Error(ErrorCode::ConfigError, "no model configured for " + std::string(to_string(p)));
  return it->second;
}

LlmGateway::LlmGateway(std::shared_ptr<ChatBackend> backend, GatewayConfig config)
    : config_(std::move(config)), default_backend_(std::move(backend)) {
  if (!default_backend_) throw Error(ErrorCode::ConfigError, "LlmGateway needs a backend");
}

void LlmGateway::set_backend(Purpose purpose, std::shared_ptr<ChatBackend> backend) {
  backends_[purpose] = std::move(backend);
}

std::shared_ptr<ChatBackend> LlmGateway::backend_for(Purpose p) const {
  auto it = backends_.find(p);
  return it != backends_.end() && it->second ? it->second : default_backend_;
}

std::string LlmGateway::chat(Purpose purpose, std::vector<ChatMessage> messages, std::string_view session_id) {
  const auto& settings = config_.at(purpose);
  ChatRequest request;
  request.messages = std::move(messages);
  request.model_name = settings.model_name;
  request.temperature = settings.temperature;
  request.max_output_tokens = settings.max_output_tokens;
  request.purpose = purpose;
  request.session_id = std::string(session_id);

  LoggedRequest entry{request, {}, {}};
  auto record = [&] {
    std::lock_guard lock(log_mu_);
    ++total_calls_;
    ++counts_[{entry.request.session_id, purpose}];
    log_.push_back(std::move(entry));
    if (log_limit_ > 0 && log_.size() > log_limit_) {
      log_.erase(log_.begin(), log_.begin() + static_cast<std::ptrdiff_t>(log_.size() - log_limit_));
    }
  };

  try {
    validate_request(request);
    std::string response = backend_for(purpose)->complete(request);
    if (trim(response).empty()) {
      throw Error(ErrorCode::ResponseEmpty, std::string(to_string(purpose)) + " call returned an empty response");
    }
    entry.response = response;
    record();
    return response;
  } catch (const std::exception& e) {
    entry.error = e.what();
    record();
    throw;
  }
}

std::vector<LoggedRequest> LlmGateway::request_log() const {
  std::lock_guard lock(log_mu_);
  return log_;
}

std::size_t LlmGateway::call_count() const {
  std::lock_guard lock(log_mu_);
  return total_calls_;
}

std::size_t LlmGateway::call_count(Purpose purpose) const {
  std::lock_guard lock(log_mu_);
  std::size_t n = 0;
  for (const auto& [key, count] : counts_) {
    if (key.second == purpose) n += count;
  }
  return n;
}

std::size_t LlmGateway::call_count(Purpose purpose, std::string_view session_id) const {
  std::lock_guard lock(log_mu_);
  auto it = counts_.find({std::string(session_id), purpose});
  return it == counts_.end() ? 0 : it->second;
}

std::map<Purpose, std::size_t> LlmGateway::call_counts(std::string_view session_id) const {
  std::lock_guard lock(log_mu_);
  std::map<Purpose, std::size_t> out;
  for (const auto& [key, count] : counts_) {
    if (key.first == session_id) out[key.second] = count;
  }
  return out;
}

void LlmGateway::set_log_limit(std::size_t limit) {
  std::lock_guard lock(log_mu_);
  log_limit_ = limit;
}

void LlmGateway::clear_log() {
  std::lock_guard lock(log_mu_);
  log_.clear();
  counts_.clear();
  total_calls_ = 0;
}

}  // namespace mrdrag
