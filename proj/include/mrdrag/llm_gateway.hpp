#pragma once

#include <cstddef>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <semaphore>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "mrdrag/embedding.hpp"

namespace mrdrag {

enum class Role { System, User, Assistant };

/// Which pipeline stage issued a chat call. Every logged request carries one.
enum class Purpose { Gate, Analyzer, Doctor, Patient, Judge };

inline constexpr Purpose kAllPurposes[] = {Purpose::Gate, Purpose::Analyzer, Purpose::Doctor, Purpose::Patient,
                                           Purpose::Judge};

std::string_view to_string(Role r);
std::string_view to_string(Purpose p);
std::optional<Purpose> parse_purpose(std::string_view s);

struct ChatMessage {
  Role role = Role::User;
  std::string content;

  bool operator==(const ChatMessage&) const = default;
};

struct ChatRequest {
  std::vector<ChatMessage> messages;
  std::string model_name;
  double temperature = 0.0;
  int max_output_tokens = 1024;
  Purpose purpose = Purpose::Doctor;
  std::string session_id;  // log correlation only; never sent to a provider

  /// Concatenation of every message body, for substring assertions.
  std::string joined_content() const;
};

/// Throws Error(InvalidRequest) when messages are empty, a message is blank,
/// or the first message is from the assistant.
void validate_request(const ChatRequest& request);

class ChatBackend {
 public:
  virtual ~ChatBackend() = default;
  virtual std::string complete(const ChatRequest& request) = 0;
};

/// OpenAI-compatible POST {base_url}/chat/completions.
class OpenAiChatBackend final : public ChatBackend {
 public:
  explicit OpenAiChatBackend(RemoteEndpoint endpoint);
  std::string complete(const ChatRequest& request) override;

 private:
  RemoteEndpoint endpoint_;
  std::counting_semaphore<1024> in_flight_;
};

/// A mock rule answers any request of its purpose (or every purpose when
/// unset) whose joined content contains `contains` (empty matches all).
struct MockRule {
  std::optional<Purpose> purpose;
  std::string contains;
  std::string reply;
};

/// Queued replies are consumed first, per purpose, in script order. Once a
/// purpose's queue is empty the first matching rule answers. With neither,
/// the call fails with ScriptExhausted; queues are never recycled.
struct MockScript {
  std::vector<std::pair<Purpose, std::string>> queue;
  std::vector<MockRule> rules;

  MockScript& then(Purpose p, std::string reply) {
    queue.emplace_back(p, std::move(reply));
    return *this;
  }
  MockScript& always(Purpose p, std::string reply, std::string contains = {}) {
    rules.push_back(MockRule{p, std::move(contains), std::move(reply)});
    return *this;
  }

  /// {"queue": [{"purpose": "Doctor", "text": "..."}],
  ///  "rules": [{"purpose": "Gate", "contains": "...", "reply": "YES"}]}
  static MockScript from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
};

class MockChatBackend final : public ChatBackend {
 public:
  explicit MockChatBackend(MockScript script);
  std::string complete(const ChatRequest& request) override;

  /// Queue entries not yet consumed.
  std::size_t remaining() const;

 private:
  mutable std::mutex mu_;
  std::vector<std::pair<Purpose, std::string>> queue_;
  std::vector<bool> consumed_;
  std::vector<MockRule> rules_;
};

struct PurposeSettings {
  std::string model_name;
  double temperature = 0.0;
  int max_output_tokens = 1024;
};

/// Per-purpose model routing. Defaults: temperature 0 for Gate and Judge,
/// 0.7 otherwise; the gate uses the doctor's model unless configured.
struct GatewayConfig {
  std::map<Purpose, PurposeSettings> purposes;

  static GatewayConfig defaults();
  const PurposeSettings& at(Purpose p) const;
};

struct LoggedRequest {
  ChatRequest request;
  std::string response;  // empty when the call failed
  std::string error;     // empty on success
};

/// Single entry point for every LLM call in the pipeline. Routes each purpose
/// to its backend and settings, rejects empty responses, and records every
/// call (successful or not) in the request log.
class LlmGateway {
 public:
  explicit LlmGateway(std::shared_ptr<ChatBackend> backend, GatewayConfig config = GatewayConfig::defaults());

  void set_backend(Purpose purpose, std::shared_ptr<ChatBackend> backend);

  /// Throws ResponseEmpty for blank output; backend errors propagate.
  std::string chat(Purpose purpose, std::vector<ChatMessage> messages, std::string_view session_id = {});

  const GatewayConfig& config() const noexcept { return config_; }

  std::vector<LoggedRequest> request_log() const;
  std::size_t call_count() const;
  std::size_t call_count(Purpose purpose) const;
  std::size_t call_count(Purpose purpose, std::string_view session_id) const;
  std::map<Purpose, std::size_t> call_counts(std::string_view session_id) const;

  /// When non-zero only the most recent `limit` entries are kept (counters
  /// are unaffected). Long-running services set this.
  void set_log_limit(std::size_t limit);
  void clear_log();

 private:
  std::shared_ptr<ChatBackend> backend_for(Purpose p) const;

  GatewayConfig config_;
  std::shared_ptr<ChatBackend> default_backend_;
  std::map<Purpose, std::shared_ptr<ChatBackend>> backends_;

  mutable std::mutex log_mu_;
  std::vector<LoggedRequest> log_;
  std::size_t log_limit_ = 0;
  std::map<std::pair<std::string, Purpose>, std::size_t> counts_;
  std::size_t total_calls_ = 0;
};

}  // namespace mrdrag
