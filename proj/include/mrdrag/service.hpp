#pragma once

#include <atomic>
#include <condition_variable>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <string>

#include <nlohmann/json.hpp>

#include "mrdrag/app_config.hpp"

namespace httplib {
class Server;
}

namespace mrdrag {

/// Session operations behind the HTTP API, independent of the transport.
/// Methods return response bodies and throw Error with a stable code.
/// Rounds of one session are serialized by rejecting a concurrent request
/// with SessionBusy; different sessions run in parallel.
class SessionService {
 public:
  explicit SessionService(AppContext& context);
  ~SessionService();

  SessionService(const SessionService&) = delete;
  SessionService& operator=(const SessionService&) = delete;

  nlohmann::json health() const;

  /// Body fields, all optional: session_id, engine (EngineConfig overrides),
  /// case_id, gold_disease_id, gold_disease_name.
  nlohmann::json create_session(const nlohmann::json& body);

  /// Body: {"text": "...", "include_thinking": false}. Throws Timeout when
  /// the round outlives the configured request timeout; that round still
  /// completes in the background and the session stays busy until it does.
  nlohmann::json post_message(const std::string& session_id, const nlohmann::json& body);

  /// The session's transcript.
  nlohmann::json get_session(const std::string& session_id) const;

  nlohmann::json get_disease(const std::string& disease_id) const;

  std::size_t session_count() const;

  /// Reads every transcript in the sessions directory. Returns how many.
  std::size_t reload_sessions();

 private:
  struct Entry {
    std::mutex mu;  // guards `session`
    std::atomic<bool> busy{false};
    Session session;
  };

  std::shared_ptr<Entry> find(const std::string& session_id) const;
  void persist(const Session& session) const;

  AppContext& context_;
  mutable std::mutex mu_;
  std::map<std::string, std::shared_ptr<Entry>> sessions_;

  std::mutex inflight_mu_;
  std::condition_variable inflight_cv_;
  std::size_t inflight_ = 0;
};

/// HTTP status for an error code.
int http_status(ErrorCode code);
nlohmann::json error_body(ErrorCode code, std::string_view message);

/// Mounts the API on `server`:
///   GET  /health
///   POST /sessions
///   POST /sessions/{id}/messages
///   GET  /sessions/{id}
///   GET  /diseases/{id}
/// When a token is configured every route except /health requires
/// "Authorization: Bearer <token>".
void mount_routes(httplib::Server& server, SessionService& service, const std::string& auth_token);

/// Blocks serving on config.service.host:port until the process is stopped.
/// `on_ready` receives the bound port.
void serve(AppContext& context, const std::function<void(int)>& on_ready = {});

}  // namespace mrdrag
