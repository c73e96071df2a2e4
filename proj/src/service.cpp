#include "mrdrag/service.hpp"

#include <csignal>
#include <future>
#include <regex>
#include <thread>

#include <httplib.h>
#include <spdlog/spdlog.h>

#include "mrdrag/error.hpp"
#include "mrdrag/util.hpp"

namespace mrdrag {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const std::regex kSessionIdPattern("[A-Za-z0-9._-]{1,128}");

void check_session_id(const std::string& id) {
  if (!std::regex_match(id, kSessionIdPattern) || id == "." || id == "..") {
    throw Error(ErrorCode::InvalidRequest, "invalid session id '" + id + "'");
  }
}

json hit_summary(const RetrievalHit& h, const Corpus& corpus) {
  const auto* d = corpus.find(h.disease_id);
  return {{"disease_id", h.disease_id},
          {"name", d ? d->name : ""},
          {"score", h.score},
          {"source", to_string(h.source)},
          {"rank", h.rank}};
}

}  // namespace

SessionService::SessionService(AppContext& context) : context_(context) {
  if (!context_.config().service.sessions_dir.empty()) reload_sessions();
}

SessionService::~SessionService() {
  std::unique_lock lock(inflight_mu_);
  inflight_cv_.wait(lock, [&] { return inflight_ == 0; });
}

json SessionService::health() const {
  return {{"status", "ok"},
          {"corpus_fingerprint", context_.corpus().fingerprint()},
          {"diseases", context_.corpus().size()},
          {"sessions", session_count()}};
}

std::size_t SessionService::session_count() const {
  std::lock_guard lock(mu_);
  return sessions_.size();
}

std::shared_ptr<SessionService::Entry> SessionService::find(const std::string& session_id) const {
  std::lock_guard lock(mu_);
  auto it = sessions_.find(session_id);
  if (it == sessions_.end()) throw Error(ErrorCode::NotFound, "no session '" + session_id + "'");
  return it->second;
}

void SessionService::persist(const Session& session) const {
  const auto& dir = context_.config().service.sessions_dir;
  if (dir.empty()) return;
  const auto transcript = make_transcript(session, context_.engine());
  write_text_file((dir / (session.session_id + ".json")).string(), to_json(transcript).dump(2) + "\n");
}

std::size_t SessionService::reload_sessions() {
  const auto& dir = context_.config().service.sessions_dir;
  if (dir.empty() || !fs::is_directory(dir)) return 0;
  std::size_t loaded = 0;
  for (const auto& file : fs::directory_iterator(dir)) {
    if (file.path().extension() != ".json") continue;
    try {
      auto t = transcript_from_json(json::parse(read_text_file(file.path().string())));
      auto entry = std::make_shared<Entry>();
      entry->session = std::move(t.session);
      std::lock_guard lock(mu_);
      sessions_[entry->session.session_id] = std::move(entry);
      ++loaded;
    } catch (const std::exception& e) {
      spdlog::warn("skipping session file {}: {}", file.path().string(), e.what());
    }
  }
  spdlog::info("reloaded {} session(s) from {}", loaded, dir.string());
  return loaded;
}

json SessionService::create_session(const json& body) {
  if (!body.is_object()) throw Error(ErrorCode::InvalidRequest, "request body must be a JSON object");
  std::string id;
  EngineConfig config = context_.config().engine;
  std::optional<CaseRef> case_ref;
  try {
    id = body.value("session_id", "");
    if (body.contains("engine")) config = engine_config_from_json(body["engine"], config);
    if (body.contains("case_id")) {
      case_ref = CaseRef{body["case_id"].get<std::string>(), body.value("gold_disease_id", ""),
                         body.value("gold_disease_name", "")};
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::InvalidRequest, e.what());
  } catch (const Error& e) {
    throw Error(ErrorCode::InvalidRequest, e.what());
  }
  if (!id.empty()) check_session_id(id);

  auto entry = std::make_shared<Entry>();
  entry->session = context_.engine().create_session(config, id, std::move(case_ref));
  const auto session_id = entry->session.session_id;
  {
    std::lock_guard lock(mu_);
    if (sessions_.contains(session_id)) throw Error(ErrorCode::InvalidRequest, "session '" + session_id + "' exists");
    sessions_[session_id] = entry;
  }
  persist(entry->session);
  return {{"session_id", session_id},
          {"status", to_string(entry->session.status)},
          {"config", to_json(entry->session.config)},
          {"created_at", entry->session.created_at}};
}

json SessionService::post_message(const std::string& session_id, const json& body) {
  if (!body.is_object() || !body.contains("text") || !body["text"].is_string()) {
    throw Error(ErrorCode::InvalidRequest, "body must be {\"text\": string}");
  }
  const std::string text = body["text"].get<std::string>();
  const bool include_thinking = body.value("include_thinking", false);
  auto entry = find(session_id);

  bool expected = false;
  if (!entry->busy.compare_exchange_strong(expected, true)) {
    throw Error(ErrorCode::SessionBusy, "session '" + session_id + "' is processing another message");
  }
  {
    std::lock_guard lock(inflight_mu_);
    ++inflight_;
  }

  auto done = std::make_shared<std::promise<json>>();
  auto result = done->get_future();
  std::thread([this, entry, text, include_thinking, done] {
    Session working;
    {
      std::lock_guard lock(entry->mu);
      working = entry->session;
    }
    try {
      auto& engine = context_.engine();
      engine.run_round(working, text);
      const auto& round = working.rounds.back();
      json hits = json::array();
      for (const auto& h : round.hits) hits.push_back(hit_summary(h, context_.corpus()));
      json response = {{"session_id", working.session_id},
                       {"round_index", round.round_index},
                       {"status", to_string(working.status)},
                       {"kind", to_string(round.action.kind)},
                       {"text", round.action.text},
                       {"action", to_json(round.action)},
                       {"gate", round.gate ? json{{"retrieve", round.gate->retrieve},
                                                  {"consulted_llm", round.gate->consulted_llm},
                                                  {"fail_open", round.gate->fail_open}}
                                           : json(nullptr)},
                       {"searched", round.searched},
                       {"hits", hits}};
      response["action"].erase("raw_llm_text");
      if (include_thinking && round.analysis) response["thinking"] = round.analysis->thinking_text;
      persist(working);
      {
        std::lock_guard lock(entry->mu);
        entry->session = std::move(working);
      }
      entry->busy = false;
      done->set_value(std::move(response));
    } catch (...) {
      try {
        persist(working);
      } catch (const std::exception& e) {
        spdlog::error("persisting session {} failed: {}", working.session_id, e.what());
      }
      {
        std::lock_guard lock(entry->mu);
        entry->session = std::move(working);
      }
      entry->busy = false;
      done->set_exception(std::current_exception());
    }
    std::lock_guard lock(inflight_mu_);
    --inflight_;
    inflight_cv_.notify_all();
  }).detach();

  const auto timeout = context_.config().service.request_timeout;
  if (result.wait_for(timeout) == std::future_status::timeout) {
    throw Error(ErrorCode::Timeout, "round did not finish within " + std::to_string(timeout.count()) + " ms");
  }
  return result.get();
}

json SessionService::get_session(const std::string& session_id) const {
  auto entry = find(session_id);
  Session copy;
  {
    std::lock_guard lock(entry->mu);
    copy = entry->session;
  }
  return to_json(make_transcript(copy, context_.engine()));
}

json SessionService::get_disease(const std::string& disease_id) const {
  const auto* d = context_.corpus().find(disease_id);
  if (!d) throw Error(ErrorCode::NotFound, "no disease '" + disease_id + "'");
  return to_json(*d, true);
}

// ---------------------------------------------------------------------------

int http_status(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidRequest:
    case ErrorCode::ConfigError:
    case ErrorCode::EmptyText:
      return 400;
    case ErrorCode::Unauthorized: return 401;
    case ErrorCode::NotFound: return 404;
    case ErrorCode::SessionConcluded:
    case ErrorCode::SessionBusy:
      return 409;
    case ErrorCode::BackendUnavailable:
    case ErrorCode::ScriptExhausted:
    case ErrorCode::ResponseEmpty:
    case ErrorCode::EmptyResponse:
    case ErrorCode::EmbeddingFailed:
      return 502;
    case ErrorCode::Timeout: return 504;
    default: return 500;
  }
}

json error_body(ErrorCode code, std::string_view message) {
  return {{"error", {{"code", error_wire_code(code)}, {"message", message}}}};
}

namespace {

template <typename Fn>
void respond(httplib::Response& res, Fn&& fn) {
  try {
    res.status = 200;
    res.set_content(fn().dump(), "application/json");
  } catch (const Error& e) {
    res.status = http_status(e.code());
    res.set_content(error_body(e.code(), e.what()).dump(), "application/json");
  } catch (const std::exception& e) {
    res.status = 500;
    res.set_content(json{{"error", {{"code", "INTERNAL"}, {"message", e.what()}}}}.dump(), "application/json");
  }
}

json parse_body(const httplib::Request& req) {
  if (req.body.empty()) return json::object();
  try {
    return json::parse(req.body);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::InvalidRequest, std::string("request body is not JSON: ") + e.what());
  }
}

}  // namespace

void mount_routes(httplib::Server& server, SessionService& service, const std::string& auth_token) {
  if (!auth_token.empty()) {
    server.set_pre_routing_handler([auth_token](const httplib::Request& req, httplib::Response& res) {
      if (req.path == "/health") return httplib::Server::HandlerResponse::Unhandled;
      if (req.get_header_value("Authorization") == "Bearer " + auth_token) {
        return httplib::Server::HandlerResponse::Unhandled;
      }
      res.status = 401;
      res.set_content(error_body(ErrorCode::Unauthorized, "missing or wrong bearer token").dump(), "application/json");
      return httplib::Server::HandlerResponse::Handled;
    });
  }
  server.Get("/health", [&service](const httplib::Request&, httplib::Response& res) {
    respond(res, [&] { return service.health(); });
  });
  server.Post("/sessions", [&service](const httplib::Request& req, httplib::Response& res) {
    respond(res, [&] { return service.create_session(parse_body(req)); });
  });
  server.Post(R"(/sessions/([^/]+)/messages)", [&service](const httplib::Request& req, httplib::Response& res) {
    respond(res, [&] { return service.post_message(req.matches[1], parse_body(req)); });
  });
  server.Get(R"(/sessions/([^/]+))", [&service](const httplib::Request& req, httplib::Response& res) {
    respond(res, [&] { return service.get_session(req.matches[1]); });
  });
  server.Get(R"(/diseases/([^/]+))", [&service](const httplib::Request& req, httplib::Response& res) {
    respond(res, [&] { return service.get_disease(req.matches[1]); });
  });
  server.set_error_handler([](const httplib::Request&, httplib::Response& res) {
    if (!res.body.empty()) return;
    const auto code = res.status == 404 ? ErrorCode::NotFound : ErrorCode::InvalidRequest;
    res.set_content(error_body(code, "no such route").dump(), "application/json");
  });
}

namespace {
std::atomic<httplib::Server*> g_server{nullptr};

extern "C" void stop_on_signal(int) {
  if (auto* s = g_server.load()) s->stop();
}
}  // namespace

void serve(AppContext& context, const std::function<void(int)>& on_ready) {
  const auto& cfg = context.config().service;
  SessionService service(context);
  httplib::Server server;
  mount_routes(server, service, cfg.auth_token);
  const auto timeout_s = std::chrono::duration_cast<std::chrono::seconds>(cfg.request_timeout).count() + 5;
  server.set_read_timeout(timeout_s, 0);
  server.set_write_timeout(timeout_s, 0);

  int port = cfg.port;
  if (port == 0) {
    port = server.bind_to_any_port(cfg.host);
  } else if (!server.bind_to_port(cfg.host, port)) {
    port = -1;
  }
  if (port < 0) throw Error(ErrorCode::ConfigError, "cannot bind " + cfg.host + ":" + std::to_string(cfg.port));

  g_server = &server;
  std::signal(SIGINT, stop_on_signal);
  std::signal(SIGTERM, stop_on_signal);
  spdlog::info("serving on {}:{} (corpus {})", cfg.host, port, context.corpus().fingerprint().substr(0, 12));
  if (on_ready) on_ready(port);
  server.listen_after_bind();
  g_server = nullptr;
}

}  // namespace mrdrag
