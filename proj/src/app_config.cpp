#include "mrdrag/app_config.hpp"

#include <cstdlib>

#include <spdlog/spdlog.h>

#include "mrdrag/error.hpp"
#include "mrdrag/util.hpp"

namespace mrdrag {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

fs::path resolve(const fs::path& base, const std::string& p) {
  if (p.empty()) return {};
  fs::path path(p);
  return path.is_absolute() || base.empty() ? path : base / path;
}

[[noreturn]] void bad(const std::string& field, const std::string& why) {
  throw Error(ErrorCode::ConfigError, "config field '" + field + "': " + why);
}

void read_models(const json& j, GatewayConfig& models) {
  if (!j.is_object()) bad("models", "expected an object keyed by purpose");
  bool gate_given = false;
  for (const auto& [key, value] : j.items()) {
    auto purpose = parse_purpose(key);
    if (!purpose) bad("models." + key, "unknown purpose");
    if (*purpose == Purpose::Gate) gate_given = true;
    auto& s = models.purposes[*purpose];
    if (value.is_string()) {
      s.model_name = value.get<std::string>();
      continue;
    }
    s.model_name = value.value("model", s.model_name);
    s.temperature = value.value("temperature", s.temperature);
    s.max_output_tokens = value.value("max_output_tokens", s.max_output_tokens);
  }
  if (!gate_given && models.purposes.contains(Purpose::Doctor)) {
    models.purposes[Purpose::Gate].model_name = models.purposes[Purpose::Doctor].model_name;
  }
}

}  // namespace

void AppConfig::validate() const {
  if (corpus_dir.empty()) bad("corpus_dir", "required");
  if (!fs::is_directory(corpus_dir)) bad("corpus_dir", corpus_dir.string() + " is not a directory");
  if (index_path.empty()) bad("index_path", "required");
  if (!build_index_if_missing && !fs::exists(index_path)) bad("index_path", index_path.string() + " does not exist");
  if (embedder.dim == 0) bad("embedder.dim", "must be positive");
  if (embedder.backend == EmbedderBackend::RemoteAPI && endpoint.api_key.empty()) {
    bad("endpoint.api_key", "remote embedder needs an API key (set MRDRAG_API_KEY)");
  }
  if (llm_backend == LlmBackendKind::Mock && !mock_script && mock_script_path.empty()) {
    bad("llm.script", "mock backend needs a script");
  }
  if (!mock_script_path.empty() && !fs::exists(mock_script_path)) {
    bad("llm.script", mock_script_path.string() + " does not exist");
  }
  if (llm_backend == LlmBackendKind::OpenAi && endpoint.api_key.empty()) {
    bad("endpoint.api_key", "OpenAI-compatible backend needs an API key (set MRDRAG_API_KEY)");
  }
  for (const auto& [name, path] : prompt_overrides) {
    if (!fs::exists(path)) bad("prompts." + name, path.string() + " does not exist");
  }
  for (auto p : kAllPurposes) {
    if (models.at(p).model_name.empty()) bad("models." + std::string(to_string(p)), "empty model name");
  }
  if (service.port < 0 || service.port > 65535) bad("service.port", "out of range");
  if (service.request_timeout.count() <= 0) bad("service.request_timeout_ms", "must be positive");
  engine.validate();
}

AppConfig app_config_from_json(const json& j, const fs::path& base_dir) {
  if (!j.is_object()) throw Error(ErrorCode::ConfigError, "config must be a JSON object");
  AppConfig c;
  try {
    c.corpus_dir = resolve(base_dir, j.value("corpus_dir", ""));
    c.index_path = resolve(base_dir, j.value("index_path", ""));
    c.build_index_if_missing = j.value("build_index_if_missing", c.build_index_if_missing);
    c.index_workers = j.value("index_workers", c.index_workers);
    if (j.contains("embedder")) {
      const auto& e = j["embedder"];
      const auto backend = to_lower_ascii(e.value("backend", "deterministic"));
      if (backend == "remote") {
        c.embedder.backend = EmbedderBackend::RemoteAPI;
      } else if (backend != "deterministic") {
        bad("embedder.backend", "expected 'deterministic' or 'remote'");
      }
      c.embedder.model_name = e.value("model", c.embedder.model_name);
      c.embedder.dim = e.value("dim", c.embedder.dim);
    }
    if (j.contains("endpoint")) {
      const auto& e = j["endpoint"];
      c.endpoint.base_url = e.value("base_url", c.endpoint.base_url);
      c.endpoint.api_key = e.value("api_key", c.endpoint.api_key);
      c.endpoint.max_in_flight = e.value("max_in_flight", c.endpoint.max_in_flight);
      c.endpoint.attempts = e.value("attempts", c.endpoint.attempts);
      c.endpoint.initial_backoff = std::chrono::milliseconds(
          e.value("initial_backoff_ms", static_cast<std::int64_t>(c.endpoint.initial_backoff.count())));
      c.endpoint.timeout = std::chrono::seconds(e.value("timeout_s", static_cast<std::int64_t>(c.endpoint.timeout.count())));
    }
    if (j.contains("models")) read_models(j["models"], c.models);
    if (j.contains("llm")) {
      const auto& l = j["llm"];
      const auto backend = to_lower_ascii(l.value("backend", "openai"));
      if (backend == "mock") {
        c.llm_backend = LlmBackendKind::Mock;
      } else if (backend != "openai") {
        bad("llm.backend", "expected 'openai' or 'mock'");
      }
      if (l.contains("script")) {
        if (l["script"].is_string()) {
          c.mock_script_path = resolve(base_dir, l["script"].get<std::string>());
        } else {
          c.mock_script = MockScript::from_json(l["script"]);
        }
      }
    }
    if (j.contains("prompts")) {
      for (const auto& [name, path] : j["prompts"].items()) c.prompt_overrides[name] = resolve(base_dir, path.get<std::string>());
    }
    if (j.contains("engine")) c.engine = engine_config_from_json(j["engine"]);
    if (j.contains("patient")) {
      const auto mode = to_lower_ascii(j["patient"].get<std::string>());
      if (mode == "scripted") {
        c.patient = PatientMode::Scripted;
      } else if (mode != "llm") {
        bad("patient", "expected 'scripted' or 'llm'");
      }
    }
    c.seed = j.value("seed", c.seed);
    c.fixed_clock = j.value("fixed_clock", c.fixed_clock);
    if (j.contains("service")) {
      const auto& s = j["service"];
      c.service.host = s.value("host", c.service.host);
      c.service.port = s.value("port", c.service.port);
      c.service.auth_token = s.value("auth_token", c.service.auth_token);
      c.service.request_timeout = std::chrono::milliseconds(
          s.value("request_timeout_ms", static_cast<std::int64_t>(c.service.request_timeout.count())));
      c.service.sessions_dir = resolve(base_dir, s.value("sessions_dir", ""));
      c.service.request_log_limit = s.value("request_log_limit", c.service.request_log_limit);
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ConfigError, std::string("config: ") + e.what());
  }
  return c;
}

void apply_env_overrides(AppConfig& config) {
  if (const char* v = std::getenv("MRDRAG_API_KEY"); v && *v) config.endpoint.api_key = v;
  if (const char* v = std::getenv("MRDRAG_BASE_URL"); v && *v) config.endpoint.base_url = v;
  if (const char* v = std::getenv("MRDRAG_AUTH_TOKEN"); v && *v) config.service.auth_token = v;
}

AppConfig load_app_config(const fs::path& path) {
  json j;
  try {
    j = json::parse(read_text_file(path.string()));
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ConfigError, path.string() + ": " + e.what());
  } catch (const Error& e) {
    throw Error(ErrorCode::ConfigError, e.what());
  }
  auto config = app_config_from_json(j, path.parent_path());
  apply_env_overrides(config);
  return config;
}

std::shared_ptr<ChatBackend> make_chat_backend(const AppConfig& config) {
  if (config.llm_backend == LlmBackendKind::OpenAi) return std::make_shared<OpenAiChatBackend>(config.endpoint);
  MockScript script = config.mock_script ? *config.mock_script : MockScript{};
  if (!config.mock_script) {
    try {
      script = MockScript::from_json(json::parse(read_text_file(config.mock_script_path.string())));
    } catch (const json::exception& e) {
      throw Error(ErrorCode::ConfigError, config.mock_script_path.string() + ": " + e.what());
    }
  }
  return std::make_shared<MockChatBackend>(std::move(script));
}

Clock make_clock(const AppConfig& config) {
  if (!config.fixed_clock) return [] { return std::chrono::system_clock::now(); };
  return [] { return std::chrono::system_clock::time_point(std::chrono::seconds(1704067200)); };
}

// ---------------------------------------------------------------------------

AppContext::AppContext(AppConfig config, Corpus corpus, std::unique_ptr<Embedder> embedder, DualIndex index)
    : config_(std::move(config)),
      corpus_(std::move(corpus)),
      embedder_(std::move(embedder)),
      index_(std::move(index)),
      prompts_(PromptLibrary::defaults()) {
  for (const auto& [name, path] : config_.prompt_overrides) prompts_.override_from_file(name, path);
  gateway_ = std::make_unique<LlmGateway>(make_chat_backend(config_), config_.models);
  gateway_->set_log_limit(config_.service.request_log_limit);
  engine_ = std::make_unique<DialogueEngine>(
      EngineDeps{corpus_, index_, *embedder_, *gateway_, prompts_, make_clock(config_)});
}

std::unique_ptr<AppContext> AppContext::open(const AppConfig& config) {
  config.validate();
  Corpus corpus = load_corpus(config.corpus_dir);
  auto embedder = make_embedder(config.embedder, config.endpoint);
  std::optional<DualIndex> index;
  if (fs::exists(config.index_path)) {
    index = load_index(config.index_path, corpus);
  } else {
    spdlog::info("index {} not found; building it", config.index_path.string());
    index = build_index(corpus, *embedder, config.index_workers);
    save_index(*index, config.index_path);
  }
  if (index->dim() != embedder->dim()) {
    throw Error(ErrorCode::DimensionMismatch, "index dimension " + std::to_string(index->dim()) +
                                                  " differs from embedder dimension " + std::to_string(embedder->dim()));
  }
  return std::unique_ptr<AppContext>(new AppContext(config, std::move(corpus), std::move(embedder), std::move(*index)));
}

std::unique_ptr<Patient> AppContext::make_patient(const PatientCase& patient_case, const std::string& session_id) {
  if (config_.patient == PatientMode::Scripted) {
    if (patient_case.scripted_replies.empty()) {
      throw Error(ErrorCode::InvalidRequest, "case " + patient_case.case_id + " has no scripted replies");
    }
    return std::make_unique<ScriptedPatient>(patient_case.scripted_replies);
  }
  return std::make_unique<LlmPatient>(*gateway_, prompts_, session_id);
}

}  // namespace mrdrag
