#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>

#include <nlohmann/json.hpp>

#include "mrdrag/dialogue_engine.hpp"
#include "mrdrag/embedding.hpp"
#include "mrdrag/kg_store.hpp"
#include "mrdrag/llm_gateway.hpp"
#include "mrdrag/prompts.hpp"

namespace mrdrag {

enum class LlmBackendKind { OpenAi, Mock };
enum class PatientMode { Scripted, Llm };

struct ServiceConfig {
  std::string host = "127.0.0.1";
  int port = 8080;
  std::string auth_token;  // empty disables auth
  std::chrono::milliseconds request_timeout{120000};
  std::filesystem::path sessions_dir;  // empty disables persistence
  std::size_t request_log_limit = 10000;
};

/// Configuration file contents. Relative paths are resolved against the
/// directory of the file they were read from. Secrets may come from the
/// environment: MRDRAG_API_KEY, MRDRAG_BASE_URL, MRDRAG_AUTH_TOKEN.
struct AppConfig {
  std::filesystem::path corpus_dir;
  std::filesystem::path index_path;
  bool build_index_if_missing = true;
  std::size_t index_workers = 1;
  EmbedderSpec embedder;
  RemoteEndpoint endpoint;
  GatewayConfig models = GatewayConfig::defaults();
  LlmBackendKind llm_backend = LlmBackendKind::OpenAi;
  std::filesystem::path mock_script_path;
  std::optional<MockScript> mock_script;  // inline alternative to the path
  std::map<std::string, std::filesystem::path> prompt_overrides;
  EngineConfig engine;
  PatientMode patient = PatientMode::Llm;
  std::uint64_t seed = 42;
  bool fixed_clock = false;  // every timestamp reads 2024-01-01T00:00:00Z
  ServiceConfig service;

  /// Throws ConfigError naming the first bad field.
  void validate() const;
};

AppConfig app_config_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
/// Reads the file, then applies environment overrides.
AppConfig load_app_config(const std::filesystem::path& path);
void apply_env_overrides(AppConfig& config);

/// Loaded corpus, index, embedder, gateway, prompts and engine for one
/// configuration. Not copyable or movable: the engine refers to its members.
class AppContext {
 public:
  /// Loads the corpus, then loads the index (building and saving it first
  /// when missing and allowed) and checks its fingerprint.
  static std::unique_ptr<AppContext> open(const AppConfig& config);

  AppContext(const AppContext&) = delete;
  AppContext& operator=(const AppContext&) = delete;

  const AppConfig& config() const noexcept { return config_; }
  const Corpus& corpus() const noexcept { return corpus_; }
  const DualIndex& index() const noexcept { return index_; }
  const Embedder& embedder() const noexcept { return *embedder_; }
  LlmGateway& gateway() noexcept { return *gateway_; }
  const PromptLibrary& prompts() const noexcept { return prompts_; }
  DialogueEngine& engine() noexcept { return *engine_; }

  /// A patient for `patient_case` per the configured mode.
  std::unique_ptr<Patient> make_patient(const PatientCase& patient_case, const std::string& session_id);

 private:
  AppContext(AppConfig config, Corpus corpus, std::unique_ptr<Embedder> embedder, DualIndex index);

  AppConfig config_;
  Corpus corpus_;
  std::unique_ptr<Embedder> embedder_;
  DualIndex index_;
  PromptLibrary prompts_;
  std::unique_ptr<LlmGateway> gateway_;
  std::unique_ptr<DialogueEngine> engine_;
};

/// The chat backend a configuration asks for.
std::shared_ptr<ChatBackend> make_chat_backend(const AppConfig& config);

Clock make_clock(const AppConfig& config);

}  // namespace mrdrag
