#pragma once

#include <chrono>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "mrdrag/analyzer.hpp"
#include "mrdrag/dialogue.hpp"
#include "mrdrag/doctor.hpp"
#include "mrdrag/dual_index.hpp"
#include "mrdrag/llm_gateway.hpp"
#include "mrdrag/patient_sim.hpp"
#include "mrdrag/prompts.hpp"
#include "mrdrag/retriever.hpp"

namespace mrdrag {

enum class SessionStatus { AwaitingPatient, Concluded };

std::string_view to_string(SessionStatus s);

struct EngineConfig {
  std::size_t max_rounds = 5;  // the doctor must diagnose in this round
  RetrieverConfig retriever;
  bool analyzer_enabled = true;

  void validate() const;
  bool operator==(const EngineConfig&) const = default;
};

/// Everything one round produced, kept inline in the session.
struct RoundArtifact {
  std::size_t round_index = 0;
  std::optional<GateDecision> gate;  // unset when gating is disabled
  bool searched = false;
  std::vector<RetrievalHit> hits;
  std::vector<KnowledgePacket> packets;
  std::optional<AnalyzerOutput> analysis;  // unset when the analyzer is disabled
  bool force_diagnose = false;
  DoctorAction action;

  bool operator==(const RoundArtifact&) const = default;
};

struct StageError {
  std::size_t round_index = 0;
  std::string stage;  // patient | retrieve | analyze | doctor
  std::string code;   // error_wire_code
  std::string message;

  bool operator==(const StageError&) const = default;
};

struct CaseRef {
  std::string case_id;
  std::string gold_disease_id;
  std::string gold_disease_name;

  bool operator==(const CaseRef&) const = default;
};

/// Dialogue state. Turns alternate Patient/Doctor starting with Patient;
/// there is one artifact per doctor turn; status is Concluded exactly when
/// the last action is a Diagnose.
struct Session {
  std::string session_id;
  std::optional<CaseRef> case_ref;
  EngineConfig config;
  SessionStatus status = SessionStatus::AwaitingPatient;
  std::vector<DialogueTurn> turns;
  std::vector<RoundArtifact> rounds;
  std::vector<StageError> errors;
  std::string created_at;
  std::string updated_at;
  std::int64_t elapsed_ms = 0;  // time spent inside run_round

  std::size_t next_round() const noexcept { return rounds.size() + 1; }
  bool operator==(const Session&) const = default;
};

using Clock = std::function<std::chrono::system_clock::time_point()>;

/// Shared, read-only dependencies plus the gateway. The referenced objects
/// must outlive the engine.
struct EngineDeps {
  const Corpus& corpus;
  const DualIndex& index;
  const Embedder& embedder;
  LlmGateway& gateway;
  const PromptLibrary& prompts;
  Clock clock = [] { return std::chrono::system_clock::now(); };
};

/// Runs rounds of patient turn -> gate -> retrieve -> analyze -> doctor.
/// Any number of sessions may run concurrently; a second concurrent
/// run_round on the same session id is rejected with SessionBusy.
class DialogueEngine {
 public:
  explicit DialogueEngine(EngineDeps deps);

  Session create_session(EngineConfig config, std::string session_id = {},
                         std::optional<CaseRef> case_ref = std::nullopt) const;

  /// Appends the patient turn and the doctor's answer. On a stage failure
  /// the session keeps its previous turns, gains a StageError, and the error
  /// is rethrown. Throws SessionConcluded after a diagnosis.
  DoctorAction run_round(Session& session, std::string_view patient_utterance);

  std::size_t search_count() const noexcept { return retriever_.search_count(); }
  const Retriever& retriever() const noexcept { return retriever_; }
  LlmGateway& gateway() const noexcept { return deps_.gateway; }
  const PromptLibrary& prompts() const noexcept { return deps_.prompts; }
  const Corpus& corpus() const noexcept { return deps_.corpus; }
  std::string now() const;

 private:
  EngineDeps deps_;
  Retriever retriever_;
  std::mutex busy_mu_;
  std::set<std::string> busy_;
};

/// A session plus the environment it ran in, as written to disk.
struct Transcript {
  static constexpr std::string_view kVersion = "mrdrag.transcript/1";

  Session session;
  std::map<std::string, std::string> prompt_versions;
  std::map<std::string, std::string> models;  // purpose -> model name
  std::string embedder;
  bool complete = false;  // ended with a diagnosis
  std::string error;      // set when the run aborted
  std::size_t name_leaks = 0;
  std::int64_t wall_clock_ms = 0;

  bool operator==(const Transcript&) const = default;
};

Transcript make_transcript(const Session& session, const DialogueEngine& engine, std::string error = {});

/// Drives a full consultation: the patient speaks, the engine answers, until
/// a diagnosis (forced at config.max_rounds at the latest). Stage failures
/// end the run and return a transcript with complete=false and `error` set.
Transcript run_dialogue(const PatientCase& patient_case, DialogueEngine& engine, Patient& patient,
                        const EngineConfig& config, std::string session_id = {});

nlohmann::json to_json(const EngineConfig& c);
EngineConfig engine_config_from_json(const nlohmann::json& j, EngineConfig base = {});
nlohmann::json to_json(const RetrievalHit& h);
nlohmann::json to_json(const KnowledgePacket& p);
nlohmann::json to_json(const DoctorAction& a);
nlohmann::json to_json(const RoundArtifact& r);
nlohmann::json to_json(const Session& s);
Session session_from_json(const nlohmann::json& j);
nlohmann::json to_json(const Transcript& t);
Transcript transcript_from_json(const nlohmann::json& j);

/// Drops session id, timestamps and wall-clock fields so runs can be
/// compared byte for byte.
nlohmann::json normalize_transcript(nlohmann::json transcript);

}  // namespace mrdrag
