#include "mrdrag/dialogue_engine.hpp"

#include <spdlog/spdlog.h>

#include "mrdrag/util.hpp"

namespace mrdrag {

std::string_view to_string(SessionStatus s) {
  return s == SessionStatus::Concluded ? "Concluded" : "AwaitingPatient";
}

void EngineConfig::validate() const {
  if (max_rounds < 1) throw Error(ErrorCode::ConfigError, "max_rounds must be at least 1");
  retriever.validate();
}

DialogueEngine::DialogueEngine(EngineDeps deps)
    : deps_(std::move(deps)), retriever_(deps_.corpus, deps_.index, deps_.embedder) {}

std::string DialogueEngine::now() const { return format_utc(deps_.clock()); }

Session DialogueEngine::create_session(EngineConfig config, std::string session_id,
                                       std::optional<CaseRef> case_ref) const {
  config.validate();
  Session s;
  s.session_id = session_id.empty() ? random_token() : std::move(session_id);
  s.case_ref = std::move(case_ref);
  s.config = config;
  s.created_at = now();
  s.updated_at = s.created_at;
  return s;
}

namespace {

class BusyGuard {
 public:
  BusyGuard(std::mutex& mu, std::set<std::string>& busy, const std::string& id) : mu_(mu), busy_(busy), id_(id) {
    std::lock_guard lock(mu_);
    if (!busy_.insert(id_).second) {
      throw Error(ErrorCode::SessionBusy, "session " + id_ + " already has a round in flight");
    }
  }
  ~BusyGuard() {
    std::lock_guard lock(mu_);
    busy_.erase(id_);
  }
  BusyGuard(const BusyGuard&) = delete;
  BusyGuard& operator=(const BusyGuard&) = delete;

 private:
  std::mutex& mu_;
  std::set<std::string>& busy_;
  std::string id_;
};

}  // namespace

DoctorAction DialogueEngine::run_round(Session& session, std::string_view patient_utterance) {
  BusyGuard guard(busy_mu_, busy_, session.session_id);
  if (session.status == SessionStatus::Concluded) {
    throw Error(ErrorCode::SessionConcluded, "session " + session.session_id + " has already concluded");
  }
  if (trim(patient_utterance).empty()) throw Error(ErrorCode::InvalidRequest, "patient utterance is empty");

  const auto started = deps_.clock();
  const std::size_t round = session.next_round();
  const auto& cfg = session.config;
  const std::string& sid = session.session_id;

  std::vector<DialogueTurn> turns = session.turns;
  turns.push_back({Speaker::Patient, std::string(patient_utterance), round});

  RoundArtifact artifact;
  artifact.round_index = round;
  artifact.force_diagnose = round >= cfg.max_rounds;
  std::string stage = "retrieve";
  try {
    std::span<const RetrievalHit> cached_hits;
    std::span<const KnowledgePacket> cached_packets;
    if (!session.rounds.empty()) {
      cached_hits = session.rounds.back().hits;
      cached_packets = session.rounds.back().packets;
    }
    auto outcome =
        retriever_.retrieve(turns, cfg.retriever, cached_hits, cached_packets, deps_.gateway, deps_.prompts, sid);
    artifact.gate = std::move(outcome.gate);
    artifact.searched = outcome.searched;
    artifact.hits = std::move(outcome.hits);
    artifact.packets = std::move(outcome.packets);

    std::string guidance;
    if (cfg.analyzer_enabled) {
      stage = "analyze";
      artifact.analysis = analyze(turns, artifact.packets, round, deps_.gateway, deps_.prompts, sid);
      guidance = "Analyzer notes for this round:\n" + artifact.analysis->thinking_text;
    } else {
      guidance = "Retrieved candidate knowledge:\n" + render_candidates(artifact.packets);
    }

    stage = "doctor";
    std::vector<std::string> names;
    for (const auto& p : artifact.packets) names.push_back(p.disease_name);
    artifact.action =
        respond(turns, guidance, names, artifact.force_diagnose, deps_.gateway, deps_.prompts, sid);
  } catch (const Error& e) {
    session.errors.push_back({round, stage, error_wire_code(e.code()), e.what()});
    session.updated_at = now();
    throw;
  } catch (const std::exception& e) {
    session.errors.push_back({round, stage, "INTERNAL", e.what()});
    session.updated_at = now();
    throw;
  }

  turns.push_back({Speaker::Doctor, artifact.action.text, round});
  session.turns = std::move(turns);
  if (artifact.action.kind == ActionKind::Diagnose) session.status = SessionStatus::Concluded;
  DoctorAction action = artifact.action;
  session.rounds.push_back(std::move(artifact));
  const auto finished = deps_.clock();
  session.elapsed_ms += std::chrono::duration_cast<std::chrono::milliseconds>(finished - started).count();
  session.updated_at = format_utc(finished);
  spdlog::debug("session {} round {}: {}", sid, round, to_string(action.kind));
  return action;
}

Transcript make_transcript(const Session& session, const DialogueEngine& engine, std::string error) {
  Transcript t;
  t.session = session;
  t.prompt_versions = engine.prompts().versions();
  for (const auto& [purpose, settings] : engine.gateway().config().purposes) {
    t.models[std::string(to_string(purpose))] = settings.model_name;
  }
  t.embedder = engine.retriever().embedder().describe();
  t.complete = session.status == SessionStatus::Concluded && error.empty();
  t.error = std::move(error);
  if (session.case_ref) {
    PatientCase probe;
    probe.gold_disease_name = session.case_ref->gold_disease_name;
    t.name_leaks = count_name_leaks(probe, session.turns);
  }
  t.wall_clock_ms = session.elapsed_ms;
  return t;
}

Transcript run_dialogue(const PatientCase& patient_case, DialogueEngine& engine, Patient& patient,
                        const EngineConfig& config, std::string session_id) {
  if (session_id.empty()) session_id = "sim-" + patient_case.case_id;
  Session session = engine.create_session(
      config, std::move(session_id),
      CaseRef{patient_case.case_id, patient_case.gold_disease_id, patient_case.gold_disease_name});

  std::string error;
  while (session.status == SessionStatus::AwaitingPatient && session.rounds.size() < config.max_rounds) {
    std::string utterance;
    try {
      utterance = patient.reply(patient_case, session.turns);
    } catch (const Error& e) {
      session.errors.push_back({session.next_round(), "patient", error_wire_code(e.code()), e.what()});
      error = e.what();
      break;
    }
    try {
      engine.run_round(session, utterance);
    } catch (const std::exception& e) {
      error = e.what();
      break;
    }
  }
  if (!error.empty()) spdlog::warn("case {}: dialogue aborted: {}", patient_case.case_id, error);
  return make_transcript(session, engine, std::move(error));
}

}  // namespace mrdrag
