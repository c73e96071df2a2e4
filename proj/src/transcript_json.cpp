#include "mrdrag/dialogue_engine.hpp"

#include "mrdrag/error.hpp"

namespace mrdrag {

using nlohmann::json;

namespace {

template <typename T, typename Parse>
T parse_enum(const json& j, const char* what, Parse parse) {
  const auto s = j.get<std::string>();
  if (auto v = parse(s)) return *v;
  throw Error(ErrorCode::MalformedRecord, std::string("unknown ") + what + " '" + s + "'");
}

json to_json(const GateDecision& g) {
  return {{"retrieve", g.retrieve},
          {"consulted_llm", g.consulted_llm},
          {"fail_open", g.fail_open},
          {"raw_output", g.raw_output}};
}

GateDecision gate_from_json(const json& j) {
  return {j.at("retrieve").get<bool>(), j.value("consulted_llm", false), j.value("fail_open", false),
          j.value("raw_output", "")};
}

json to_json(const AnalyzerOutput& a) {
  return {{"thinking_text", a.thinking_text}, {"round_index", a.round_index}, {"candidate_ids", a.candidate_ids}};
}

AnalyzerOutput analyzer_from_json(const json& j) {
  return {j.at("thinking_text").get<std::string>(), j.at("round_index").get<std::size_t>(),
          j.value("candidate_ids", std::vector<std::string>{})};
}

RetrievalHit hit_from_json(const json& j) {
  return {j.at("disease_id").get<std::string>(), j.at("score").get<double>(),
          parse_enum<IndexSource>(j.at("source"), "index source", parse_index_source),
          j.at("rank").get<std::size_t>()};
}

KnowledgePacket packet_from_json(const json& j) {
  return {j.at("disease_id").get<std::string>(), j.at("disease_name").get<std::string>(),
          j.at("rendered_text").get<std::string>(), j.at("score").get<double>(),
          parse_enum<IndexSource>(j.at("source"), "index source", parse_index_source)};
}

DoctorAction action_from_json(const json& j) {
  DoctorAction a;
  a.kind = parse_enum<ActionKind>(j.at("kind"), "action kind", parse_action_kind);
  a.text = j.at("text").get<std::string>();
  a.diagnosis_names = j.value("diagnosis_names", std::vector<std::string>{});
  a.raw_llm_text = j.value("raw_llm_text", "");
  a.parse_warning = j.value("parse_warning", false);
  a.forced = j.value("forced", false);
  return a;
}

RoundArtifact round_from_json(const json& j) {
  RoundArtifact r;
  r.round_index = j.at("round_index").get<std::size_t>();
  if (j.contains("gate") && !j["gate"].is_null()) r.gate = gate_from_json(j["gate"]);
  r.searched = j.value("searched", false);
  for (const auto& h : j.value("hits", json::array())) r.hits.push_back(hit_from_json(h));
  for (const auto& p : j.value("packets", json::array())) r.packets.push_back(packet_from_json(p));
  if (j.contains("analysis") && !j["analysis"].is_null()) r.analysis = analyzer_from_json(j["analysis"]);
  r.force_diagnose = j.value("force_diagnose", false);
  r.action = action_from_json(j.at("action"));
  return r;
}

}  // namespace

json to_json(const EngineConfig& c) {
  return {{"max_rounds", c.max_rounds},
          {"top_k", c.retriever.top_k},
          {"index_mode", to_string(c.retriever.index_mode)},
          {"packet_char_budget", c.retriever.packet_char_budget},
          {"gate_enabled", c.retriever.gate_enabled},
          {"analyzer_enabled", c.analyzer_enabled}};
}

EngineConfig engine_config_from_json(const json& j, EngineConfig base) {
  if (!j.is_object()) throw Error(ErrorCode::ConfigError, "engine config must be a JSON object");
  try {
    base.max_rounds = j.value("max_rounds", base.max_rounds);
    base.retriever.top_k = j.value("top_k", base.retriever.top_k);
    if (j.contains("index_mode")) {
      const auto s = j.at("index_mode").get<std::string>();
      auto mode = parse_index_mode(s);
      if (!mode) throw Error(ErrorCode::ConfigError, "unknown index_mode '" + s + "'");
      base.retriever.index_mode = *mode;
    }
    base.retriever.packet_char_budget = j.value("packet_char_budget", base.retriever.packet_char_budget);
    base.retriever.gate_enabled = j.value("gate_enabled", base.retriever.gate_enabled);
    base.analyzer_enabled = j.value("analyzer_enabled", base.analyzer_enabled);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ConfigError, std::string("engine config: ") + e.what());
  }
  base.validate();
  return base;
}

json to_json(const RetrievalHit& h) {
  return {{"disease_id", h.disease_id}, {"score", h.score}, {"source", to_string(h.source)}, {"rank", h.rank}};
}

json to_json(const KnowledgePacket& p) {
  return {{"disease_id", p.disease_id},
          {"disease_name", p.disease_name},
          {"rendered_text", p.rendered_text},
          {"score", p.score},
          {"source", to_string(p.source)}};
}

json to_json(const DoctorAction& a) {
  return {{"kind", to_string(a.kind)},
          {"text", a.text},
          {"diagnosis_names", a.diagnosis_names},
          {"raw_llm_text", a.raw_llm_text},
          {"parse_warning", a.parse_warning},
          {"forced", a.forced}};
}

json to_json(const RoundArtifact& r) {
  json j = {{"round_index", r.round_index},
            {"gate", r.gate ? to_json(*r.gate) : json(nullptr)},
            {"searched", r.searched},
            {"hits", json::array()},
            {"packets", json::array()},
            {"analysis", r.analysis ? to_json(*r.analysis) : json(nullptr)},
            {"force_diagnose", r.force_diagnose},
            {"action", to_json(r.action)}};
  for (const auto& h : r.hits) j["hits"].push_back(to_json(h));
  for (const auto& p : r.packets) j["packets"].push_back(to_json(p));
  return j;
}

json to_json(const Session& s) {
  json j = {{"session_id", s.session_id},
            {"case", nullptr},
            {"config", to_json(s.config)},
            {"status", to_string(s.status)},
            {"turns", json::array()},
            {"rounds", json::array()},
            {"errors", json::array()},
            {"created_at", s.created_at},
            {"updated_at", s.updated_at},
            {"elapsed_ms", s.elapsed_ms}};
  if (s.case_ref) {
    j["case"] = {{"case_id", s.case_ref->case_id},
                 {"gold_disease_id", s.case_ref->gold_disease_id},
                 {"gold_disease_name", s.case_ref->gold_disease_name}};
  }
  for (const auto& t : s.turns) {
    j["turns"].push_back({{"role", to_string(t.role)}, {"text", t.text}, {"round_index", t.round_index}});
  }
  for (const auto& r : s.rounds) j["rounds"].push_back(to_json(r));
  for (const auto& e : s.errors) {
    j["errors"].push_back(
        {{"round_index", e.round_index}, {"stage", e.stage}, {"code", e.code}, {"message", e.message}});
  }
  return j;
}

Session session_from_json(const json& j) {
  Session s;
  try {
    s.session_id = j.at("session_id").get<std::string>();
    if (j.contains("case") && !j["case"].is_null()) {
      const auto& c = j["case"];
      s.case_ref = CaseRef{c.at("case_id").get<std::string>(), c.value("gold_disease_id", ""),
                           c.value("gold_disease_name", "")};
    }
    s.config = engine_config_from_json(j.at("config"));
    const auto status = j.at("status").get<std::string>();
    if (status == "Concluded") {
      s.status = SessionStatus::Concluded;
    } else if (status != "AwaitingPatient") {
      throw Error(ErrorCode::MalformedRecord, "unknown session status '" + status + "'");
    }
    for (const auto& t : j.at("turns")) {
      s.turns.push_back({parse_enum<Speaker>(t.at("role"), "speaker", parse_speaker), t.at("text").get<std::string>(),
                         t.at("round_index").get<std::size_t>()});
    }
    for (const auto& r : j.at("rounds")) s.rounds.push_back(round_from_json(r));
    for (const auto& e : j.value("errors", json::array())) {
      s.errors.push_back({e.at("round_index").get<std::size_t>(), e.at("stage").get<std::string>(),
                          e.at("code").get<std::string>(), e.at("message").get<std::string>()});
    }
    s.created_at = j.value("created_at", "");
    s.updated_at = j.value("updated_at", "");
    s.elapsed_ms = j.value("elapsed_ms", std::int64_t{0});
  } catch (const json::exception& e) {
    throw Error(ErrorCode::MalformedRecord, std::string("session: ") + e.what());
  }
  return s;
}

json to_json(const Transcript& t) {
  return {{"version", Transcript::kVersion},
          {"session", to_json(t.session)},
          {"prompt_versions", t.prompt_versions},
          {"models", t.models},
          {"embedder", t.embedder},
          {"complete", t.complete},
          {"error", t.error},
          {"name_leaks", t.name_leaks},
          {"wall_clock_ms", t.wall_clock_ms}};
}

Transcript transcript_from_json(const json& j) {
  Transcript t;
  try {
    const auto version = j.at("version").get<std::string>();
    if (version != Transcript::kVersion) {
      throw Error(ErrorCode::MalformedRecord, "unsupported transcript version '" + version + "'");
    }
    t.session = session_from_json(j.at("session"));
    t.prompt_versions = j.value("prompt_versions", std::map<std::string, std::string>{});
    t.models = j.value("models", std::map<std::string, std::string>{});
    t.embedder = j.value("embedder", "");
    t.complete = j.value("complete", false);
    t.error = j.value("error", "");
    t.name_leaks = j.value("name_leaks", std::size_t{0});
    t.wall_clock_ms = j.value("wall_clock_ms", std::int64_t{0});
  } catch (const json::exception& e) {
    throw Error(ErrorCode::MalformedRecord, std::string("transcript: ") + e.what());
  }
  return t;
}

json normalize_transcript(json transcript) {
  transcript.erase("wall_clock_ms");
  if (transcript.contains("session")) {
    auto& s = transcript["session"];
    for (const char* key : {"session_id", "created_at", "updated_at", "elapsed_ms"}) s.erase(key);
  }
  return transcript;
}

}  // namespace mrdrag
