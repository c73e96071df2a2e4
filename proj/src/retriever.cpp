#include "mrdrag/retriever.hpp"

#include <algorithm>
#include <cctype>

#include <spdlog/spdlog.h>

#include "mrdrag/util.hpp"

namespace mrdrag {

void RetrieverConfig::validate() const {
  if (top_k < 1) throw Error(ErrorCode::ConfigError, "top_k must be at least 1");
  if (packet_char_budget < 64) throw Error(ErrorCode::ConfigError, "packet_char_budget must be at least 64");
}

std::string build_query(std::span<const DialogueTurn> history) {
  std::string query;
  bool any = false;
  for (const auto& t : history) {
    if (t.role != Speaker::Patient) continue;
    if (any) query += '\n';
    query += t.text;
    any = true;
  }
  if (!any) throw Error(ErrorCode::NoPatientTurns, "history has no patient turns");
  return query;
}

GateDecision should_retrieve(std::span<const DialogueTurn> history, LlmGateway& gateway, const PromptLibrary& prompts,
                             std::string_view session_id) {
  const std::size_t patient_turns =
      static_cast<std::size_t>(std::count_if(history.begin(), history.end(),
                                             [](const DialogueTurn& t) { return t.role == Speaker::Patient; }));
  GateDecision decision;
  if (patient_turns <= 1) return decision;

  const DialogueTurn* latest = last_patient_turn(history);
  std::string earlier;
  for (const auto& t : history) {
    if (t.role != Speaker::Patient || &t == latest) continue;
    earlier += "- " + t.text + "\n";
  }

  decision.consulted_llm = true;
  try {
    auto messages = prompts.get("gate").render(
        {{"earlier_patient_messages", trim(earlier)}, {"latest_patient_message", latest->text}});
    decision.raw_output = gateway.chat(Purpose::Gate, std::move(messages), session_id);
  } catch (const std::exception& e) {
    spdlog::warn("session {}: gate call failed ({}); retrieving anyway", session_id, e.what());
    decision.fail_open = true;
    return decision;
  }

  std::string answer = trim(decision.raw_output);
  while (!answer.empty() && (answer.back() == '.' || answer.back() == '!')) answer.pop_back();
  for (auto& c : answer) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  if (answer == "NO") {
    decision.retrieve = false;
  } else if (answer != "YES") {
    spdlog::warn("session {}: unparseable gate output '{}'; retrieving anyway", session_id, decision.raw_output);
    decision.fail_open = true;
  }
  return decision;
}

namespace {

// Largest prefix length <= n that does not split a UTF-8 sequence.
std::size_t utf8_floor(std::string_view s, std::size_t n) {
  if (n >= s.size()) return s.size();
  while (n > 0 && (static_cast<unsigned char>(s[n]) & 0xC0) == 0x80) --n;
  return n;
}

}  // namespace

KnowledgePacket render_packet(const DiseaseEntry& disease, const RetrievalHit& hit, std::size_t budget) {
  std::string text = "Disease: " + disease.name + "\nDiagnosis: " + disease.diagnosis_text;
  for (const auto& t : disease.attributes) text += "\n" + t.relation + ": " + t.tail;
  if (text.size() > budget) {
    const std::size_t room = budget > kTruncationMarker.size() ? budget - kTruncationMarker.size() : 0;
    text.resize(utf8_floor(text, room));
    text += kTruncationMarker;
  }
  return KnowledgePacket{disease.disease_id, disease.name, std::move(text), hit.score, hit.source};
}

Retriever::Retriever(const Corpus& corpus, const DualIndex& index, const Embedder& embedder)
    : corpus_(corpus), index_(index), embedder_(embedder) {
  index_.verify_against(corpus_);
  if (embedder_.dim() != index_.dim()) {
    throw Error(ErrorCode::DimensionMismatch, "embedder dim " + std::to_string(embedder_.dim()) +
                                                  " does not match index dim " + std::to_string(index_.dim()));
  }
}

std::vector<RetrievalHit> Retriever::search(std::string_view query, std::size_t k, IndexMode mode) const {
  const auto vec = embedder_.embed(query);
  ++searches_;
  return index_.search(vec.view(), k, mode);
}

std::vector<KnowledgePacket> Retriever::render(std::span<const RetrievalHit> hits, std::size_t budget) const {
  std::vector<KnowledgePacket> packets;
  packets.reserve(hits.size());
  for (const auto& h : hits) packets.push_back(render_packet(corpus_.at(h.disease_id), h, budget));
  return packets;
}

Retriever::Outcome Retriever::retrieve(std::span<const DialogueTurn> history, const RetrieverConfig& config,
                                       std::span<const RetrievalHit> cached_hits,
                                       std::span<const KnowledgePacket> cached_packets, LlmGateway& gateway,
                                       const PromptLibrary& prompts, std::string_view session_id) const {
  config.validate();
  const std::string query = build_query(history);
  Outcome out;
  if (config.gate_enabled) {
    out.gate = should_retrieve(history, gateway, prompts, session_id);
    if (!out.gate->retrieve && !cached_packets.empty()) {
      out.hits.assign(cached_hits.begin(), cached_hits.end());
      out.packets.assign(cached_packets.begin(), cached_packets.end());
      return out;
    }
  }
  out.searched = true;
  out.hits = search(query, config.top_k, config.index_mode);
  out.packets = render(out.hits, config.packet_char_budget);
  return out;
}

}  // namespace mrdrag
