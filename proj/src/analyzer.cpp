#include "mrdrag/analyzer.hpp"

#include <cstdio>

namespace mrdrag {

std::string render_candidates(std::span<const KnowledgePacket> packets) {
  std::string out;
  for (std::size_t i = 0; i < packets.size(); ++i) {
    const auto& p = packets[i];
    char header[96];
    std::snprintf(header, sizeof(header), "Candidate %zu (score %.3f, %s):\n", i + 1, p.score,
                  p.source == IndexSource::DI ? "DI" : "MR");
    if (i > 0) out += "\n\n";
    out += header;
    out += p.rendered_text;
  }
  return out;
}

AnalyzerOutput analyze(std::span<const DialogueTurn> history, std::span<const KnowledgePacket> packets,
                       std::size_t round_index, LlmGateway& gateway, const PromptLibrary& prompts,
                       std::string_view session_id) {
  if (packets.empty()) throw Error(ErrorCode::NoCandidates, "analyzer needs at least one candidate");
  auto messages =
      prompts.get("analyzer").render({{"history", render_history(history)}, {"candidates", render_candidates(packets)}});
  AnalyzerOutput out;
  out.thinking_text = gateway.chat(Purpose::Analyzer, std::move(messages), session_id);
  out.round_index = round_index;
  for (const auto& p : packets) out.candidate_ids.push_back(p.disease_id);
  return out;
}

}  // namespace mrdrag
