#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "mrdrag/dialogue.hpp"
#include "mrdrag/llm_gateway.hpp"
#include "mrdrag/prompts.hpp"
#include "mrdrag/retriever.hpp"

namespace mrdrag {

/// The Analyzer's differential-diagnosis notes for one round. The text is
/// passed to the Doctor as-is; nothing in it is parsed.
struct AnalyzerOutput {
  std::string thinking_text;
  std::size_t round_index = 0;
  std::vector<std::string> candidate_ids;  // packet ids, in retrieval order

  bool operator==(const AnalyzerOutput&) const = default;
};

/// "Candidate 1 (score 0.812, MR):\n<packet text>" blocks separated by blank lines.
std::string render_candidates(std::span<const KnowledgePacket> packets);

/// Throws NoCandidates for an empty packet list; gateway errors propagate.
AnalyzerOutput analyze(std::span<const DialogueTurn> history, std::span<const KnowledgePacket> packets,
                       std::size_t round_index, LlmGateway& gateway, const PromptLibrary& prompts,
                       std::string_view session_id = {});

}  // namespace mrdrag
