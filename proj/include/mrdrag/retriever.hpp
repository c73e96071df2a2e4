#pragma once

#include <atomic>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "mrdrag/dialogue.hpp"
#include "mrdrag/dual_index.hpp"
#include "mrdrag/embedding.hpp"
#include "mrdrag/kg_store.hpp"
#include "mrdrag/llm_gateway.hpp"
#include "mrdrag/prompts.hpp"

namespace mrdrag {

/// Knowledge about one retrieved candidate, as shown to the Analyzer.
struct KnowledgePacket {
  std::string disease_id;
  std::string disease_name;
  std::string rendered_text;
  double score = 0.0;
  IndexSource source = IndexSource::DI;

  bool operator==(const KnowledgePacket&) const = default;
};

struct RetrieverConfig {
  std::size_t top_k = 5;
  IndexMode index_mode = IndexMode::MR;
  std::size_t packet_char_budget = 1500;
  bool gate_enabled = true;

  /// Throws ConfigError: top_k >= 1, budget >= 64.
  void validate() const;
  bool operator==(const RetrieverConfig&) const = default;
};

inline constexpr std::string_view kTruncationMarker = "\n[truncated]";

/// Patient utterances in order, joined by '\n'. Doctor turns are excluded.
/// Throws NoPatientTurns.
std::string build_query(std::span<const DialogueTurn> history);

struct GateDecision {
  bool retrieve = true;
  bool consulted_llm = false;
  bool fail_open = false;  // gate output unusable or gate call failed
  std::string raw_output;

  bool operator==(const GateDecision&) const = default;
};

/// Whether the latest patient turn warrants a new search. The first patient
/// turn always does, without an LLM call. Later turns ask the Gate purpose
/// for YES/NO; anything else, or a failed call, counts as YES.
GateDecision should_retrieve(std::span<const DialogueTurn> history, LlmGateway& gateway, const PromptLibrary& prompts,
                             std::string_view session_id = {});

/// Name, then diagnosis text, then one "relation: tail" line per triple, cut
/// to `budget` bytes (marker included) at a UTF-8 boundary.
KnowledgePacket render_packet(const DiseaseEntry& disease, const RetrievalHit& hit, std::size_t budget);

class Retriever {
 public:
  /// Throws FingerprintMismatch when the index was not built from `corpus`.
  Retriever(const Corpus& corpus, const DualIndex& index, const Embedder& embedder);

  struct Outcome {
    std::optional<GateDecision> gate;  // unset when gating is disabled
    bool searched = false;
    std::vector<RetrievalHit> hits;
    std::vector<KnowledgePacket> packets;
  };

  /// One round of retrieval. When the gate says skip and a previous round's
  /// knowledge exists, that knowledge is returned unchanged.
  Outcome retrieve(std::span<const DialogueTurn> history, const RetrieverConfig& config,
                   std::span<const RetrievalHit> cached_hits, std::span<const KnowledgePacket> cached_packets,
                   LlmGateway& gateway, const PromptLibrary& prompts, std::string_view session_id = {}) const;

  /// Embeds `query` and searches; counts toward search_count().
  std::vector<RetrievalHit> search(std::string_view query, std::size_t k, IndexMode mode) const;

  std::vector<KnowledgePacket> render(std::span<const RetrievalHit> hits, std::size_t budget) const;

  std::size_t search_count() const noexcept { return searches_.load(); }

  const Corpus& corpus() const noexcept { return corpus_; }
  const DualIndex& index() const noexcept { return index_; }
  const Embedder& embedder() const noexcept { return embedder_; }

 private:
  const Corpus& corpus_;
  const DualIndex& index_;
  const Embedder& embedder_;
  mutable std::atomic<std::size_t> searches_{0};
};

}  // namespace mrdrag
