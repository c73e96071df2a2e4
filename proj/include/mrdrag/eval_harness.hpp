#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mrdrag/dialogue_engine.hpp"

namespace mrdrag {

inline constexpr std::size_t kDefaultMaxRank = 10;
inline constexpr std::size_t kHitsCutoffs[] = {1, 3, 10};

struct RetrievalMetrics {
  double mrr = 0.0;
  std::map<std::size_t, double> hits_at;  // keys 1, 3, 10
  std::size_t query_count = 0;
};

struct RetrievalQuery {
  std::string query;
  std::string gold_disease_id;
};

/// Ranks are 1-based; nullopt means the gold item was not returned. A rank
/// beyond max_rank contributes a reciprocal of 0.
RetrievalMetrics metrics_from_ranks(std::span<const std::optional<std::size_t>> ranks,
                                    std::size_t max_rank = kDefaultMaxRank);

/// Searches each query with k = max_rank and locates the gold disease in the
/// deduplicated hit list. Throws UnresolvableGold when a gold id has no entry
/// in the index.
RetrievalMetrics retrieval_metrics(std::span<const RetrievalQuery> queries, const DualIndex& index, IndexMode mode,
                                   const Embedder& embedder, std::size_t max_rank = kDefaultMaxRank);

/// The opening complaint of each case (its first scripted reply) against its
/// gold disease. Throws InvalidRequest for a case without a script.
std::vector<RetrievalQuery> opening_queries(std::span<const PatientCase> cases);

struct JudgeScore {
  std::string method_label;
  int score = 0;  // 1..5
  std::string case_id;
  std::string judge_model;
  std::size_t presentation_position = 0;  // 1-based

  bool operator==(const JudgeScore&) const = default;
};

struct JudgeOutcome {
  std::string case_id;
  std::uint64_t seed = 0;
  std::vector<std::string> presentation_order;  // method labels
  bool scored = false;
  std::vector<JudgeScore> scores;  // in presentation order
  std::string raw_output;
  std::string error;  // why the case is unscored

  std::optional<int> score_for(std::string_view method_label) const;
};

struct LabeledTranscript {
  std::string method_label;
  Transcript transcript;
};

/// Presents the dialogues in a seeded random order, each only as
/// "Dialogue <i>:" plus its turns, and maps the judge's per-dialogue scores
/// back to method labels. Output the parser cannot read completely leaves
/// the case unscored with the raw text kept.
JudgeOutcome judge_transcripts(const PatientCase& patient_case, std::span<const LabeledTranscript> transcripts,
                               LlmGateway& gateway, const PromptLibrary& prompts, std::uint64_t seed);

/// Scores per "Dialogue <i>: <s>" occurrence, keyed by i. Repeated numbers
/// with different scores, or any score outside 1..5, yield nullopt.
std::optional<std::map<std::size_t, int>> parse_judge_output(std::string_view text);

struct PairwiseBundle {
  std::string case_id;
  std::string bundle_text;  // case info and "Response 1"/"Response 2"
  nlohmann::json key;       // {"case_id", "seed", "Response 1": label, "Response 2": label}
};

PairwiseBundle export_pairwise(const PatientCase& patient_case, const LabeledTranscript& a,
                               const LabeledTranscript& b, std::uint64_t seed);
/// Writes <case_id>.bundle.txt and <case_id>.key.json into `dir`.
void write_pairwise(const PairwiseBundle& bundle, const std::filesystem::path& dir);
/// Method label -> response label.
std::map<std::string, std::string> invert_pairwise_key(const nlohmann::json& key);

enum class AblationAxis { TopK, NoAnalyzer };

std::string_view to_string(AblationAxis a);
std::optional<AblationAxis> parse_ablation_axis(std::string_view s);

struct AblationSetting {
  std::string label;
  EngineConfig config;
};

/// TopK: top_k in {1,3,5,7,9}. NoAnalyzer: analyzer on, then off.
std::vector<AblationSetting> default_ablation_settings(AblationAxis axis, const EngineConfig& base);

struct AblationRow {
  std::string setting;
  double mean_score = 0.0;  // over scored cases
  std::size_t case_count = 0;
  std::size_t scored_count = 0;
  std::size_t failed_dialogues = 0;
  std::map<Purpose, std::size_t> calls;  // dialogue-side LLM calls by purpose
};

struct AblationReport {
  AblationAxis axis = AblationAxis::TopK;
  std::uint64_t seed = 0;
  std::vector<AblationRow> rows;
  std::vector<JudgeOutcome> judgements;  // one per case, sorted by case id
  bool partial = false;
  std::vector<std::string> problems;
};

using PatientFactory = std::function<std::unique_ptr<Patient>(const PatientCase&, const std::string& session_id)>;

/// Every setting runs every case with the same patient factory; the judge then
/// scores all settings of one case together. Dialogue session ids are
/// "ablate-<setting>-<case_id>", which is how per-row call counts are read
/// from the gateway. Failed dialogues and unscored cases mark the report
/// partial.
AblationReport run_ablation(AblationAxis axis, std::span<const PatientCase> cases, DialogueEngine& engine,
                            std::span<const AblationSetting> settings, const PatientFactory& make_patient,
                            std::uint64_t seed, std::size_t workers = 1);

nlohmann::json to_json(const RetrievalMetrics& m);
nlohmann::json to_json(const JudgeOutcome& o);
nlohmann::json to_json(const AblationReport& r);

std::string render_table(const RetrievalMetrics& m, std::string_view title);
std::string render_table(const AblationReport& r);

}  // namespace mrdrag
