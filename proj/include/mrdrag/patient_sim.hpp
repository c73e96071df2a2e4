#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <mutex>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mrdrag/dialogue.hpp"
#include "mrdrag/kg_store.hpp"
#include "mrdrag/llm_gateway.hpp"
#include "mrdrag/prompts.hpp"

namespace mrdrag {

struct PatientCase {
  std::string case_id;
  std::string gold_disease_id;
  std::string gold_disease_name;
  std::string case_info;  // everything the simulated patient knows
  std::string source_tag = "imported";
  /// Replies for a scripted patient, opening complaint first. Optional.
  std::vector<std::string> scripted_replies;

  bool operator==(const PatientCase&) const = default;
};

nlohmann::json to_json(const PatientCase& c);
PatientCase patient_case_from_json(const nlohmann::json& j);

/// One case per line. Throws Error(MalformedRecord / MissingFile).
std::vector<PatientCase> load_cases(const std::filesystem::path& path);
void write_cases(std::span<const PatientCase> cases, const std::filesystem::path& path);

/// Throws UnresolvableGold when a gold disease id is not in the corpus.
void check_gold(std::span<const PatientCase> cases, const Corpus& corpus);

class Patient {
 public:
  virtual ~Patient() = default;
  /// With an empty history this is the opening complaint.
  virtual std::string reply(const PatientCase& patient_case, std::span<const DialogueTurn> history) = 0;
};

/// Replays a fixed list of utterances; never calls a backend. Running past
/// the end raises ScriptExhausted.
class ScriptedPatient final : public Patient {
 public:
  explicit ScriptedPatient(std::vector<std::string> replies);
  std::string reply(const PatientCase& patient_case, std::span<const DialogueTurn> history) override;

 private:
  std::mutex mu_;
  std::vector<std::string> replies_;
  std::size_t next_ = 0;
};

/// LLM role-play under the Patient purpose. The prompt carries only the
/// case information and the dialogue, never retrieved knowledge.
class LlmPatient final : public Patient {
 public:
  LlmPatient(LlmGateway& gateway, const PromptLibrary& prompts, std::string session_id = {});
  std::string reply(const PatientCase& patient_case, std::span<const DialogueTurn> history) override;

 private:
  LlmGateway& gateway_;
  const PromptLibrary& prompts_;
  std::string session_id_;
};

/// Patient utterances that contain the gold disease name (case-insensitive).
std::size_t count_name_leaks(const PatientCase& patient_case, std::span<const DialogueTurn> turns);

/// Cases matching generate_fixture(seed, n_diseases, ...): each opens with a
/// colloquial complaint naming two of the disease's symptoms, and its script
/// reveals the remaining symptoms one per reply.
std::vector<PatientCase> generate_fixture_cases(std::uint64_t seed, std::size_t n_diseases,
                                                std::size_t cases_per_disease);

}  // namespace mrdrag
