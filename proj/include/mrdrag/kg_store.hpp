#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

namespace mrdrag {

enum class MedicineSystem { ModernMedicine, TCM };

std::string_view to_string(MedicineSystem s);
std::optional<MedicineSystem> parse_medicine_system(std::string_view s);

struct KnowledgeTriple {
  std::string head;
  std::string relation;  // open vocabulary: Symptom, Examination, Pathogenesis, ...
  std::string tail;

  bool operator==(const KnowledgeTriple&) const = default;
};

struct MedicalRecord {
  std::string record_id;
  std::string disease_id;
  std::string chief_complaint;
  std::string narrative;  // patient-style prose, embedded into the MR index
  std::optional<std::string> age;
  std::optional<std::string> sex;

  bool operator==(const MedicalRecord&) const = default;
};

struct DiseaseEntry {
  std::string disease_id;
  std::string name;
  MedicineSystem system = MedicineSystem::ModernMedicine;
  std::string category_code;
  std::vector<KnowledgeTriple> attributes;
  std::string diagnosis_text;  // clinical prose, embedded into the DI index
  std::vector<MedicalRecord> records;

  bool operator==(const DiseaseEntry&) const = default;
};

struct CorpusStats {
  std::size_t disease_count = 0;
  std::size_t node_count = 0;
  std::size_t triple_count = 0;
  std::size_t record_count = 0;

  bool operator==(const CorpusStats&) const = default;
};

/// Immutable, validated set of diseases. Construction checks every
/// invariant and throws CorpusError instead of repairing anything.
class Corpus {
 public:
  Corpus() = default;
  explicit Corpus(std::vector<DiseaseEntry> diseases);

  const std::vector<DiseaseEntry>& diseases() const noexcept { return diseases_; }
  std::size_t size() const noexcept { return diseases_.size(); }
  bool empty() const noexcept { return diseases_.empty(); }
  std::size_t record_count() const noexcept;

  /// nullptr when absent.
  const DiseaseEntry* find(std::string_view disease_id) const;
  /// Throws Error(NotFound).
  const DiseaseEntry& at(std::string_view disease_id) const;

  /// SHA-256 over the canonical three-file serialization.
  std::string fingerprint() const;

  bool operator==(const Corpus& other) const { return diseases_ == other.diseases_; }

 private:
  std::vector<DiseaseEntry> diseases_;
  std::unordered_map<std::string, std::size_t> by_id_;
};

/// File names inside a corpus directory.
inline constexpr std::string_view kDiseasesFile = "diseases.jsonl";
inline constexpr std::string_view kTriplesFile = "triples.jsonl";
inline constexpr std::string_view kRecordsFile = "records.jsonl";

/// Reads a corpus directory. diseases.jsonl and records.jsonl are required;
/// triples.jsonl is optional because triples may be embedded inline in the
/// disease lines under "attributes".
Corpus load_corpus(const std::filesystem::path& dir);

/// Writes the canonical three-file form (triples always in triples.jsonl).
void write_corpus(const Corpus& corpus, const std::filesystem::path& dir);

struct CorpusFiles {
  std::string diseases;
  std::string triples;
  std::string records;
};
CorpusFiles serialize_corpus(const Corpus& corpus);

/// Counts as follows. A node is a distinct entity string after whitespace
/// trimming, compared case-sensitively. Disease names are nodes; a triple
/// head written as the disease id resolves to the disease's name node.
CorpusStats corpus_stats(const Corpus& corpus);

nlohmann::json to_json(const DiseaseEntry& d, bool with_records);
nlohmann::json to_json(const MedicalRecord& r);
nlohmann::json to_json(const CorpusStats& s);

}  // namespace mrdrag
