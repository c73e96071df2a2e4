#include "mrdrag/kg_store.hpp"

#include <fstream>
#include <set>
#include <tuple>
#include <unordered_set>

#include "mrdrag/error.hpp"
#include "mrdrag/util.hpp"

namespace mrdrag {

using nlohmann::json;

std::string_view to_string(MedicineSystem s) {
  return s == MedicineSystem::TCM ? "TCM" : "ModernMedicine";
}

std::optional<MedicineSystem> parse_medicine_system(std::string_view s) {
  if (s == "ModernMedicine") return MedicineSystem::ModernMedicine;
  if (s == "TCM") return MedicineSystem::TCM;
  return std::nullopt;
}

namespace {

bool blank(std::string_view s) { return trim(s).empty(); }

using TripleKey = std::tuple<std::string, std::string, std::string>;

TripleKey key_of(const KnowledgeTriple& t) { return {t.head, t.relation, t.tail}; }

// Reason string when the triple breaks a field-level rule, empty otherwise.
std::string triple_problem(const KnowledgeTriple& t, const DiseaseEntry& d) {
  if (blank(t.head) || blank(t.relation) || blank(t.tail)) return "triple has an empty field";
  const std::string head = trim(t.head);
  if (head != trim(d.name) && head != trim(d.disease_id)) {
    return "triple head '" + t.head + "' is neither the disease name nor its id";
  }
  return {};
}

std::string disease_problem(const DiseaseEntry& d) {
  if (blank(d.disease_id)) return "empty disease_id";
  if (blank(d.name)) return "empty name";
  if (blank(d.diagnosis_text)) return "empty diagnosis_text";
  return {};
}

std::string record_problem(const MedicalRecord& r) {
  if (blank(r.record_id)) return "empty record_id";
  if (blank(r.narrative)) return "empty narrative";
  return {};
}

}  // namespace

Corpus::Corpus(std::vector<DiseaseEntry> diseases) : diseases_(std::move(diseases)) {
  const std::string where = "<memory>";
  std::unordered_set<std::string> record_ids;
  for (std::size_t i = 0; i < diseases_.size(); ++i) {
    const auto& d = diseases_[i];
    if (auto p = disease_problem(d); !p.empty()) {
      throw CorpusError(ErrorCode::MalformedRecord, where, 0, d.disease_id + ": " + p);
    }
    if (!by_id_.emplace(d.disease_id, i).second) {
      throw CorpusError(ErrorCode::DuplicateDiseaseId, where, 0, "duplicate disease_id " + d.disease_id);
    }
    std::set<TripleKey> seen;
    for (const auto& t : d.attributes) {
      if (auto p = triple_problem(t, d); !p.empty()) {
        throw CorpusError(ErrorCode::MalformedRecord, where, 0, d.disease_id + ": " + p);
      }
      if (!seen.insert(key_of(t)).second) {
        throw CorpusError(ErrorCode::MalformedRecord, where, 0, d.disease_id + ": duplicate triple");
      }
    }
    for (const auto& r : d.records) {
      if (r.disease_id != d.disease_id) {
        throw CorpusError(ErrorCode::DanglingRecordReference, where, 0,
                          "record " + r.record_id + " attached to " + d.disease_id +
                              " but references " + r.disease_id);
      }
      if (auto p = record_problem(r); !p.empty()) {
        throw CorpusError(ErrorCode::MalformedRecord, where, 0, r.record_id + ": " + p);
      }
      if (!record_ids.insert(r.record_id).second) {
        throw CorpusError(ErrorCode::MalformedRecord, where, 0, "duplicate record_id " + r.record_id);
      }
    }
  }
}

std::size_t Corpus::record_count() const noexcept {
  std::size_t n = 0;
  for (const auto& d : diseases_) n += d.records.size();
  return n;
}

const DiseaseEntry* Corpus::find(std::string_view disease_id) const {
  auto it = by_id_.find(std::string(disease_id));
  return it == by_id_.end() ? nullptr : &diseases_[it->second];
}

const DiseaseEntry& Corpus::at(std::string_view disease_id) const {
  if (const auto* d = find(disease_id)) return *d;
  throw Error(ErrorCode::NotFound, "unknown disease_id " + std::string(disease_id));
}

std::string Corpus::fingerprint() const {
  const auto files = serialize_corpus(*this);
  std::string buf;
  buf.reserve(files.diseases.size() + files.triples.size() + files.records.size() + 64);
  buf += kDiseasesFile;
  buf += '\n';
  buf += files.diseases;
  buf += kTriplesFile;
  buf += '\n';
  buf += files.triples;
  buf += kRecordsFile;
  buf += '\n';
  buf += files.records;
  return sha256_hex(buf);
}

// ---------------------------------------------------------------------------
// serialization

json to_json(const MedicalRecord& r) {
  json j = {{"record_id", r.record_id},
            {"disease_id", r.disease_id},
            {"chief_complaint", r.chief_complaint},
            {"narrative", r.narrative}};
  if (r.age) j["age"] = *r.age;
  if (r.sex) j["sex"] = *r.sex;
  return j;
}

json to_json(const DiseaseEntry& d, bool with_records) {
  json j = {{"disease_id", d.disease_id},
            {"name", d.name},
            {"system", std::string(to_string(d.system))},
            {"category_code", d.category_code},
            {"diagnosis_text", d.diagnosis_text}};
  if (with_records) {
    json attrs = json::array();
    for (const auto& t : d.attributes) {
      attrs.push_back({{"head", t.head}, {"relation", t.relation}, {"tail", t.tail}});
    }
    j["attributes"] = std::move(attrs);
    json recs = json::array();
    for (const auto& r : d.records) recs.push_back(to_json(r));
    j["records"] = std::move(recs);
  }
  return j;
}

json to_json(const CorpusStats& s) {
  return {{"disease_count", s.disease_count},
          {"node_count", s.node_count},
          {"triple_count", s.triple_count},
          {"record_count", s.record_count}};
}

CorpusFiles serialize_corpus(const Corpus& corpus) {
  CorpusFiles files;
  for (const auto& d : corpus.diseases()) {
    files.diseases += to_json(d, false).dump();
    files.diseases += '\n';
    for (const auto& t : d.attributes) {
      json j = {{"disease_id", d.disease_id}, {"head", t.head}, {"relation", t.relation}, {"tail", t.tail}};
      files.triples += j.dump();
      files.triples += '\n';
    }
    for (const auto& r : d.records) {
      files.records += to_json(r).dump();
      files.records += '\n';
    }
  }
  return files;
}

void write_corpus(const Corpus& corpus, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  const auto files = serialize_corpus(corpus);
  write_text_file((dir / kDiseasesFile).string(), files.diseases);
  write_text_file((dir / kTriplesFile).string(), files.triples);
  write_text_file((dir / kRecordsFile).string(), files.records);
}

// ---------------------------------------------------------------------------
// loading

namespace {

class LineReader {
 public:
  LineReader(const std::filesystem::path& path, bool required) : name_(path.filename().string()) {
    if (!std::filesystem::exists(path)) {
      if (required) throw CorpusError(ErrorCode::MissingFile, name_, 0, "file not found: " + path.string());
      return;
    }
    in_.open(path, std::ios::binary);
    if (!in_) throw CorpusError(ErrorCode::MissingFile, name_, 0, "cannot open " + path.string());
  }

  bool present() const { return in_.is_open(); }

  // Next non-blank line parsed as a JSON object; false at EOF.
  bool next(json& out) {
    std::string line;
    while (present() && std::getline(in_, line)) {
      ++line_no_;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (blank(line)) continue;
      try {
        out = json::parse(line);
      } catch (const json::parse_error& e) {
        fail(ErrorCode::MalformedRecord, std::string("invalid JSON: ") + e.what());
      }
      if (!out.is_object()) fail(ErrorCode::MalformedRecord, "line is not a JSON object");
      return true;
    }
    return false;
  }

  [[noreturn]] void fail(ErrorCode code, const std::string& reason) const {
    throw CorpusError(code, name_, line_no_, reason);
  }

  std::string required_string(const json& obj, const char* key, bool non_empty) const {
    auto it = obj.find(key);
    if (it == obj.end()) fail(ErrorCode::MalformedRecord, std::string("missing field '") + key + "'");
    if (!it->is_string()) fail(ErrorCode::MalformedRecord, std::string("field '") + key + "' is not a string");
    auto value = it->get<std::string>();
    if (non_empty && blank(value)) fail(ErrorCode::MalformedRecord, std::string("field '") + key + "' is empty");
    return value;
  }

  std::optional<std::string> optional_string(const json& obj, const char* key) const {
    auto it = obj.find(key);
    if (it == obj.end() || it->is_null()) return std::nullopt;
    if (!it->is_string()) fail(ErrorCode::MalformedRecord, std::string("field '") + key + "' is not a string");
    return it->get<std::string>();
  }

 private:
  std::string name_;
  std::ifstream in_;
  std::size_t line_no_ = 0;
};

void add_triple(LineReader& reader, DiseaseEntry& d, std::set<TripleKey>& seen, KnowledgeTriple t) {
  if (auto p = triple_problem(t, d); !p.empty()) reader.fail(ErrorCode::MalformedRecord, p);
  if (!seen.insert(key_of(t)).second) {
    reader.fail(ErrorCode::MalformedRecord,
                "duplicate triple (" + t.head + ", " + t.relation + ", " + t.tail + ")");
  }
  d.attributes.push_back(std::move(t));
}

}  // namespace

Corpus load_corpus(const std::filesystem::path& dir) {
  LineReader diseases_in(dir / kDiseasesFile, true);
  LineReader records_in(dir / kRecordsFile, true);
  LineReader triples_in(dir / kTriplesFile, false);

  std::vector<DiseaseEntry> diseases;
  std::unordered_map<std::string, std::size_t> index;
  std::vector<std::set<TripleKey>> triple_sets;

  json obj;
  while (diseases_in.next(obj)) {
    DiseaseEntry d;
    d.disease_id = diseases_in.required_string(obj, "disease_id", true);
    d.name = diseases_in.required_string(obj, "name", true);
    const auto system = diseases_in.required_string(obj, "system", true);
    auto parsed = parse_medicine_system(system);
    if (!parsed) diseases_in.fail(ErrorCode::MalformedRecord, "unknown system '" + system + "'");
    d.system = *parsed;
    d.category_code = diseases_in.required_string(obj, "category_code", false);
    d.diagnosis_text = diseases_in.required_string(obj, "diagnosis_text", true);
    if (index.contains(d.disease_id)) {
      diseases_in.fail(ErrorCode::DuplicateDiseaseId, "duplicate disease_id " + d.disease_id);
    }
    std::set<TripleKey> seen;
    if (auto it = obj.find("attributes"); it != obj.end()) {
      if (!it->is_array()) diseases_in.fail(ErrorCode::MalformedRecord, "'attributes' is not an array");
      for (const auto& a : *it) {
        if (!a.is_object()) diseases_in.fail(ErrorCode::MalformedRecord, "attribute is not an object");
        KnowledgeTriple t{diseases_in.required_string(a, "head", true),
                          diseases_in.required_string(a, "relation", true),
                          diseases_in.required_string(a, "tail", true)};
        add_triple(diseases_in, d, seen, std::move(t));
      }
    }
    index.emplace(d.disease_id, diseases.size());
    triple_sets.push_back(std::move(seen));
    diseases.push_back(std::move(d));
  }

  while (triples_in.next(obj)) {
    const auto disease_id = triples_in.required_string(obj, "disease_id", true);
    KnowledgeTriple t{triples_in.required_string(obj, "head", true),
                      triples_in.required_string(obj, "relation", true),
                      triples_in.required_string(obj, "tail", true)};
    auto it = index.find(disease_id);
    if (it == index.end()) {
      triples_in.fail(ErrorCode::DanglingRecordReference, "triple references unknown disease_id " + disease_id);
    }
    add_triple(triples_in, diseases[it->second], triple_sets[it->second], std::move(t));
  }

  std::unordered_set<std::string> record_ids;
  while (records_in.next(obj)) {
    MedicalRecord r;
    r.record_id = records_in.required_string(obj, "record_id", true);
    r.disease_id = records_in.required_string(obj, "disease_id", true);
    r.chief_complaint = records_in.required_string(obj, "chief_complaint", false);
    r.narrative = records_in.required_string(obj, "narrative", true);
    r.age = records_in.optional_string(obj, "age");
    r.sex = records_in.optional_string(obj, "sex");
    if (!record_ids.insert(r.record_id).second) {
      records_in.fail(ErrorCode::MalformedRecord, "duplicate record_id " + r.record_id);
    }
    auto it = index.find(r.disease_id);
    if (it == index.end()) {
      records_in.fail(ErrorCode::DanglingRecordReference, "record references unknown disease_id " + r.disease_id);
    }
    diseases[it->second].records.push_back(std::move(r));
  }

  return Corpus(std::move(diseases));
}

CorpusStats corpus_stats(const Corpus& corpus) {
  CorpusStats s;
  std::unordered_set<std::string> nodes;
  for (const auto& d : corpus.diseases()) {
    ++s.disease_count;
    s.record_count += d.records.size();
    s.triple_count += d.attributes.size();
    const std::string name = trim(d.name);
    const std::string id = trim(d.disease_id);
    nodes.insert(name);
    for (const auto& t : d.attributes) {
      const std::string head = trim(t.head);
      nodes.insert(head == id ? name : head);
      nodes.insert(trim(t.tail));
    }
  }
  s.node_count = nodes.size();
  return s;
}

}  // namespace mrdrag
