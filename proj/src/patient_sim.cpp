#include "mrdrag/patient_sim.hpp"

#include <cctype>
#include <fstream>

#include "mrdrag/error.hpp"
#include "mrdrag/fixture.hpp"
#include "mrdrag/util.hpp"

namespace mrdrag {

using nlohmann::json;

json to_json(const PatientCase& c) {
  json j = {{"case_id", c.case_id},
            {"gold_disease_id", c.gold_disease_id},
            {"gold_disease_name", c.gold_disease_name},
            {"case_info", c.case_info},
            {"source_tag", c.source_tag}};
  if (!c.scripted_replies.empty()) j["scripted_replies"] = c.scripted_replies;
  return j;
}

PatientCase patient_case_from_json(const json& j) {
  PatientCase c;
  try {
    c.case_id = j.at("case_id").get<std::string>();
    c.gold_disease_id = j.value("gold_disease_id", "");
    c.gold_disease_name = j.value("gold_disease_name", "");
    c.case_info = j.at("case_info").get<std::string>();
    c.source_tag = j.value("source_tag", "imported");
    if (j.contains("scripted_replies")) c.scripted_replies = j.at("scripted_replies").get<std::vector<std::string>>();
  } catch (const json::exception& e) {
    throw Error(ErrorCode::MalformedRecord, std::string("patient case: ") + e.what());
  }
  if (trim(c.case_id).empty()) throw Error(ErrorCode::MalformedRecord, "patient case with empty case_id");
  if (trim(c.case_info).empty()) throw Error(ErrorCode::MalformedRecord, "case " + c.case_id + " has empty case_info");
  return c;
}

std::vector<PatientCase> load_cases(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::MissingFile, "cannot open case file " + path.string());
  std::vector<PatientCase> cases;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    try {
      cases.push_back(patient_case_from_json(json::parse(line)));
    } catch (const json::exception& e) {
      throw Error(ErrorCode::MalformedRecord, path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    } catch (const Error& e) {
      throw Error(e.code(), path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return cases;
}

void write_cases(std::span<const PatientCase> cases, const std::filesystem::path& path) {
  std::string out;
  for (const auto& c : cases) out += to_json(c).dump() + "\n";
  write_text_file(path.string(), out);
}

void check_gold(std::span<const PatientCase> cases, const Corpus& corpus) {
  for (const auto& c : cases) {
    if (!corpus.find(c.gold_disease_id)) {
      throw Error(ErrorCode::UnresolvableGold,
                  "case " + c.case_id + ": gold disease '" + c.gold_disease_id + "' is not in the corpus");
    }
  }
}

// ---------------------------------------------------------------------------

ScriptedPatient::ScriptedPatient(std::vector<std::string> replies) : replies_(std::move(replies)) {}

std::string ScriptedPatient::reply(const PatientCase& patient_case, std::span<const DialogueTurn>) {
  std::lock_guard lock(mu_);
  if (next_ >= replies_.size()) {
    throw Error(ErrorCode::ScriptExhausted, "scripted patient for case " + patient_case.case_id + " ran out of replies");
  }
  return replies_[next_++];
}

LlmPatient::LlmPatient(LlmGateway& gateway, const PromptLibrary& prompts, std::string session_id)
    : gateway_(gateway), prompts_(prompts), session_id_(std::move(session_id)) {}

std::string LlmPatient::reply(const PatientCase& patient_case, std::span<const DialogueTurn> history) {
  std::vector<ChatMessage> messages;
  if (history.empty()) {
    messages = prompts_.get("patient_opening").render({{"case_info", patient_case.case_info}});
  } else {
    messages = prompts_.get("patient").render(
        {{"case_info", patient_case.case_info}, {"history", render_history(history)}});
  }
  return trim(gateway_.chat(Purpose::Patient, std::move(messages), session_id_));
}

std::size_t count_name_leaks(const PatientCase& patient_case, std::span<const DialogueTurn> turns) {
  if (trim(patient_case.gold_disease_name).empty()) return 0;
  std::size_t leaks = 0;
  for (const auto& t : turns) {
    if (t.role == Speaker::Patient && contains_case_insensitive(t.text, patient_case.gold_disease_name)) ++leaks;
  }
  return leaks;
}

// ---------------------------------------------------------------------------

namespace {

std::string capitalize(std::string s) {
  if (!s.empty()) s[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(s[0])));
  return s;
}

std::string opening(Rng& rng, const std::string& a, const std::string& b) {
  switch (uniform_below(rng, 3)) {
    case 0: return "Doc, lately " + a + " and " + b + ".";
    case 1: return "Hello. " + capitalize(a) + ", and " + b + ". What could it be?";
    default: return "I need some help: " + a + " and also " + b + ".";
  }
}

}  // namespace

std::vector<PatientCase> generate_fixture_cases(std::uint64_t seed, std::size_t n_diseases,
                                                std::size_t cases_per_disease) {
  const auto vocab = fixture_vocabulary(seed, n_diseases);
  Rng rng(derive_seed(seed, "cases"));
  std::vector<PatientCase> cases;
  for (const auto& d : vocab) {
    for (std::size_t c = 0; c < cases_per_disease; ++c) {
      std::vector<std::size_t> order = {0, 1, 2, 3};
      seeded_shuffle(order, rng);
      const auto& s = d.symptoms;
      PatientCase pc;
      pc.case_id = "C-" + d.disease_id + "-" + std::to_string(c + 1);
      pc.gold_disease_id = d.disease_id;
      pc.gold_disease_name = d.name;
      pc.source_tag = "fixture";
      pc.case_info = "Symptoms in the patient's words: " + s[order[0]].colloquial + "; " + s[order[1]].colloquial +
                     "; " + s[order[2]].colloquial + "; " + s[order[3]].colloquial + ". Onset " +
                     std::to_string(3 + uniform_below(rng, 20)) + " days ago. Examination: " + d.examination +
                     ". Confirmed diagnosis: " + d.name + ".";
      pc.scripted_replies = {opening(rng, s[order[0]].colloquial, s[order[1]].colloquial),
                             "Yes, and " + s[order[2]].colloquial + ".",
                             "Now that you ask, " + s[order[3]].colloquial + ".",
                             "I see.",
                             "No, nothing else that I can think of."};
      cases.push_back(std::move(pc));
    }
  }
  return cases;
}

}  // namespace mrdrag
