#include "mrdrag/fixture.hpp"

#include <array>
#include <cctype>
#include <cstdio>
#include <set>
#include <string_view>

#include "mrdrag/util.hpp"

namespace mrdrag {

namespace {

constexpr std::array<std::string_view, 20> kPrefixes = {
    "nephro", "cardio", "hepato", "osteo", "dermo",  "gastro",   "pulmo",  "myo",    "neuro",  "angio",
    "lympho", "cysto",  "chole",  "pyelo", "spondy", "steno",    "sclero", "fibro",  "hemato", "arthro"};
constexpr std::array<std::string_view, 12> kRoots = {"card", "phleb", "trach", "mening", "pancre", "thyr",
                                                     "aden", "splen", "col",   "laryng", "derm",   "myel"};
constexpr std::array<std::string_view, 8> kSuffixes = {"itis",    "osis",    "algia",   "emia",
                                                       "opathy",  "ectasia", "plasia",  "rrhea"};

constexpr std::array<std::string_view, 20> kBodyParts = {
    "tummy", "chest", "head",  "throat", "back",      "knees", "skin",   "eyes",  "ears",  "feet",
    "hands", "neck",  "belly", "shoulders", "gums",   "tongue", "nose",  "hips",  "wrists", "jaw"};
constexpr std::array<std::string_view, 15> kSensations = {"burning", "itchy", "throbbing", "tingly", "sore",
                                                          "swollen", "numb",  "achy",      "crampy", "prickly",
                                                          "heavy",   "tight", "stiff",     "puffy",  "raw"};
constexpr std::array<std::string_view, 20> kSimiles = {
    "a brick",   "pins and needles", "a wet sock", "sandpaper", "a balloon",    "a hot stove", "jelly",
    "a rubber band", "an ant nest",  "static",     "a bruise",  "a tight belt", "a drum",      "a cold spoon",
    "a sunburn", "a pebble",         "a knot",     "a sponge",  "a wasp sting", "a fizzy drink"};

constexpr std::array<std::string_view, 10> kExams = {
    "serum panel",  "abdominal ultrasound", "chest radiograph", "electrocardiogram", "contrast MRI",
    "endoscopy",    "excisional biopsy",    "urinalysis",       "spirometry",        "CT angiography"};
constexpr std::array<std::string_view, 6> kPathoAdjectives = {"autoimmune",   "ischemic",   "inflammatory",
                                                              "degenerative", "infectious", "metabolic"};
constexpr std::array<std::string_view, 5> kPathoProcesses = {"infiltration", "fibrosis", "hyperplasia", "necrosis",
                                                             "dysregulation"};
constexpr std::array<std::string_view, 3> kNameNouns = {"Syndrome", "Disease", "Disorder"};
constexpr std::array<std::string_view, 6> kTcmOrgans = {"Spleen", "Liver", "Kidney", "Heart", "Lung", "Stomach"};
constexpr std::array<std::string_view, 8> kTcmPatterns = {"Qi Deficiency",   "Yin Deficiency", "Yang Deficiency",
                                                          "Damp-Heat",       "Blood Stasis",   "Phlegm-Damp",
                                                          "Qi Stagnation",   "Fire Excess"};

template <std::size_t N>
std::string_view pick(Rng& rng, const std::array<std::string_view, N>& arr) {
  return arr[uniform_below(rng, N)];
}

std::string capitalize(std::string s) {
  if (!s.empty()) s[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(s[0])));
  return s;
}

std::string technical_term(Rng& rng) {
  return std::string(pick(rng, kPrefixes)) + std::string(pick(rng, kRoots)) + std::string(pick(rng, kSuffixes));
}

std::string unique(Rng& rng, std::set<std::string>& used, auto&& make) {
  for (;;) {
    std::string s = make(rng);
    if (used.insert(s).second) return s;
  }
}

std::string two_digits(std::uint64_t v) {
  char buf[8];
  std::snprintf(buf, sizeof(buf), "%02u", static_cast<unsigned>(v % 100));
  return buf;
}

std::string record_narrative(Rng& rng, const std::vector<std::string>& c) {
  switch (uniform_below(rng, 3)) {
    case 0:
      return "Hi doctor, for about " + std::to_string(2 + uniform_below(rng, 12)) + " days " + c[0] +
             ". On top of that " + c[1] + ", and sometimes " + c[2] + ".";
    case 1:
      return capitalize(c[0]) + " and " + c[1] + " since last week. " + capitalize(c[2]) +
             " too, especially at night.";
    default:
      return "I'm worried because " + c[0] + ". Also " + c[1] + " and " + c[2] + ".";
  }
}

}  // namespace

std::vector<FixtureDisease> fixture_vocabulary(std::uint64_t seed, std::size_t n_diseases) {
  Rng rng(seed);
  std::set<std::string> used_terms;
  std::set<std::string> used_phrases;
  std::set<std::string> used_names;
  std::vector<FixtureDisease> out;
  out.reserve(n_diseases);

  for (std::size_t i = 0; i < n_diseases; ++i) {
    FixtureDisease d;
    char id[16];
    std::snprintf(id, sizeof(id), "D%04zu", i + 1);
    d.disease_id = id;
    d.system = (i % 5 == 4) ? MedicineSystem::TCM : MedicineSystem::ModernMedicine;

    std::string name;
    if (d.system == MedicineSystem::TCM) {
      name = std::string(pick(rng, kTcmOrgans)) + " " + std::string(pick(rng, kTcmPatterns)) + " Syndrome";
      d.category_code = "TCM-" + std::string(1, static_cast<char>('A' + uniform_below(rng, 8))) +
                        two_digits(uniform_below(rng, 100));
    } else {
      name = capitalize(technical_term(rng)) + " " + std::string(pick(rng, kNameNouns));
      d.category_code = std::string(1, static_cast<char>('A' + uniform_below(rng, 26))) +
                        two_digits(uniform_below(rng, 100)) + "." + std::to_string(uniform_below(rng, 10));
    }
    for (int k = 2; !used_names.insert(name).second; ++k) {
      name = name.substr(0, name.find(" (type ")) + " (type " + std::to_string(k) + ")";
    }
    d.name = name;

    std::set<std::string_view> bodies_in_disease;
    for (std::size_t s = 0; s < kFixtureSymptomsPerDisease; ++s) {
      FixtureSymptom sym;
      sym.technical = unique(rng, used_terms, technical_term);
      std::string_view body;
      sym.colloquial = unique(rng, used_phrases, [&](Rng& r) {
        body = pick(r, kBodyParts);
        while (bodies_in_disease.contains(body)) body = pick(r, kBodyParts);
        return "my " + std::string(body) + " feels " + std::string(pick(r, kSensations)) + ", like " +
               std::string(pick(r, kSimiles));
      });
      bodies_in_disease.insert(body);
      d.symptoms.push_back(std::move(sym));
    }
    const std::string root(pick(rng, kRoots));
    d.examination = std::string(pick(rng, kExams)) + " with elevated " + root + "in titres";
    d.pathogenesis = std::string(pick(rng, kPathoAdjectives)) + " " + std::string(pick(rng, kPathoProcesses)) +
                     " of " + root + "ic tissue";
    out.push_back(std::move(d));
  }
  return out;
}

Corpus generate_fixture(std::uint64_t seed, std::size_t n_diseases, std::size_t records_per_disease) {
  const auto vocab = fixture_vocabulary(seed, n_diseases);
  // Records draw from a separate stream so the vocabulary does not depend on
  // records_per_disease.
  Rng rng(derive_seed(seed, "records"));
  std::vector<DiseaseEntry> diseases;
  diseases.reserve(vocab.size());

  for (const auto& v : vocab) {
    DiseaseEntry d;
    d.disease_id = v.disease_id;
    d.name = v.name;
    d.system = v.system;
    d.category_code = v.category_code;
    const auto& s = v.symptoms;
    d.diagnosis_text = v.name + " is established by " + s[0].technical + ", " + s[1].technical + ", " +
                       s[2].technical + " and " + s[3].technical + ". Confirmatory examination: " + v.examination +
                       ". Pathogenesis: " + v.pathogenesis +
                       ". Exclude differential entities with overlapping presentation before confirmation.";
    for (const auto& sym : s) d.attributes.push_back({v.name, "Symptom", sym.technical});
    d.attributes.push_back({v.name, "Examination", v.examination});
    d.attributes.push_back({v.name, "Pathogenesis", v.pathogenesis});
    d.attributes.push_back(
        {v.name, "Department", v.system == MedicineSystem::TCM ? "TCM internal medicine" : "internal medicine"});

    for (std::size_t j = 0; j < records_per_disease; ++j) {
      std::vector<std::size_t> order = {0, 1, 2, 3};
      seeded_shuffle(order, rng);
      std::vector<std::string> phrases;
      for (std::size_t k = 0; k < 3; ++k) phrases.push_back(s[order[k]].colloquial);
      MedicalRecord r;
      r.record_id = v.disease_id + "-R" + std::to_string(j + 1);
      r.disease_id = v.disease_id;
      r.chief_complaint = capitalize(phrases[0]) + " and " + phrases[1];
      r.narrative = record_narrative(rng, phrases);
      r.age = std::to_string(18 + uniform_below(rng, 63));
      r.sex = uniform_below(rng, 2) == 0 ? "F" : "M";
      d.records.push_back(std::move(r));
    }
    diseases.push_back(std::move(d));
  }
  return Corpus(std::move(diseases));
}

}  // namespace mrdrag
