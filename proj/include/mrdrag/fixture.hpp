#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "mrdrag/kg_store.hpp"

namespace mrdrag {

/// One symptom concept in two registers. The technical term goes into the
/// diagnosis text and the triples; the colloquial phrase is what patients
/// and medical records say.
struct FixtureSymptom {
  std::string technical;   // e.g. "nephrocardalgia"
  std::string colloquial;  // e.g. "my tummy feels crampy, like a brick"
};

struct FixtureDisease {
  std::string disease_id;
  std::string name;
  MedicineSystem system = MedicineSystem::ModernMedicine;
  std::string category_code;
  std::vector<FixtureSymptom> symptoms;
  std::string examination;
  std::string pathogenesis;
};

/// Symptoms per generated disease.
inline constexpr std::size_t kFixtureSymptomsPerDisease = 4;

/// Deterministic vocabulary behind generate_fixture. No two diseases share a
/// technical term or a colloquial phrase, so every generated query has one
/// unambiguous gold disease.
std::vector<FixtureDisease> fixture_vocabulary(std::uint64_t seed, std::size_t n_diseases);

/// Synthetic corpus: technical diagnosis texts, colloquial records that
/// paraphrase a random subset of the disease's symptoms by template
/// substitution. Byte-identical output for a fixed seed.
Corpus generate_fixture(std::uint64_t seed, std::size_t n_diseases, std::size_t records_per_disease);

}  // namespace mrdrag
