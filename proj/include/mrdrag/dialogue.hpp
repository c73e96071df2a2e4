#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>

namespace mrdrag {

enum class Speaker { Patient, Doctor };

std::string_view to_string(Speaker s);
std::optional<Speaker> parse_speaker(std::string_view s);

/// One utterance. A doctor turn shares the round_index of the patient turn
/// it answers; rounds are 1-based.
struct DialogueTurn {
  Speaker role = Speaker::Patient;
  std::string text;
  std::size_t round_index = 1;

  bool operator==(const DialogueTurn&) const = default;
};

/// "Patient: ...\nDoctor: ..." one line per turn.
std::string render_history(std::span<const DialogueTurn> turns);

/// The latest patient utterance, if any.
const DialogueTurn* last_patient_turn(std::span<const DialogueTurn> turns);

}  // namespace mrdrag
