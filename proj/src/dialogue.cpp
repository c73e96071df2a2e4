#include "mrdrag/dialogue.hpp"

namespace mrdrag {

std::string_view to_string(Speaker s) { return s == Speaker::Patient ? "Patient" : "Doctor"; }

std::optional<Speaker> parse_speaker(std::string_view s) {
  if (s == "Patient") return Speaker::Patient;
  if (s == "Doctor") return Speaker::Doctor;
  return std::nullopt;
}

std::string render_history(std::span<const DialogueTurn> turns) {
  std::string out;
  for (const auto& t : turns) {
    if (!out.empty()) out += '\n';
    out += to_string(t.role);
    out += ": ";
    out += t.text;
  }
  return out;
}

const DialogueTurn* last_patient_turn(std::span<const DialogueTurn> turns) {
  for (auto it = turns.rbegin(); it != turns.rend(); ++it) {
    if (it->role == Speaker::Patient) return &*it;
  }
  return nullptr;
}

}  // namespace mrdrag
