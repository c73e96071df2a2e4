#include "mrdrag/doctor.hpp"

#include "mrdrag/error.hpp"
#include "mrdrag/util.hpp"

namespace mrdrag {

std::string_view to_string(ActionKind k) { return k == ActionKind::Diagnose ? "Diagnose" : "Inquire"; }

std::optional<ActionKind> parse_action_kind(std::string_view s) {
  if (s == "Diagnose") return ActionKind::Diagnose;
  if (s == "Inquire") return ActionKind::Inquire;
  return std::nullopt;
}

namespace {

void erase_all(std::string& s, std::string_view needle) {
  for (auto pos = s.find(needle); pos != std::string::npos; pos = s.find(needle, pos)) s.erase(pos, needle.size());
}

std::string collapse_spaces(std::string_view s) {
  std::string out;
  for (char c : s) {
    if (c == ' ' && !out.empty() && out.back() == ' ') continue;
    out.push_back(c);
  }
  return trim(out);
}

}  // namespace

DoctorAction parse_action(std::string_view raw_text, std::span<const std::string> candidate_names) {
  if (trim(raw_text).empty()) throw Error(ErrorCode::EmptyResponse, "doctor produced an empty response");

  DoctorAction action;
  action.raw_llm_text = std::string(raw_text);
  const auto inquire = raw_text.find(kInquireMarker);
  const auto diagnose = raw_text.find(kDiagnoseMarker);
  if (inquire == std::string_view::npos && diagnose == std::string_view::npos) {
    action.kind = ActionKind::Inquire;
    action.parse_warning = true;
  } else {
    action.kind = diagnose < inquire ? ActionKind::Diagnose : ActionKind::Inquire;
  }

  std::string text(raw_text);
  erase_all(text, kInquireMarker);
  erase_all(text, kDiagnoseMarker);
  action.text = collapse_spaces(text);
  if (action.text.empty()) {
    action.text = "(no message)";
    action.parse_warning = true;
  }

  if (action.kind == ActionKind::Diagnose) {
    for (const auto& name : candidate_names) {
      if (!contains_case_insensitive(action.text, name)) continue;
      if (std::find(action.diagnosis_names.begin(), action.diagnosis_names.end(), name) == action.diagnosis_names.end()) {
        action.diagnosis_names.push_back(name);
      }
    }
  }
  return action;
}

DoctorAction respond(std::span<const DialogueTurn> history, std::string_view guidance,
                     std::span<const std::string> candidate_names, bool force_diagnose, LlmGateway& gateway,
                     const PromptLibrary& prompts, std::string_view session_id) {
  std::map<std::string, std::string> vars = {{"history", render_history(history)}, {"guidance", std::string(guidance)}};
  if (force_diagnose) vars["force_instruction"] = std::string(kForceDiagnoseInstruction);
  auto messages = prompts.get(force_diagnose ? "doctor_final" : "doctor").render(vars);
  const std::string raw = gateway.chat(Purpose::Doctor, std::move(messages), session_id);
  DoctorAction action = parse_action(raw, candidate_names);
  if (force_diagnose && action.kind != ActionKind::Diagnose) {
    action.kind = ActionKind::Diagnose;
    action.forced = true;
    for (const auto& name : candidate_names) {
      if (contains_case_insensitive(action.text, name)) action.diagnosis_names.push_back(name);
    }
  }
  return action;
}

}  // namespace mrdrag
