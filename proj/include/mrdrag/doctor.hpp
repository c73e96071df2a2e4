#pragma once

#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "mrdrag/dialogue.hpp"
#include "mrdrag/llm_gateway.hpp"
#include "mrdrag/prompts.hpp"

namespace mrdrag {

enum class ActionKind { Inquire, Diagnose };

std::string_view to_string(ActionKind k);
std::optional<ActionKind> parse_action_kind(std::string_view s);

inline constexpr std::string_view kInquireMarker = "[INQUIRE]";
inline constexpr std::string_view kDiagnoseMarker = "[DIAGNOSE]";

/// Inserted into the final-round doctor prompt.
inline constexpr std::string_view kForceDiagnoseInstruction =
    "This is the final round of the consultation. You must conclude now with a diagnosis. Do not ask another "
    "question and do not use the [INQUIRE] marker.";

struct DoctorAction {
  ActionKind kind = ActionKind::Inquire;
  std::string text;                          // patient-facing, markers removed
  std::vector<std::string> diagnosis_names;  // Diagnose only
  std::string raw_llm_text;
  bool parse_warning = false;  // no marker found
  bool forced = false;         // an Inquire reply in a forced round was turned into Diagnose

  bool operator==(const DoctorAction&) const = default;
};

/// The earliest marker decides the kind; every marker occurrence is removed
/// from the patient-facing text. Without a marker the reply is an Inquire
/// with parse_warning set. For Diagnose, diagnosis_names holds each
/// candidate name found in the text (case-insensitive), in candidate order.
/// Total over non-blank input; throws EmptyResponse otherwise.
DoctorAction parse_action(std::string_view raw_text, std::span<const std::string> candidate_names);

/// One Doctor call. `guidance` is the Analyzer's notes, or the rendered
/// candidate knowledge when the Analyzer is disabled. With force_diagnose the
/// final-round template is used and any non-Diagnose reply is coerced to
/// Diagnose (flagged `forced`).
DoctorAction respond(std::span<const DialogueTurn> history, std::string_view guidance,
                     std::span<const std::string> candidate_names, bool force_diagnose, LlmGateway& gateway,
                     const PromptLibrary& prompts, std::string_view session_id = {});

}  // namespace mrdrag
