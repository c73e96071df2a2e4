#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "mrdrag/llm_gateway.hpp"

namespace mrdrag {

/// A prompt template. Text above a line reading exactly "<<<USER>>>" becomes
/// the system message, the rest the user message; without the separator the
/// whole text is one user message. Placeholders are written {{name}}.
struct PromptTemplate {
  std::string name;
  std::string version;
  std::string text;

  /// Substitutes every placeholder in one pass (substituted values are not
  /// rescanned). Throws Error(ConfigError) for a placeholder with no value.
  std::vector<ChatMessage> render(const std::map<std::string, std::string>& vars) const;
};

/// The named templates the pipeline uses: gate, analyzer, doctor,
/// doctor_final, patient_opening, patient, judge.
class PromptLibrary {
 public:
  /// The compiled-in assets/prompts/*.txt.
  static PromptLibrary defaults();

  const PromptTemplate& get(std::string_view name) const;

  /// Replaces one template with a file. The version is taken from a
  /// "<name>.v<N>.txt" file name, "custom" otherwise.
  void override_from_file(const std::string& name, const std::filesystem::path& path);
  void set(PromptTemplate tmpl);

  /// name -> version, recorded in transcripts.
  std::map<std::string, std::string> versions() const;

 private:
  std::map<std::string, PromptTemplate, std::less<>> templates_;
};

}  // namespace mrdrag
