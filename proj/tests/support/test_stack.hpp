#pragma once

#include <chrono>
#include <filesystem>
#include <memory>
#include <string>

#include "mrdrag/dialogue_engine.hpp"
#include "mrdrag/fixture.hpp"

namespace mrdrag::testing {

inline std::filesystem::path data_dir() { return MRDRAG_TEST_DATA_DIR; }

inline std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("mrdrag-test-" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline Clock fixed_clock() {
  return [] { return std::chrono::system_clock::time_point(std::chrono::seconds(1704067200)); };
}

// Fixture corpus, trigram embedder, index, mock gateway and an engine.
struct TestStack {
  Corpus corpus;
  TrigramEmbedder embedder;
  DualIndex index;
  std::shared_ptr<MockChatBackend> backend;
  std::unique_ptr<LlmGateway> gateway;
  PromptLibrary prompts = PromptLibrary::defaults();
  std::unique_ptr<DialogueEngine> engine;

  TestStack(MockScript script, std::uint64_t seed = 11, std::size_t diseases = 12, std::size_t records = 3,
            std::size_t dim = 128)
      : corpus(generate_fixture(seed, diseases, records)),
        embedder(dim),
        index(build_index(corpus, embedder)),
        backend(std::make_shared<MockChatBackend>(std::move(script))),
        gateway(std::make_unique<LlmGateway>(backend)) {
    engine = std::make_unique<DialogueEngine>(EngineDeps{corpus, index, embedder, *gateway, prompts, fixed_clock()});
  }
};

// Gate YES, fixed analyzer notes, doctor inquires until the patient says
// "Now that you ask", judge scores five dialogues.
inline MockScript happy_path_script() {
  MockScript s;
  s.always(Purpose::Gate, "YES")
      .always(Purpose::Analyzer, "Candidates differ by onset; ask about the remaining symptoms.")
      .always(Purpose::Doctor, "[DIAGNOSE] The findings point to the first candidate.", "Now that you ask")
      .always(Purpose::Doctor, "[INQUIRE] Do you have any other symptoms?")
      .always(Purpose::Judge, "Dialogue 1: 4\nDialogue 2: 3\nDialogue 3: 5\nDialogue 4: 2\nDialogue 5: 4");
  return s;
}

}  // namespace mrdrag::testing
