#include <atomic>
#include <thread>

#include <gtest/gtest.h>

#include "mrdrag/dialogue_engine.hpp"
#include "mrdrag/util.hpp"
#include "test_stack.hpp"

namespace mrdrag {
namespace {

using testing::happy_path_script;
using testing::TestStack;

void expect_alternation(const Session& s) {
  for (std::size_t i = 0; i < s.turns.size(); ++i) {
    EXPECT_EQ(s.turns[i].role, i % 2 == 0 ? Speaker::Patient : Speaker::Doctor) << i;
    EXPECT_EQ(s.turns[i].round_index, i / 2 + 1);
  }
  EXPECT_EQ(s.turns.size() % 2, 0u);
  EXPECT_EQ(s.rounds.size(), s.turns.size() / 2);
  const bool diagnosed = !s.rounds.empty() && s.rounds.back().action.kind == ActionKind::Diagnose;
  EXPECT_EQ(s.status == SessionStatus::Concluded, diagnosed);
}

TEST(Engine, RoundRunsEveryStage) {
  TestStack stack(happy_path_script());
  auto s = stack.engine->create_session({}, "s1");
  EXPECT_EQ(s.created_at, "2024-01-01T00:00:00.000Z");
  const auto action = stack.engine->run_round(s, "my chest feels tight");
  EXPECT_EQ(action.kind, ActionKind::Inquire);
  ASSERT_EQ(s.rounds.size(), 1u);
  const auto& r = s.rounds[0];
  EXPECT_TRUE(r.searched);
  EXPECT_FALSE(r.gate->consulted_llm);
  EXPECT_EQ(r.hits.size(), 5u);
  ASSERT_TRUE(r.analysis.has_value());
  EXPECT_EQ(r.analysis->candidate_ids.size(), 5u);
  const auto counts = stack.gateway->call_counts("s1");
  EXPECT_EQ(counts.at(Purpose::Analyzer), 1u);
  EXPECT_EQ(counts.at(Purpose::Doctor), 1u);
  EXPECT_FALSE(counts.contains(Purpose::Gate));
  // the doctor sees the analyzer notes, not raw packets
  const auto log = stack.gateway->request_log();
  EXPECT_NE(log.back().request.joined_content().find("Candidates differ by onset"), std::string::npos);
  expect_alternation(s);
}

TEST(Engine, WithoutAnalyzerTheDoctorSeesCandidates) {
  TestStack stack(happy_path_script());
  EngineConfig cfg;
  cfg.analyzer_enabled = false;
  auto s = stack.engine->create_session(cfg, "s1");
  stack.engine->run_round(s, "my chest feels tight");
  EXPECT_FALSE(s.rounds[0].analysis.has_value());
  EXPECT_EQ(stack.gateway->call_count(Purpose::Analyzer), 0u);
  EXPECT_NE(stack.gateway->request_log().back().request.joined_content().find("Candidate 1 (score"), std::string::npos);
}

TEST(Engine, DiagnoseConcludes) {
  TestStack stack(happy_path_script());
  auto s = stack.engine->create_session({}, "s1");
  stack.engine->run_round(s, "I cough");
  stack.engine->run_round(s, "Now that you ask, my head aches");
  EXPECT_EQ(s.status, SessionStatus::Concluded);
  try {
    stack.engine->run_round(s, "hello?");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::SessionConcluded);
  }
  expect_alternation(s);
}

TEST(Engine, StageFailureKeepsTurnsAndRecordsError) {
  MockScript script;
  script.always(Purpose::Analyzer, "notes");  // no doctor replies at all
  TestStack stack(script);
  auto s = stack.engine->create_session({}, "s1");
  try {
    stack.engine->run_round(s, "I cough");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::ScriptExhausted);
  }
  EXPECT_TRUE(s.turns.empty());
  EXPECT_TRUE(s.rounds.empty());
  ASSERT_EQ(s.errors.size(), 1u);
  EXPECT_EQ(s.errors[0].stage, "doctor");
  EXPECT_EQ(s.errors[0].code, "SCRIPT_EXHAUSTED");
  EXPECT_EQ(s.status, SessionStatus::AwaitingPatient);
}

TEST(Engine, RejectsBlankUtterance) {
  TestStack stack(happy_path_script());
  auto s = stack.engine->create_session({});
  EXPECT_FALSE(s.session_id.empty());
  EXPECT_THROW(stack.engine->run_round(s, "   "), Error);
}

TEST(Engine, ConfigValidation) {
  TestStack stack(happy_path_script());
  EngineConfig bad;
  bad.max_rounds = 0;
  EXPECT_THROW(stack.engine->create_session(bad), Error);
  bad = {};
  bad.retriever.top_k = 0;
  EXPECT_THROW(stack.engine->create_session(bad), Error);
}

TEST(Engine, ConcurrentRoundOnOneSessionIsBusy) {
  // A backend that blocks until released, so one round is held in flight.
  struct Blocking : ChatBackend {
    std::atomic<bool> entered{false}, release{false};
    std::string complete(const ChatRequest&) override {
      entered = true;
      while (!release) std::this_thread::yield();
      return "[INQUIRE] ok?";
    }
  };
  TestStack stack(MockScript{});
  auto blocking = std::make_shared<Blocking>();
  stack.gateway->set_backend(Purpose::Analyzer, blocking);
  stack.gateway->set_backend(Purpose::Doctor, blocking);
  auto s = stack.engine->create_session({}, "busy");
  auto copy = s;
  std::thread t([&] { stack.engine->run_round(s, "first"); });
  while (!blocking->entered) std::this_thread::yield();
  try {
    stack.engine->run_round(copy, "second");
    ADD_FAILURE();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::SessionBusy);
  }
  auto other = stack.engine->create_session({}, "other");
  blocking->release = true;
  t.join();
  EXPECT_NO_THROW(stack.engine->run_round(other, "independent"));
  EXPECT_EQ(s.rounds.size(), 1u);
}

TEST(RunDialogue, PatientFailureEndsIncomplete) {
  TestStack stack(happy_path_script());
  PatientCase pc{"C1", "D0001", "Whatever", "info", "test", {}};
  ScriptedPatient patient({"I cough"});
  const auto t = run_dialogue(pc, *stack.engine, patient, EngineConfig{});
  EXPECT_FALSE(t.complete);
  EXPECT_FALSE(t.error.empty());
  EXPECT_EQ(t.session.session_id, "sim-C1");
  ASSERT_EQ(t.session.errors.size(), 1u);
  EXPECT_EQ(t.session.errors[0].stage, "patient");
  EXPECT_EQ(t.session.errors[0].round_index, 2u);
  EXPECT_EQ(t.session.rounds.size(), 1u);
}

TEST(Transcript, JsonRoundTrip) {
  TestStack stack(happy_path_script());
  PatientCase pc{"C1", "D0001", "Whatever", "info", "test", {}};
  ScriptedPatient patient({"I cough", "I see.", "Now that you ask, fever"});
  const auto t = run_dialogue(pc, *stack.engine, patient, EngineConfig{});
  EXPECT_TRUE(t.complete);
  EXPECT_EQ(t.prompt_versions.at("doctor"), "v1");
  EXPECT_EQ(t.models.at("Judge"), "gpt-4o");
  const auto j = to_json(t);
  EXPECT_EQ(j["version"], "mrdrag.transcript/1");
  EXPECT_EQ(transcript_from_json(j), t);
  EXPECT_EQ(to_json(transcript_from_json(nlohmann::json::parse(j.dump()))), j);

  const auto n = normalize_transcript(j);
  EXPECT_FALSE(n["session"].contains("session_id"));
  EXPECT_FALSE(n["session"].contains("created_at"));
  EXPECT_FALSE(n.contains("wall_clock_ms"));
}

TEST(EngineConfigJson, OverridesAndRejects) {
  const auto c = engine_config_from_json(nlohmann::json::parse(R"({"top_k": 3, "index_mode": "both"})"));
  EXPECT_EQ(c.retriever.top_k, 3u);
  EXPECT_EQ(c.retriever.index_mode, IndexMode::Both);
  EXPECT_EQ(c.max_rounds, 5u);
  EXPECT_EQ(engine_config_from_json(to_json(c)), c);
  EXPECT_THROW(engine_config_from_json(nlohmann::json::parse(R"({"index_mode": "xx"})")), Error);
  EXPECT_THROW(engine_config_from_json(nlohmann::json::parse(R"({"top_k": "five"})")), Error);
}

TEST(EngineProperty, AlternationHoldsForRandomScripts) {
  for (std::uint64_t seed = 0; seed < 25; ++seed) {
    MockScript script;
    script.always(Purpose::Analyzer, "notes");
    Rng rng(seed);
    for (int i = 0; i < 6; ++i) {
      script.then(Purpose::Gate, uniform_below(rng, 2) ? "YES" : "NO");
      script.then(Purpose::Doctor, uniform_below(rng, 4) == 0 ? "[DIAGNOSE] It is the first." : "[INQUIRE] More?");
    }
    TestStack stack(script);
    EngineConfig cfg;
    cfg.max_rounds = 1 + seed % 5;
    PatientCase pc{"C", "D0001", "", "info", "test", {}};
    ScriptedPatient patient({"a b c", "d e f", "g h i", "j k l", "m n o", "p q r"});
    const auto t = run_dialogue(pc, *stack.engine, patient, cfg);
    EXPECT_TRUE(t.complete) << seed;
    EXPECT_LE(t.session.rounds.size(), cfg.max_rounds);
    expect_alternation(t.session);
  }
}

}  // namespace
}  // namespace mrdrag
