#include <chrono>
#include <cstdio>
#include <map>
#include <set>

#include <gtest/gtest.h>

#include "app_workspace.hpp"
#include "mrdrag/app_config.hpp"
#include "mrdrag/eval_harness.hpp"
#include "oracle.hpp"

namespace mrdrag {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;
using Seconds = std::chrono::duration<double>;

class Stopwatch {
 public:
  double seconds() const { return Seconds(std::chrono::steady_clock::now() - start_).count(); }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

TEST(Acceptance, Criterion1_SearchMatchesBruteForceOracle) {
  Stopwatch sw;
  std::size_t comparisons = 0;
  for (std::uint64_t seed = 1; seed <= 100; ++seed) {
    Rng rng(seed);
    const std::size_t diseases = 3 + uniform_below(rng, 45);
    const std::size_t records = uniform_below(rng, 4);
    const auto corpus = generate_fixture(seed, diseases, records);
    const TrigramEmbedder embedder(8 + uniform_below(rng, 57));
    const auto index = build_index(corpus, embedder);
    ASSERT_LE(index.di_entries().size() + index.mr_entries().size(), 200u);
    ASSERT_LE(index.dim(), 64u);

    std::vector<std::vector<double>> queries;
    for (const auto& c : generate_fixture_cases(seed, diseases, 1)) queries.push_back(embedder.embed(c.scripted_replies[0]).values);
    // exact copies of indexed texts produce ties at the top
    for (const auto& d : corpus.diseases()) {
      queries.push_back(embedder.embed(d.diagnosis_text).values);
      for (const auto& r : d.records) queries.push_back(embedder.embed(r.narrative).values);
      if (queries.size() > 3 * diseases) break;
    }
    for (const auto& q : queries) {
      for (auto mode : {IndexMode::DI, IndexMode::MR, IndexMode::Both}) {
        for (std::size_t k = 1; k <= 10; ++k) {
          ASSERT_EQ(index.search(q, k, mode), testing::brute_force_search(index, q, k, mode))
              << "seed " << seed << " mode " << to_string(mode) << " k " << k;
          ++comparisons;
        }
      }
    }
  }
  EXPECT_GT(comparisons, 10000u);
  EXPECT_LT(sw.seconds(), 10.0);
}

TEST(Acceptance, Criterion2_MetricsMatchHandValues) {
  using Ranks = std::vector<std::optional<std::size_t>>;
  const Ranks four = {4};
  const auto m4 = metrics_from_ranks(four);
  EXPECT_NEAR(m4.mrr, 0.25, 1e-12);
  EXPECT_EQ(m4.hits_at.at(1), 0.0);
  EXPECT_EQ(m4.hits_at.at(3), 0.0);
  EXPECT_EQ(m4.hits_at.at(10), 1.0);

  const Ranks frozen = {1, 2, 3, std::nullopt, 5, 10, 11, 1, 7, 2};
  const auto m = metrics_from_ranks(frozen);
  EXPECT_NEAR(m.mrr, 0.3776190476190476, 1e-12);
  EXPECT_NEAR(m.hits_at.at(1), 0.2, 1e-12);
  EXPECT_NEAR(m.hits_at.at(3), 0.5, 1e-12);
  EXPECT_NEAR(m.hits_at.at(10), 0.8, 1e-12);

  // the same ten ranks produced through an actual index: gold ids are
  // chosen so the oracle places them at the frozen ranks
  const auto corpus = generate_fixture(17, 15, 1);
  const TrigramEmbedder embedder(64);
  const auto index = build_index(corpus, embedder);
  const std::string text = "my head spins and my tummy is crampy";
  const auto q = embedder.embed(text).values;
  const auto order = testing::brute_force_search(index, q, 100, IndexMode::Both);
  ASSERT_EQ(order.size(), 15u);
  std::vector<RetrievalQuery> queries;
  for (const auto& r : frozen) {
    if (!r) continue;
    queries.push_back({text, order[*r - 1].disease_id});
  }
  const auto via_index = retrieval_metrics(queries, index, IndexMode::Both, embedder);
  EXPECT_NEAR(via_index.mrr, 3.776190476190476 / 9.0, 1e-12);
  EXPECT_NEAR(via_index.hits_at.at(10), 8.0 / 9.0, 1e-12);

  Rng rng(7);
  for (int trial = 0; trial < 1000; ++trial) {
    Ranks r(1 + uniform_below(rng, 50));
    for (auto& x : r) {
      const auto v = uniform_below(rng, 14);
      x = v == 0 ? std::nullopt : std::optional<std::size_t>(v);
    }
    const auto t = metrics_from_ranks(r);
    ASSERT_LE(t.hits_at.at(1), t.hits_at.at(3));
    ASSERT_LE(t.hits_at.at(3), t.hits_at.at(10));
  }
}

TEST(Acceptance, Criterion3_RecordsIndexBeatsDiagnosisIndex) {
  Stopwatch sw;
  int wins = 0;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const auto corpus = generate_fixture(seed, 30, 3);
    const TrigramEmbedder embedder(256);
    const auto index = build_index(corpus, embedder);
    const auto queries = opening_queries(generate_fixture_cases(seed, 30, 1));
    const double mr = retrieval_metrics(queries, index, IndexMode::MR, embedder).mrr;
    const double di = retrieval_metrics(queries, index, IndexMode::DI, embedder).mrr;
    std::printf("  seed %2llu  MRR MR %.4f  DI %.4f\n", static_cast<unsigned long long>(seed), mr, di);
    if (mr > di) ++wins;
  }
  EXPECT_GE(wins, 9);
  EXPECT_LT(sw.seconds(), 5.0);
}

MockScript three_round_script() {
  MockScript s;
  s.always(Purpose::Gate, "YES")
      .always(Purpose::Analyzer, "Two candidates remain; ask about the third symptom.")
      .always(Purpose::Doctor, "[DIAGNOSE] The evidence fits the leading candidate.", "Now that you ask")
      .always(Purpose::Doctor, "[INQUIRE] Anything else you noticed?");
  return s;
}

TEST(Acceptance, Criterion4_TranscriptsAreDeterministic) {
  Stopwatch sw;
  testing::AppWorkspace ws("acceptance-determinism", three_round_script());
  const auto& pc = ws.cases[0];
  std::vector<std::string> runs;
  for (int run = 0; run < 2; ++run) {
    const auto out = ws.dir / ("run" + std::to_string(run));
    ASSERT_EQ(ws.cli({"simulate", "--config", ws.config_path.string(), "--cases", ws.cases_path.string(), "--out",
                      out.string(), "--case", pc.case_id}),
              0);
    const auto t = json::parse(read_text_file((out / (pc.case_id + ".json")).string()));
    ASSERT_EQ(t["session"]["rounds"].size(), 3u);
    ASSERT_EQ(t["session"]["status"], "Concluded");
    runs.push_back(normalize_transcript(t).dump());
  }
  EXPECT_EQ(runs[0], runs[1]);

  auto ctx = AppContext::open(load_app_config(ws.config_path));
  SessionService svc(*ctx);
  testing::TestServer server(svc);
  auto client = server.client();
  const auto http = testing::http_consultation(client, pc);
  ASSERT_FALSE(http.is_null());
  EXPECT_EQ(normalize_transcript(http).dump(), runs[0]);
  EXPECT_LT(sw.seconds(), 5.0);
}

TEST(Acceptance, Criterion5_GateSkipsNonInformativeTurns) {
  MockScript script;
  script.then(Purpose::Gate, "NO")
      .then(Purpose::Gate, "YES")
      .always(Purpose::Analyzer, "Keep asking.")
      .always(Purpose::Doctor, "[INQUIRE] Tell me more.");
  testing::TestStack stack(script);
  auto s = stack.engine->create_session({}, "gated");
  stack.engine->run_round(s, "my tummy is crampy and my head spins");
  stack.engine->run_round(s, "ok");
  stack.engine->run_round(s, "also my ankles swell up");

  EXPECT_EQ(stack.engine->search_count(), 2u);
  ASSERT_EQ(s.rounds.size(), 3u);
  EXPECT_TRUE(s.rounds[0].searched);
  EXPECT_FALSE(s.rounds[1].searched);
  EXPECT_TRUE(s.rounds[2].searched);
  EXPECT_FALSE(s.rounds[0].gate->consulted_llm);
  EXPECT_FALSE(s.rounds[1].gate->retrieve);
  EXPECT_TRUE(s.rounds[2].gate->retrieve);
  EXPECT_EQ(s.rounds[1].hits, s.rounds[0].hits);

  std::vector<std::size_t> gate_rounds;
  std::size_t doctor_requests = 0;
  for (const auto& e : stack.gateway->request_log()) {
    if (e.request.purpose == Purpose::Gate) gate_rounds.push_back(doctor_requests + 1);
    if (e.request.purpose == Purpose::Doctor) ++doctor_requests;
  }
  EXPECT_EQ(gate_rounds, (std::vector<std::size_t>{2, 3}));
  EXPECT_EQ(stack.backend->remaining(), 0u);
}

TEST(Acceptance, Criterion6_RoundCapForcesDiagnosis) {
  MockScript script;
  script.always(Purpose::Gate, "YES").always(Purpose::Analyzer, "Unclear.").always(Purpose::Doctor, "[INQUIRE] And?");
  testing::TestStack stack(script, 21, 10, 2);
  EngineConfig cfg;
  cfg.max_rounds = 5;
  for (const auto& pc : generate_fixture_cases(21, 10, 1)) {
    ScriptedPatient patient(pc.scripted_replies);
    const auto t = run_dialogue(pc, *stack.engine, patient, cfg);
    const auto& s = t.session;
    EXPECT_EQ(s.status, SessionStatus::Concluded) << pc.case_id;
    ASSERT_EQ(s.rounds.size(), 5u);
    std::size_t doctor_turns = 0;
    for (const auto& turn : s.turns) doctor_turns += turn.role == Speaker::Doctor;
    EXPECT_EQ(doctor_turns, 5u);
    EXPECT_EQ(s.rounds.back().action.kind, ActionKind::Diagnose);
    EXPECT_TRUE(s.rounds.back().force_diagnose);
    for (std::size_t r = 0; r < 4; ++r) EXPECT_EQ(s.rounds[r].action.kind, ActionKind::Inquire);
  }
  std::vector<std::string> doctor_requests;
  for (const auto& e : stack.gateway->request_log()) {
    if (e.request.purpose == Purpose::Doctor) doctor_requests.push_back(e.request.joined_content());
  }
  ASSERT_EQ(doctor_requests.size(), 50u);
  for (std::size_t i = 0; i < doctor_requests.size(); ++i) {
    const bool has = doctor_requests[i].find(kForceDiagnoseInstruction) != std::string::npos;
    EXPECT_EQ(has, i % 5 == 4) << i;
  }
}

TEST(Acceptance, Criterion7_AblationReports) {
  MockScript script = testing::happy_path_script();
  testing::AppWorkspace ws("acceptance-ablation", script, 6, 6);
  const auto topk_out = ws.dir / "topk.json";
  const auto na_out = ws.dir / "noanalyzer.json";
  std::string out, err;
  ASSERT_EQ(ws.cli({"evaluate", "ablate", "--config", ws.config_path.string(), "--cases", ws.cases_path.string(),
                    "--axis", "topk", "--seed", "5", "--out", topk_out.string()},
                   &out, &err),
            0)
      << err;
  ASSERT_EQ(ws.cli({"evaluate", "ablate", "--config", ws.config_path.string(), "--cases", ws.cases_path.string(),
                    "--axis", "noanalyzer", "--seed", "5", "--out", na_out.string()},
                   &out, &err),
            0)
      << err;

  const auto topk = json::parse(read_text_file(topk_out.string()));
  std::vector<std::string> settings;
  std::set<std::size_t> counts;
  for (const auto& row : topk["rows"]) {
    settings.push_back(row["setting"]);
    counts.insert(row["case_count"].get<std::size_t>());
  }
  EXPECT_EQ(settings, (std::vector<std::string>{"top_k=1", "top_k=3", "top_k=5", "top_k=7", "top_k=9"}));
  EXPECT_EQ(counts, (std::set<std::size_t>{ws.cases.size()}));

  const auto na = json::parse(read_text_file(na_out.string()));
  ASSERT_EQ(na["rows"].size(), 2u);
  EXPECT_EQ(na["rows"][0]["setting"], "analyzer=on");
  EXPECT_EQ(na["rows"][1]["setting"], "analyzer=off");
  EXPECT_GT(na["rows"][0]["calls"]["Analyzer"].get<int>(), 0);
  EXPECT_EQ(na["rows"][1]["calls"]["Analyzer"].get<int>(), 0);
  EXPECT_EQ(na["rows"][0]["case_count"], na["rows"][1]["case_count"]);
}

TEST(Acceptance, Criterion8_JudgeIsBlindAndShuffleUniform) {
  const auto prompts = PromptLibrary::defaults();
  LlmGateway gw(std::make_shared<MockChatBackend>(
      MockScript{}.always(Purpose::Judge, "Dialogue 1: 3\nDialogue 2: 4\nDialogue 3: 2")));
  const std::vector<std::string> labels = {"MedRAG", "KG-RAG", "MR-DRAG"};
  std::vector<LabeledTranscript> ts;
  for (const auto& label : labels) {
    Transcript t;
    t.session.session_id = "run-" + label;
    t.session.turns = {{Speaker::Patient, "I feel unwell", 1}, {Speaker::Doctor, "Since when?", 1}};
    ts.push_back({label, t});
  }
  const PatientCase pc{"C1", "D1", "Gold", "info", "t", {}};
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    const auto a = judge_transcripts(pc, ts, gw, prompts, seed);
    const auto b = judge_transcripts(pc, ts, gw, prompts, seed);
    ASSERT_TRUE(a.scored);
    EXPECT_EQ(a.presentation_order, b.presentation_order);
    EXPECT_EQ(a.scores, b.scores);
  }
  for (const auto& e : gw.request_log()) {
    ASSERT_EQ(e.request.purpose, Purpose::Judge);
    for (const auto& label : labels) EXPECT_EQ(e.request.joined_content().find(label), std::string::npos);
  }

  std::map<std::vector<std::size_t>, int> freq;
  for (std::uint64_t seed = 0; seed < 10000; ++seed) ++freq[seeded_permutation(3, seed)];
  ASSERT_EQ(freq.size(), 6u);
  for (const auto& [perm, n] : freq) {
    const double share = n / 10000.0;
    std::printf("  permutation %zu%zu%zu  %.4f\n", perm[0], perm[1], perm[2], share);
    EXPECT_LE(std::abs(share - 1.0 / 6.0) / (1.0 / 6.0), 0.05);
  }
}

TEST(Acceptance, Criterion9_CorpusValidationIsTotal) {
  const auto root = testing::data_dir() / "malformed";
  const auto manifest = json::parse(read_text_file((root / "manifest.json").string()));
  EXPECT_EQ(manifest.size(), 12u);
  for (const auto& [dir, expected] : manifest.items()) {
    try {
      load_corpus(root / dir);
      ADD_FAILURE() << dir << " loaded";
    } catch (const CorpusError& e) {
      EXPECT_EQ(to_string(e.code()), expected.get<std::string>()) << dir;
    } catch (const Error& e) {
      EXPECT_EQ(to_string(e.code()), expected.get<std::string>()) << dir;
    }
  }

  std::vector<Corpus> valid = {load_corpus(testing::data_dir() / "small")};
  for (std::uint64_t seed = 1; seed <= 5; ++seed) valid.push_back(generate_fixture(seed, 10, 2));
  for (std::size_t i = 0; i < valid.size(); ++i) {
    const auto dir = testing::scratch_dir("roundtrip-" + std::to_string(i));
    write_corpus(valid[i], dir);
    const auto again = load_corpus(dir);
    EXPECT_EQ(again, valid[i]) << i;
    write_corpus(again, dir / "second");
    EXPECT_EQ(load_corpus(dir / "second"), again);
  }
}

class CriterionPrinter : public ::testing::EmptyTestEventListener {
  void OnTestEnd(const ::testing::TestInfo& info) override {
    std::string name = info.name();
    const auto digit = name.find_first_of("0123456789");
    const auto cut = name.find('_');
    const auto number = name.substr(digit, cut - digit);
    const auto title = name.substr(cut + 1);
    std::printf("%s criterion %s: %s\n", info.result()->Passed() ? "PASS" : "FAIL", number.c_str(), title.c_str());
    std::fflush(stdout);
  }
};

}  // namespace
}  // namespace mrdrag

int main(int argc, char** argv) {
  ::testing::InitGoogleTest(&argc, argv);
  ::testing::UnitTest::GetInstance()->listeners().Append(new mrdrag::CriterionPrinter);
  return RUN_ALL_TESTS();
}
