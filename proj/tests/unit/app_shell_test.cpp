#include <atomic>
#include <cstdlib>

#include <gtest/gtest.h>

#include "app_workspace.hpp"
#include "mrdrag/app_config.hpp"

namespace mrdrag {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;
using testing::AppWorkspace;

TEST(Config, ParsesAndResolvesRelativePaths) {
  const auto c = app_config_from_json(json::parse(R"({
    "corpus_dir": "corpus", "index_path": "/abs/index.bin",
    "embedder": {"dim": 32},
    "models": {"Doctor": "doc-model", "Judge": {"model": "judge-model", "temperature": 0.0}},
    "llm": {"backend": "mock", "script": {"rules": [{"purpose": "Doctor", "reply": "[INQUIRE] ?"}]}},
    "engine": {"top_k": 3, "max_rounds": 4},
    "patient": "scripted",
    "service": {"port": 9000, "request_timeout_ms": 1500}
  })"),
                                      "/base");
  EXPECT_EQ(c.corpus_dir, fs::path("/base/corpus"));
  EXPECT_EQ(c.index_path, fs::path("/abs/index.bin"));
  EXPECT_EQ(c.embedder.dim, 32u);
  EXPECT_EQ(c.models.at(Purpose::Doctor).model_name, "doc-model");
  EXPECT_EQ(c.models.at(Purpose::Gate).model_name, "doc-model");
  EXPECT_EQ(c.models.at(Purpose::Judge).model_name, "judge-model");
  EXPECT_EQ(c.llm_backend, LlmBackendKind::Mock);
  ASSERT_TRUE(c.mock_script);
  EXPECT_EQ(c.engine.retriever.top_k, 3u);
  EXPECT_EQ(c.engine.max_rounds, 4u);
  EXPECT_EQ(c.patient, PatientMode::Scripted);
  EXPECT_EQ(c.service.port, 9000);
  EXPECT_EQ(c.service.request_timeout.count(), 1500);
}

TEST(Config, RejectsBadFields) {
  for (const char* bad : {R"({"embedder": {"backend": "magic"}})", R"({"llm": {"backend": "carrier-pigeon"}})",
                          R"({"models": {"Oracle": "x"}})", R"({"patient": "robot"})", R"({"engine": {"top_k": "x"}})",
                          R"([1, 2])"}) {
    try {
      app_config_from_json(json::parse(bad));
      ADD_FAILURE() << bad;
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), ErrorCode::ConfigError) << bad;
    }
  }
  AppConfig missing;
  EXPECT_THROW(missing.validate(), Error);
}

TEST(Config, EnvironmentOverridesFile) {
  AppWorkspace ws("config-env");
  ::setenv("MRDRAG_AUTH_TOKEN", "from-env", 1);
  ::setenv("MRDRAG_API_KEY", "sk-env", 1);
  const auto c = load_app_config(ws.config_path);
  ::unsetenv("MRDRAG_AUTH_TOKEN");
  ::unsetenv("MRDRAG_API_KEY");
  EXPECT_EQ(c.service.auth_token, "from-env");
  EXPECT_EQ(c.endpoint.api_key, "sk-env");
  EXPECT_EQ(c.corpus_dir, ws.dir / "corpus");
}

TEST(Context, BuildsIndexOnceAndRejectsWrongDimension) {
  AppWorkspace ws("context");
  auto config = load_app_config(ws.config_path);
  EXPECT_FALSE(fs::exists(config.index_path));
  { auto ctx = AppContext::open(config); }
  EXPECT_TRUE(fs::exists(config.index_path));
  config.embedder.dim = 32;
  try {
    AppContext::open(config);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::DimensionMismatch);
  }
}

TEST(Service, ConsultationLifecycle) {
  AppWorkspace ws("service");
  auto ctx = AppContext::open(load_app_config(ws.config_path));
  SessionService svc(*ctx);
  EXPECT_EQ(svc.health()["status"], "ok");
  EXPECT_EQ(svc.health()["diseases"], 8);

  const auto created = svc.create_session({{"session_id", "abc"}});
  EXPECT_EQ(created["status"], "AwaitingPatient");
  EXPECT_THROW(svc.create_session({{"session_id", "abc"}}), Error);
  EXPECT_THROW(svc.create_session({{"session_id", "../etc"}}), Error);

  auto r = svc.post_message("abc", {{"text", "my tummy hurts"}, {"include_thinking", true}});
  EXPECT_EQ(r["kind"], "Inquire");
  EXPECT_EQ(r["round_index"], 1);
  EXPECT_EQ(r["hits"].size(), 5u);
  EXPECT_TRUE(r.contains("thinking"));
  EXPECT_FALSE(r["action"].contains("raw_llm_text"));
  r = svc.post_message("abc", {{"text", "Now that you ask, I also sneeze"}});
  EXPECT_EQ(r["kind"], "Diagnose");
  EXPECT_EQ(r["status"], "Concluded");
  EXPECT_FALSE(r.contains("thinking"));
  try {
    svc.post_message("abc", {{"text", "still there?"}});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::SessionConcluded);
    EXPECT_EQ(http_status(e.code()), 409);
  }
  EXPECT_THROW(svc.post_message("nope", {{"text", "x"}}), Error);
  EXPECT_THROW(svc.post_message("abc", {{"txt", "x"}}), Error);
  EXPECT_EQ(svc.get_disease("D0001")["disease_id"], "D0001");
  EXPECT_THROW(svc.get_disease("D9999"), Error);

  const auto t = svc.get_session("abc");
  EXPECT_EQ(t["session"]["turns"].size(), 4u);
  const auto persisted = json::parse(read_text_file((ws.dir / "sessions" / "abc.json").string()));
  EXPECT_EQ(persisted, t);

  SessionService restarted(*ctx);
  EXPECT_EQ(restarted.reload_sessions(), 1u);
  EXPECT_EQ(restarted.get_session("abc"), t);
}

struct Gate {
  std::atomic<bool> entered{false}, release{false};
};

struct HeldBackend : ChatBackend {
  std::shared_ptr<Gate> gate;
  explicit HeldBackend(std::shared_ptr<Gate> g) : gate(std::move(g)) {}
  std::string complete(const ChatRequest&) override {
    gate->entered = true;
    while (!gate->release) std::this_thread::sleep_for(std::chrono::milliseconds(1));
    return "[INQUIRE] And then?";
  }
};

TEST(Service, BusySessionAndTimeout) {
  AppWorkspace ws("busy", testing::happy_path_script(), 4, 8, {{"service", {{"request_timeout_ms", 100}}}});
  auto ctx = AppContext::open(load_app_config(ws.config_path));
  auto gate = std::make_shared<Gate>();
  ctx->gateway().set_backend(Purpose::Doctor, std::make_shared<HeldBackend>(gate));
  SessionService svc(*ctx);
  svc.create_session({{"session_id", "slow"}});
  svc.create_session({{"session_id", "other"}});

  try {
    svc.post_message("slow", {{"text", "first"}});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::Timeout);
    EXPECT_EQ(http_status(e.code()), 504);
  }
  try {
    svc.post_message("slow", {{"text", "second"}});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::SessionBusy);
  }
  gate->release = true;
  EXPECT_EQ(svc.post_message("other", {{"text", "hello"}})["kind"], "Inquire");
  for (int i = 0; i < 1000 && svc.get_session("slow")["session"]["turns"].empty(); ++i) {
    std::this_thread::sleep_for(std::chrono::milliseconds(5));
  }
  EXPECT_EQ(svc.get_session("slow")["session"]["turns"].size(), 2u);
}

TEST(Http, RoutesStatusesAndAuth) {
  AppWorkspace ws("http");
  auto ctx = AppContext::open(load_app_config(ws.config_path));
  SessionService svc(*ctx);
  testing::TestServer server(svc, "tok");
  auto c = server.client();
  const httplib::Headers auth = {{"Authorization", "Bearer tok"}};

  auto res = c.Get("/health");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 200);

  int status = 0;
  auto body = testing::post_json(c, "/sessions", json::object(), &status);
  EXPECT_EQ(status, 401);
  EXPECT_EQ(body["error"]["code"], "UNAUTHORIZED");
  testing::post_json(c, "/sessions", json::object(), &status, {{"Authorization", "Bearer nope"}});
  EXPECT_EQ(status, 401);

  body = testing::post_json(c, "/sessions", {{"session_id", "h1"}}, &status, auth);
  EXPECT_EQ(status, 200);
  body = testing::post_json(c, "/sessions/h1/messages", {{"text", "I feel odd"}}, &status, auth);
  EXPECT_EQ(status, 200);
  EXPECT_EQ(body["kind"], "Inquire");
  body = testing::post_json(c, "/sessions/h1/messages", {{"wrong", 1}}, &status, auth);
  EXPECT_EQ(status, 400);
  EXPECT_EQ(body["error"]["code"], "INVALID_REQUEST");
  res = c.Post("/sessions/h1/messages", auth, "{not json", "application/json");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 400);
  body = testing::post_json(c, "/sessions/missing/messages", {{"text", "x"}}, &status, auth);
  EXPECT_EQ(status, 404);
  EXPECT_EQ(body["error"]["code"], "NOT_FOUND");
  res = c.Get("/diseases/D0002", auth);
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 200);
  res = c.Get("/no/such/route", auth);
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 404);
}

TEST(Cli, ExitCodes) {
  AppWorkspace ws("cli-codes");
  std::string out, err;
  EXPECT_EQ(ws.cli({}, &out, &err), 2);
  EXPECT_EQ(ws.cli({"frobnicate"}, &out, &err), 2);
  EXPECT_EQ(ws.cli({"corpus", "validate", (ws.dir / "corpus").string()}, &out, &err), 0) << err;
  EXPECT_EQ(ws.cli({"corpus", "validate", (ws.dir / "nowhere").string()}, &out, &err), 1);
  EXPECT_NE(err.find("MISSING_FILE"), std::string::npos) << err;
  EXPECT_EQ(ws.cli({"corpus", "stats", (ws.dir / "corpus").string(), "--json"}, &out, &err), 0);
  EXPECT_EQ(json::parse(out)["disease_count"], 8);
  EXPECT_EQ(ws.cli({"index", "search", "--config", ws.config_path.string(), "-q", "my tummy", "--k", "3", "--json"},
                   &out, &err),
            0)
      << err;
  EXPECT_EQ(json::parse(out).size(), 3u);
  EXPECT_EQ(ws.cli({"index", "search", "--config", ws.config_path.string(), "-q", "x", "--mode", "sideways"}, &out,
                   &err),
            2);
}

TEST(Cli, ChatReadsStdinUntilDiagnosis) {
  AppWorkspace ws("cli-chat");
  const std::string args[] = {"mrdrag", "chat", "--config", ws.config_path.string()};
  const char* argv[] = {args[0].c_str(), args[1].c_str(), args[2].c_str(), args[3].c_str()};
  std::ostringstream out, err;
  std::istringstream in("my tummy hurts\nNow that you ask, I sneeze\nignored\n");
  EXPECT_EQ(cli_dispatch(4, argv, out, err, in), 0) << err.str();
  EXPECT_NE(out.str().find("Do you have any other symptoms?"), std::string::npos);
  EXPECT_NE(out.str().find("first candidate"), std::string::npos);
}

TEST(Cli, SimulateMatchesHttp) {
  AppWorkspace ws("cli-http");
  const auto out_dir = ws.dir / "transcripts";
  std::string out, err;
  ASSERT_EQ(ws.cli({"simulate", "--config", ws.config_path.string(), "--cases", ws.cases_path.string(), "--out",
                    out_dir.string(), "--case", ws.cases[0].case_id, "--case", ws.cases[1].case_id},
                   &out, &err),
            0)
      << err;
  auto ctx = AppContext::open(load_app_config(ws.config_path));
  SessionService svc(*ctx);
  testing::TestServer server(svc);
  auto c = server.client();
  for (std::size_t i = 0; i < 2; ++i) {
    const auto cli_t = json::parse(read_text_file((out_dir / (ws.cases[i].case_id + ".json")).string()));
    const auto http_t = testing::http_consultation(c, ws.cases[i]);
    EXPECT_EQ(cli_t["session"]["rounds"].size(), 3u);
    EXPECT_EQ(normalize_transcript(cli_t).dump(), normalize_transcript(http_t).dump());
  }
}

}  // namespace
}  // namespace mrdrag
