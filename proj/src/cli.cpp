#include "mrdrag/cli.hpp"

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <spdlog/fmt/fmt.h>
#include <spdlog/spdlog.h>

#include "mrdrag/app_config.hpp"
#include "mrdrag/eval_harness.hpp"
#include "mrdrag/fixture.hpp"
#include "mrdrag/service.hpp"
#include "mrdrag/util.hpp"

namespace mrdrag {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

/// Shared source options: a config file, or explicit corpus/index paths.
struct Sources {
  std::string config;
  std::string corpus;
  std::string index;
  std::size_t dim = 0;

  void add_to(CLI::App* app, bool with_index = true) {
    app->add_option("--config", config, "Configuration file");
    app->add_option("--corpus", corpus, "Corpus directory (overrides the config)");
    if (with_index) app->add_option("--index", index, "Index file (overrides the config)");
    app->add_option("--dim", dim, "Deterministic embedder dimension (overrides the config)");
  }

  AppConfig resolve() const {
    AppConfig c = config.empty() ? AppConfig{} : load_app_config(config);
    if (config.empty()) apply_env_overrides(c);
    if (!corpus.empty()) c.corpus_dir = corpus;
    if (!index.empty()) c.index_path = index;
    if (dim) c.embedder.dim = dim;
    if (c.corpus_dir.empty()) throw Error(ErrorCode::ConfigError, "no corpus given (use --corpus or --config)");
    return c;
  }
};

/// Corpus, embedder and index without any LLM plumbing.
struct Retrieval {
  Corpus corpus;
  std::unique_ptr<Embedder> embedder;
  std::optional<DualIndex> index;

  explicit Retrieval(const AppConfig& c) : corpus(load_corpus(c.corpus_dir)), embedder(make_embedder(c.embedder, c.endpoint)) {
    if (c.index_path.empty()) throw Error(ErrorCode::ConfigError, "no index given (use --index or --config)");
    if (!fs::exists(c.index_path) && c.build_index_if_missing) {
      index = build_index(corpus, *embedder, c.index_workers);
      save_index(*index, c.index_path);
    } else {
      index = load_index(c.index_path, corpus);
    }
  }
};

std::vector<PatientCase> select_cases(const std::string& path, const std::vector<std::string>& only) {
  auto cases = load_cases(path);
  if (only.empty()) return cases;
  std::vector<PatientCase> picked;
  for (const auto& id : only) {
    auto it = std::find_if(cases.begin(), cases.end(), [&](const auto& c) { return c.case_id == id; });
    if (it == cases.end()) throw Error(ErrorCode::NotFound, "no case '" + id + "' in " + path);
    picked.push_back(*it);
  }
  return picked;
}

/// "label=dir" -> transcripts in dir, keyed by case id.
std::pair<std::string, fs::path> split_labeled(const std::string& spec) {
  const auto eq = spec.find('=');
  if (eq == std::string::npos || eq == 0 || eq + 1 == spec.size()) {
    throw Error(ErrorCode::InvalidRequest, "expected label=directory, got '" + spec + "'");
  }
  return {spec.substr(0, eq), spec.substr(eq + 1)};
}

Transcript read_transcript(const fs::path& dir, const std::string& case_id) {
  const auto path = dir / (case_id + ".json");
  try {
    return transcript_from_json(json::parse(read_text_file(path.string())));
  } catch (const json::exception& e) {
    throw Error(ErrorCode::MalformedRecord, path.string() + ": " + e.what());
  }
}

// --- corpus ----------------------------------------------------------------

int corpus_validate(const std::string& dir, std::ostream& out) {
  const auto corpus = load_corpus(dir);
  out << fmt::format("ok: {} diseases, {} records, fingerprint {}\n", corpus.size(), corpus.record_count(),
                     corpus.fingerprint());
  return 0;
}

int corpus_stats_cmd(const std::string& dir, bool as_json, std::ostream& out) {
  const auto stats = corpus_stats(load_corpus(dir));
  if (as_json) {
    out << to_json(stats).dump(2) << "\n";
    return 0;
  }
  out << fmt::format("{:<10} {:>8}\n", "diseases", stats.disease_count);
  out << fmt::format("{:<10} {:>8}\n", "nodes", stats.node_count);
  out << fmt::format("{:<10} {:>8}\n", "triples", stats.triple_count);
  out << fmt::format("{:<10} {:>8}\n", "records", stats.record_count);
  return 0;
}

// --- index -----------------------------------------------------------------

int index_build(const Sources& src, const std::string& out_path, std::size_t workers, std::ostream& out) {
  auto c = src.resolve();
  if (!out_path.empty()) c.index_path = out_path;
  if (c.index_path.empty()) throw Error(ErrorCode::ConfigError, "no output path (use --out or --config)");
  const auto corpus = load_corpus(c.corpus_dir);
  const auto embedder = make_embedder(c.embedder, c.endpoint);
  const auto index = build_index(corpus, *embedder, workers ? workers : c.index_workers);
  save_index(index, c.index_path);
  out << fmt::format("wrote {} ({} DI + {} MR entries, dim {})\n", c.index_path.string(), index.di_entries().size(),
                     index.mr_entries().size(), index.dim());
  return 0;
}

int index_search(const Sources& src, const std::string& query, std::size_t k, const std::string& mode_name,
                 bool as_json, std::ostream& out) {
  const auto mode = parse_index_mode(mode_name);
  if (!mode) throw Error(ErrorCode::InvalidRequest, "unknown mode '" + mode_name + "'");
  Retrieval r(src.resolve());
  const auto hits = r.index->search(r.embedder->embed(query).values, k, *mode);
  if (as_json) {
    json arr = json::array();
    for (const auto& h : hits) {
      auto j = to_json(h);
      j["name"] = r.corpus.at(h.disease_id).name;
      arr.push_back(j);
    }
    out << arr.dump(2) << "\n";
    return 0;
  }
  out << fmt::format("{:>4}  {:<12} {:>8}  {:<3}  {}\n", "rank", "disease", "score", "src", "name");
  for (const auto& h : hits) {
    out << fmt::format("{:>4}  {:<12} {:>8.4f}  {:<3}  {}\n", h.rank, h.disease_id, h.score, to_string(h.source),
                       r.corpus.at(h.disease_id).name);
  }
  return 0;
}

// --- dialogue --------------------------------------------------------------

int chat(const std::string& config_path, bool show_knowledge, std::ostream& out, std::istream& in) {
  auto ctx = AppContext::open(load_app_config(config_path));
  auto& engine = ctx->engine();
  Session session = engine.create_session(ctx->config().engine);
  out << "Describe your symptoms. An empty line ends the consultation.\n";
  std::string line;
  while (session.status == SessionStatus::AwaitingPatient) {
    out << "patient> " << std::flush;
    if (!std::getline(in, line) || trim(line).empty()) break;
    try {
      const auto action = engine.run_round(session, line);
      if (show_knowledge) {
        for (const auto& h : session.rounds.back().hits) {
          out << fmt::format("  [{} {:.3f} {}] {}\n", h.rank, h.score, to_string(h.source),
                             ctx->corpus().at(h.disease_id).name);
        }
      }
      out << "doctor> " << action.text << "\n";
    } catch (const Error& e) {
      out << "(round failed: " << error_wire_code(e.code()) << ": " << e.what() << ")\n";
    }
  }
  if (session.status == SessionStatus::Concluded) out << "Consultation concluded.\n";
  return 0;
}

int simulate(const std::string& config_path, const std::string& cases_path, const std::vector<std::string>& only,
             const std::string& out_dir, std::ostream& out) {
  auto ctx = AppContext::open(load_app_config(config_path));
  const auto cases = select_cases(cases_path, only);
  check_gold(cases, ctx->corpus());
  std::size_t failed = 0;
  for (const auto& c : cases) {
    const std::string sid = "sim-" + c.case_id;
    auto patient = ctx->make_patient(c, sid);
    const auto t = run_dialogue(c, ctx->engine(), *patient, ctx->config().engine, sid);
    write_text_file((fs::path(out_dir) / (c.case_id + ".json")).string(), to_json(t).dump(2) + "\n");
    const auto& last = t.session.rounds;
    out << fmt::format("{:<16} rounds {:>2}  {:<10} {}\n", c.case_id, last.size(),
                       t.complete ? "diagnosed" : "incomplete",
                       last.empty() ? t.error : last.back().action.text.substr(0, 80));
    if (!t.error.empty()) ++failed;
  }
  out << fmt::format("{} transcript(s) written to {}; {} failed\n", cases.size(), out_dir, failed);
  return failed ? 1 : 0;
}

// --- evaluate --------------------------------------------------------------

int evaluate_retrieval(const Sources& src, const std::string& cases_path, const std::string& mode_name,
                       std::size_t max_rank, const std::string& out_path, std::ostream& out) {
  Retrieval r(src.resolve());
  const auto cases = load_cases(cases_path);
  check_gold(cases, r.corpus);
  const auto queries = opening_queries(cases);
  std::vector<IndexMode> modes;
  if (to_lower_ascii(mode_name) == "all") {
    modes = {IndexMode::DI, IndexMode::MR, IndexMode::Both};
  } else if (auto m = parse_index_mode(mode_name)) {
    modes = {*m};
  } else {
    throw Error(ErrorCode::InvalidRequest, "unknown mode '" + mode_name + "'");
  }
  json report = {{"max_rank", max_rank}, {"modes", json::object()}};
  std::string table;
  for (std::size_t i = 0; i < modes.size(); ++i) {
    const auto m = retrieval_metrics(queries, *r.index, modes[i], *r.embedder, max_rank);
    report["modes"][std::string(to_string(modes[i]))] = to_json(m);
    auto rendered = render_table(m, to_string(modes[i]));
    table += i == 0 ? rendered : rendered.substr(rendered.find('\n') + 1);
  }
  out << table;
  if (!out_path.empty()) write_text_file(out_path, report.dump(2) + "\n");
  return 0;
}

int evaluate_judge(const std::string& config_path, const std::string& cases_path,
                   const std::vector<std::string>& labeled_dirs, std::uint64_t seed, const std::string& out_path,
                   std::ostream& out) {
  if (labeled_dirs.empty()) throw Error(ErrorCode::InvalidRequest, "give at least one --transcripts label=dir");
  auto ctx = AppContext::open(load_app_config(config_path));
  const auto cases = load_cases(cases_path);
  std::vector<std::pair<std::string, fs::path>> sources;
  for (const auto& s : labeled_dirs) sources.push_back(split_labeled(s));

  json outcomes = json::array();
  std::map<std::string, std::pair<double, std::size_t>> totals;
  std::size_t unscored = 0;
  for (const auto& c : cases) {
    std::vector<LabeledTranscript> labeled;
    for (const auto& [label, dir] : sources) labeled.push_back({label, read_transcript(dir, c.case_id)});
    const auto o = judge_transcripts(c, labeled, ctx->gateway(), ctx->prompts(), derive_seed(seed, c.case_id));
    outcomes.push_back(to_json(o));
    if (!o.scored) ++unscored;
    for (const auto& s : o.scores) {
      totals[s.method_label].first += s.score;
      ++totals[s.method_label].second;
    }
  }
  out << fmt::format("{:<16} {:>8} {:>7}\n", "method", "mean", "scored");
  for (const auto& [label, t] : totals) {
    out << fmt::format("{:<16} {:>8.3f} {:>7}\n", label, t.first / static_cast<double>(t.second), t.second);
  }
  if (unscored) out << unscored << " case(s) unscored\n";
  if (!out_path.empty()) write_text_file(out_path, json{{"seed", seed}, {"outcomes", outcomes}}.dump(2) + "\n");
  return 0;
}

int evaluate_ablate(const std::string& config_path, const std::string& cases_path, const std::string& axis_name,
                    const std::vector<std::size_t>& top_ks, std::uint64_t seed, std::size_t workers,
                    const std::string& out_path, std::ostream& out) {
  const auto axis = parse_ablation_axis(axis_name);
  if (!axis) throw Error(ErrorCode::InvalidRequest, "unknown axis '" + axis_name + "' (topk or noanalyzer)");
  auto ctx = AppContext::open(load_app_config(config_path));
  const auto cases = load_cases(cases_path);
  check_gold(cases, ctx->corpus());
  auto settings = default_ablation_settings(*axis, ctx->config().engine);
  if (*axis == AblationAxis::TopK && !top_ks.empty()) {
    settings.clear();
    for (auto k : top_ks) {
      EngineConfig c = ctx->config().engine;
      c.retriever.top_k = k;
      settings.push_back({"top_k=" + std::to_string(k), c});
    }
  }
  const auto report = run_ablation(
      *axis, cases, ctx->engine(), settings,
      [&](const PatientCase& c, const std::string& sid) { return ctx->make_patient(c, sid); }, seed, workers);
  out << render_table(report);
  if (!out_path.empty()) write_text_file(out_path, to_json(report).dump(2) + "\n");
  return report.partial ? 1 : 0;
}

int evaluate_pairwise(const std::string& cases_path, const std::string& a_spec, const std::string& b_spec,
                      std::uint64_t seed, const std::string& out_dir, std::ostream& out) {
  const auto cases = load_cases(cases_path);
  const auto [a_label, a_dir] = split_labeled(a_spec);
  const auto [b_label, b_dir] = split_labeled(b_spec);
  if (a_label == b_label) throw Error(ErrorCode::InvalidRequest, "the two methods need different labels");
  for (const auto& c : cases) {
    const auto bundle = export_pairwise(c, {a_label, read_transcript(a_dir, c.case_id)},
                                        {b_label, read_transcript(b_dir, c.case_id)}, derive_seed(seed, c.case_id));
    write_pairwise(bundle, out_dir);
  }
  out << fmt::format("{} bundle(s) written to {}\n", cases.size(), out_dir);
  return 0;
}

int serve_cmd(const std::string& config_path, std::optional<int> port, std::ostream& out) {
  auto config = load_app_config(config_path);
  if (port) config.service.port = *port;
  auto ctx = AppContext::open(config);
  serve(*ctx, [&](int bound) { out << "listening on " << config.service.host << ":" << bound << std::endl; });
  return 0;
}

}  // namespace

int cli_dispatch(int argc, const char* const* argv, std::ostream& out, std::ostream& err, std::istream& in) {
  CLI::App app{"Multi-round diagnostic retrieval-augmented dialogue engine", "mrdrag"};
  app.require_subcommand(1);
  std::string log_level = "warn";
  app.add_option("--log-level", log_level, "trace|debug|info|warn|error|off");

  // corpus
  auto* corpus = app.add_subcommand("corpus", "Inspect and generate corpora");
  corpus->require_subcommand(1);
  std::string corpus_dir;
  auto* c_validate = corpus->add_subcommand("validate", "Load a corpus directory and report the first error");
  c_validate->add_option("dir", corpus_dir, "Corpus directory")->required();
  auto* c_stats = corpus->add_subcommand("stats", "Disease, node, triple and record counts");
  bool stats_json = false;
  c_stats->add_option("dir", corpus_dir, "Corpus directory")->required();
  c_stats->add_flag("--json", stats_json, "Print JSON");
  auto* c_fixture = corpus->add_subcommand("fixture", "Write the synthetic fixture corpus and its cases");
  std::string fixture_out, fixture_cases;
  std::uint64_t fixture_seed = 7;
  std::size_t fixture_diseases = 20, fixture_records = 3, fixture_cases_per = 1;
  c_fixture->add_option("--out", fixture_out, "Output corpus directory")->required();
  c_fixture->add_option("--seed", fixture_seed, "Seed");
  c_fixture->add_option("--diseases", fixture_diseases, "Number of diseases")->check(CLI::PositiveNumber);
  c_fixture->add_option("--records", fixture_records, "Records per disease");
  c_fixture->add_option("--cases", fixture_cases, "Also write patient cases to this JSONL file");
  c_fixture->add_option("--cases-per-disease", fixture_cases_per, "Cases per disease")->check(CLI::PositiveNumber);

  // index
  auto* index = app.add_subcommand("index", "Build and query the dual index");
  index->require_subcommand(1);
  Sources build_src, search_src;
  auto* i_build = index->add_subcommand("build", "Embed every diagnosis text and record");
  build_src.add_to(i_build, false);
  std::string build_out;
  std::size_t build_workers = 0;
  i_build->add_option("--out", build_out, "Index file to write");
  i_build->add_option("--workers", build_workers, "Embedding threads");
  auto* i_search = index->add_subcommand("search", "Top-k diseases for a query");
  search_src.add_to(i_search);
  std::string query, mode = "both";
  std::size_t k = 5;
  bool search_json = false;
  i_search->add_option("--query,-q", query, "Query text")->required();
  i_search->add_option("--k", k, "Number of diseases")->check(CLI::PositiveNumber);
  i_search->add_option("--mode", mode, "di|mr|both")->check(CLI::IsMember({"di", "mr", "both"}, CLI::ignore_case));
  i_search->add_flag("--json", search_json, "Print JSON");

  // dialogue
  std::string config_path;
  auto* chat_cmd = app.add_subcommand("chat", "Interactive consultation on the terminal");
  bool show_knowledge = false;
  chat_cmd->add_option("--config", config_path, "Configuration file")->required();
  chat_cmd->add_flag("--show-knowledge", show_knowledge, "Print retrieved diseases every round");

  auto* sim = app.add_subcommand("simulate", "Run simulated consultations and write transcripts");
  std::string cases_path, out_dir;
  std::vector<std::string> only_cases;
  sim->add_option("--config", config_path, "Configuration file")->required();
  sim->add_option("--cases", cases_path, "Patient cases (JSONL)")->required();
  sim->add_option("--out", out_dir, "Transcript directory")->required();
  sim->add_option("--case", only_cases, "Only these case ids");

  // evaluate
  auto* eval = app.add_subcommand("evaluate", "Retrieval metrics, judging, ablations, pairwise bundles");
  eval->require_subcommand(1);
  std::string out_path;
  std::uint64_t seed = 42;
  auto* e_retrieval = eval->add_subcommand("retrieval", "MRR and Hits@{1,3,10} of opening complaints");
  Sources retrieval_src;
  retrieval_src.add_to(e_retrieval);
  std::string retrieval_mode = "all";
  std::size_t max_rank = kDefaultMaxRank;
  e_retrieval->add_option("--cases", cases_path, "Patient cases (JSONL)")->required();
  e_retrieval->add_option("--mode", retrieval_mode, "di|mr|both|all")
      ->check(CLI::IsMember({"di", "mr", "both", "all"}, CLI::ignore_case));
  e_retrieval->add_option("--max-rank", max_rank, "Rank cap for MRR")->check(CLI::PositiveNumber);
  e_retrieval->add_option("--out", out_path, "JSON report file");

  auto* e_judge = eval->add_subcommand("judge", "Score transcripts of several methods with the judge model");
  std::vector<std::string> labeled;
  e_judge->add_option("--config", config_path, "Configuration file")->required();
  e_judge->add_option("--cases", cases_path, "Patient cases (JSONL)")->required();
  e_judge->add_option("--transcripts", labeled, "label=directory, repeatable")->required();
  e_judge->add_option("--seed", seed, "Presentation-order seed");
  e_judge->add_option("--out", out_path, "JSON report file");

  auto* e_ablate = eval->add_subcommand("ablate", "Top-k sweep or analyzer ablation");
  std::string axis = "topk";
  std::vector<std::size_t> top_ks;
  std::size_t workers = 1;
  e_ablate->add_option("--config", config_path, "Configuration file")->required();
  e_ablate->add_option("--cases", cases_path, "Patient cases (JSONL)")->required();
  e_ablate->add_option("--axis", axis, "topk|noanalyzer");
  e_ablate->add_option("--top-k", top_ks, "TopK settings (default 1 3 5 7 9)");
  e_ablate->add_option("--seed", seed, "Judge seed");
  e_ablate->add_option("--workers", workers, "Cases run in parallel")->check(CLI::PositiveNumber);
  e_ablate->add_option("--out", out_path, "JSON report file");

  auto* e_pair = eval->add_subcommand("pairwise", "Blind two-method bundles for human review");
  std::string a_spec, b_spec;
  e_pair->add_option("--cases", cases_path, "Patient cases (JSONL)")->required();
  e_pair->add_option("--a", a_spec, "label=directory")->required();
  e_pair->add_option("--b", b_spec, "label=directory")->required();
  e_pair->add_option("--seed", seed, "Label-assignment seed");
  e_pair->add_option("--out", out_dir, "Bundle directory")->required();

  auto* serve_sub = app.add_subcommand("serve", "HTTP session service");
  std::optional<int> port;
  serve_sub->add_option("--config", config_path, "Configuration file")->required();
  serve_sub->add_option("--port", port, "Port (0 picks a free one)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp& e) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n" << app.help();
    return 2;
  }

  spdlog::set_level(spdlog::level::from_str(log_level));
  try {
    if (c_validate->parsed()) return corpus_validate(corpus_dir, out);
    if (c_stats->parsed()) return corpus_stats_cmd(corpus_dir, stats_json, out);
    if (c_fixture->parsed()) {
      write_corpus(generate_fixture(fixture_seed, fixture_diseases, fixture_records), fixture_out);
      out << fmt::format("wrote {} diseases to {}\n", fixture_diseases, fixture_out);
      if (!fixture_cases.empty()) {
        write_cases(generate_fixture_cases(fixture_seed, fixture_diseases, fixture_cases_per), fixture_cases);
        out << fmt::format("wrote {} cases to {}\n", fixture_diseases * fixture_cases_per, fixture_cases);
      }
      return 0;
    }
    if (i_build->parsed()) return index_build(build_src, build_out, build_workers, out);
    if (i_search->parsed()) return index_search(search_src, query, k, mode, search_json, out);
    if (chat_cmd->parsed()) return chat(config_path, show_knowledge, out, in);
    if (sim->parsed()) return simulate(config_path, cases_path, only_cases, out_dir, out);
    if (e_retrieval->parsed()) {
      return evaluate_retrieval(retrieval_src, cases_path, retrieval_mode, max_rank, out_path, out);
    }
    if (e_judge->parsed()) return evaluate_judge(config_path, cases_path, labeled, seed, out_path, out);
    if (e_ablate->parsed()) {
      return evaluate_ablate(config_path, cases_path, axis, top_ks, seed, workers, out_path, out);
    }
    if (e_pair->parsed()) return evaluate_pairwise(cases_path, a_spec, b_spec, seed, out_dir, out);
    if (serve_sub->parsed()) return serve_cmd(config_path, port, out);
  } catch (const CorpusError& e) {
    err << "error: " << error_wire_code(e.code()) << ": " << e.file() << ":" << e.line() << ": " << e.reason() << "\n";
    return 1;
  } catch (const Error& e) {
    err << "error: " << error_wire_code(e.code()) << ": " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  err << app.help();
  return 2;
}

}  // namespace mrdrag
