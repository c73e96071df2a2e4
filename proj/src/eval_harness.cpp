#include "mrdrag/eval_harness.hpp"

#include <algorithm>
#include <atomic>
#include <regex>
#include <set>
#include <thread>

#include <spdlog/fmt/fmt.h>
#include <spdlog/spdlog.h>

#include "mrdrag/error.hpp"
#include "mrdrag/util.hpp"

namespace mrdrag {

using nlohmann::json;

RetrievalMetrics metrics_from_ranks(std::span<const std::optional<std::size_t>> ranks, std::size_t max_rank) {
  RetrievalMetrics m;
  m.query_count = ranks.size();
  for (auto n : kHitsCutoffs) m.hits_at[n] = 0.0;
  if (ranks.empty()) return m;
  double rr_sum = 0.0;
  std::map<std::size_t, std::size_t> hits;
  for (const auto& r : ranks) {
    if (!r || *r == 0 || *r > max_rank) continue;
    rr_sum += 1.0 / static_cast<double>(*r);
    for (auto n : kHitsCutoffs) {
      if (*r <= n) ++hits[n];
    }
  }
  const auto total = static_cast<double>(ranks.size());
  m.mrr = rr_sum / total;
  for (auto n : kHitsCutoffs) m.hits_at[n] = static_cast<double>(hits[n]) / total;
  return m;
}

RetrievalMetrics retrieval_metrics(std::span<const RetrievalQuery> queries, const DualIndex& index, IndexMode mode,
                                   const Embedder& embedder, std::size_t max_rank) {
  std::set<std::string_view> known;
  for (const auto& e : index.di_entries()) known.insert(e.disease_id);
  for (const auto& e : index.mr_entries()) known.insert(e.disease_id);
  for (const auto& q : queries) {
    if (!known.contains(q.gold_disease_id)) {
      throw Error(ErrorCode::UnresolvableGold, "gold disease '" + q.gold_disease_id + "' is not indexed");
    }
  }
  std::vector<std::optional<std::size_t>> ranks;
  ranks.reserve(queries.size());
  for (const auto& q : queries) {
    const auto vec = embedder.embed(q.query);
    const auto hits = index.search(vec.values, max_rank, mode);
    std::optional<std::size_t> rank;
    for (const auto& h : hits) {
      if (h.disease_id == q.gold_disease_id) {
        rank = h.rank;
        break;
      }
    }
    ranks.push_back(rank);
  }
  return metrics_from_ranks(ranks, max_rank);
}

std::vector<RetrievalQuery> opening_queries(std::span<const PatientCase> cases) {
  std::vector<RetrievalQuery> out;
  for (const auto& c : cases) {
    if (c.scripted_replies.empty()) {
      throw Error(ErrorCode::InvalidRequest, "case " + c.case_id + " has no scripted opening complaint");
    }
    out.push_back({c.scripted_replies.front(), c.gold_disease_id});
  }
  return out;
}

// ---------------------------------------------------------------------------

std::optional<int> JudgeOutcome::score_for(std::string_view method_label) const {
  for (const auto& s : scores) {
    if (s.method_label == method_label) return s.score;
  }
  return std::nullopt;
}

std::optional<std::map<std::size_t, int>> parse_judge_output(std::string_view text) {
  static const std::regex pattern(R"(dialogue\s*(\d+)\s*:\s*(\d+))", std::regex::icase);
  std::map<std::size_t, int> scores;
  const std::string s(text);
  for (auto it = std::sregex_iterator(s.begin(), s.end(), pattern); it != std::sregex_iterator(); ++it) {
    const auto index = std::stoul((*it)[1].str());
    const auto digits = (*it)[2].str();
    if (digits.size() != 1) return std::nullopt;
    const int score = digits[0] - '0';
    if (score < 1 || score > 5) return std::nullopt;
    auto [pos, inserted] = scores.emplace(index, score);
    if (!inserted && pos->second != score) return std::nullopt;
  }
  return scores;
}

JudgeOutcome judge_transcripts(const PatientCase& patient_case, std::span<const LabeledTranscript> transcripts,
                               LlmGateway& gateway, const PromptLibrary& prompts, std::uint64_t seed) {
  if (transcripts.empty()) throw Error(ErrorCode::InvalidRequest, "nothing to judge");
  for (const auto& t : transcripts) {
    const auto& ref = t.transcript.session.case_ref;
    if (ref && ref->case_id != patient_case.case_id) {
      throw Error(ErrorCode::InvalidRequest,
                  "transcript '" + t.method_label + "' belongs to case " + ref->case_id + ", not " + patient_case.case_id);
    }
  }

  JudgeOutcome out;
  out.case_id = patient_case.case_id;
  out.seed = seed;
  const auto order = seeded_permutation(transcripts.size(), seed);
  std::string dialogues;
  for (std::size_t i = 0; i < order.size(); ++i) {
    const auto& t = transcripts[order[i]];
    out.presentation_order.push_back(t.method_label);
    if (i) dialogues += "\n";
    dialogues += "Dialogue " + std::to_string(i + 1) + ":\n" + render_history(t.transcript.session.turns) + "\n";
  }

  auto messages = prompts.get("judge").render({{"case_info", patient_case.case_info}, {"dialogues", dialogues}});
  try {
    out.raw_output = gateway.chat(Purpose::Judge, std::move(messages), "judge-" + patient_case.case_id);
  } catch (const Error& e) {
    out.error = std::string(error_wire_code(e.code())) + ": " + e.what();
    return out;
  }

  const auto parsed = parse_judge_output(out.raw_output);
  if (!parsed) {
    out.error = "judge output has an out-of-range or conflicting score";
    return out;
  }
  const std::string model = gateway.config().at(Purpose::Judge).model_name;
  for (std::size_t i = 0; i < order.size(); ++i) {
    auto it = parsed->find(i + 1);
    if (it == parsed->end()) {
      out.scores.clear();
      out.error = "judge output has no score for dialogue " + std::to_string(i + 1);
      return out;
    }
    out.scores.push_back({out.presentation_order[i], it->second, patient_case.case_id, model, i + 1});
  }
  out.scored = true;
  return out;
}

// ---------------------------------------------------------------------------

PairwiseBundle export_pairwise(const PatientCase& patient_case, const LabeledTranscript& a,
                               const LabeledTranscript& b, std::uint64_t seed) {
  const auto order = seeded_permutation(2, seed);
  const LabeledTranscript* slots[2] = {order[0] == 0 ? &a : &b, order[0] == 0 ? &b : &a};
  PairwiseBundle out;
  out.case_id = patient_case.case_id;
  out.bundle_text = "Case: " + patient_case.case_id + "\n\nPatient information:\n" + patient_case.case_info + "\n";
  for (int i = 0; i < 2; ++i) {
    out.bundle_text += "\nResponse " + std::to_string(i + 1) + ":\n" + render_history(slots[i]->transcript.session.turns) + "\n";
  }
  out.bundle_text += "\nWhich response reaches the better diagnosis? Answer 1 or 2.\n";
  out.key = {{"case_id", patient_case.case_id},
             {"seed", seed},
             {"Response 1", slots[0]->method_label},
             {"Response 2", slots[1]->method_label}};
  return out;
}

void write_pairwise(const PairwiseBundle& bundle, const std::filesystem::path& dir) {
  write_text_file((dir / (bundle.case_id + ".bundle.txt")).string(), bundle.bundle_text);
  write_text_file((dir / (bundle.case_id + ".key.json")).string(), bundle.key.dump(2) + "\n");
}

std::map<std::string, std::string> invert_pairwise_key(const json& key) {
  std::map<std::string, std::string> out;
  for (const char* label : {"Response 1", "Response 2"}) out[key.at(label).get<std::string>()] = label;
  return out;
}

// ---------------------------------------------------------------------------

std::string_view to_string(AblationAxis a) { return a == AblationAxis::TopK ? "TopK" : "NoAnalyzer"; }

std::optional<AblationAxis> parse_ablation_axis(std::string_view s) {
  const auto lower = to_lower_ascii(s);
  if (lower == "topk" || lower == "top-k" || lower == "top_k") return AblationAxis::TopK;
  if (lower == "noanalyzer" || lower == "no-analyzer" || lower == "no_analyzer") return AblationAxis::NoAnalyzer;
  return std::nullopt;
}

std::vector<AblationSetting> default_ablation_settings(AblationAxis axis, const EngineConfig& base) {
  std::vector<AblationSetting> out;
  if (axis == AblationAxis::TopK) {
    for (std::size_t k : {1, 3, 5, 7, 9}) {
      EngineConfig c = base;
      c.retriever.top_k = k;
      out.push_back({"top_k=" + std::to_string(k), c});
    }
  } else {
    EngineConfig on = base;
    on.analyzer_enabled = true;
    EngineConfig off = base;
    off.analyzer_enabled = false;
    out.push_back({"analyzer=on", on});
    out.push_back({"analyzer=off", off});
  }
  return out;
}

namespace {

template <typename Fn>
void parallel_for(std::size_t n, std::size_t workers, Fn&& fn) {
  if (workers <= 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::jthread> pool;
  for (std::size_t w = 0; w < std::min(workers, n); ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) fn(i);
    });
  }
}

}  // namespace

AblationReport run_ablation(AblationAxis axis, std::span<const PatientCase> cases, DialogueEngine& engine,
                            std::span<const AblationSetting> settings, const PatientFactory& make_patient,
                            std::uint64_t seed, std::size_t workers) {
  if (settings.empty()) throw Error(ErrorCode::ConfigError, "ablation needs at least one setting");
  std::set<std::string> labels;
  for (const auto& s : settings) {
    if (!labels.insert(s.label).second) throw Error(ErrorCode::ConfigError, "duplicate setting '" + s.label + "'");
  }

  std::vector<const PatientCase*> ordered;
  for (const auto& c : cases) ordered.push_back(&c);
  std::sort(ordered.begin(), ordered.end(), [](auto* a, auto* b) { return a->case_id < b->case_id; });

  AblationReport report;
  report.axis = axis;
  report.seed = seed;
  // transcripts[setting][case]
  std::vector<std::vector<Transcript>> transcripts(settings.size(), std::vector<Transcript>(ordered.size()));
  for (std::size_t s = 0; s < settings.size(); ++s) {
    const auto& setting = settings[s];
    parallel_for(ordered.size(), workers, [&](std::size_t c) {
      const auto& pc = *ordered[c];
      const std::string sid = "ablate-" + setting.label + "-" + pc.case_id;
      auto patient = make_patient(pc, sid);
      transcripts[s][c] = run_dialogue(pc, engine, *patient, setting.config, sid);
    });

    AblationRow row;
    row.setting = setting.label;
    row.case_count = ordered.size();
    for (std::size_t c = 0; c < ordered.size(); ++c) {
      const auto& t = transcripts[s][c];
      if (!t.error.empty()) {
        ++row.failed_dialogues;
        report.partial = true;
        report.problems.push_back(setting.label + "/" + ordered[c]->case_id + ": " + t.error);
      }
      for (const auto& [purpose, n] : engine.gateway().call_counts(t.session.session_id)) row.calls[purpose] += n;
    }
    report.rows.push_back(std::move(row));
  }

  report.judgements.resize(ordered.size());
  parallel_for(ordered.size(), workers, [&](std::size_t c) {
    std::vector<LabeledTranscript> labeled;
    for (std::size_t s = 0; s < settings.size(); ++s) labeled.push_back({settings[s].label, transcripts[s][c]});
    const auto& pc = *ordered[c];
    report.judgements[c] =
        judge_transcripts(pc, labeled, engine.gateway(), engine.prompts(), derive_seed(seed, pc.case_id));
  });

  std::vector<double> sums(settings.size(), 0.0);
  for (const auto& j : report.judgements) {
    if (!j.scored) {
      report.partial = true;
      report.problems.push_back(j.case_id + ": unscored (" + j.error + ")");
      continue;
    }
    for (std::size_t s = 0; s < settings.size(); ++s) {
      if (auto score = j.score_for(settings[s].label)) {
        sums[s] += *score;
        ++report.rows[s].scored_count;
      }
    }
  }
  for (std::size_t s = 0; s < settings.size(); ++s) {
    auto& row = report.rows[s];
    row.mean_score = row.scored_count ? sums[s] / static_cast<double>(row.scored_count) : 0.0;
  }
  if (report.partial) spdlog::warn("ablation {} is partial: {} problem(s)", to_string(axis), report.problems.size());
  return report;
}

// ---------------------------------------------------------------------------

json to_json(const RetrievalMetrics& m) {
  json hits = json::object();
  for (const auto& [n, v] : m.hits_at) hits[std::to_string(n)] = v;
  return {{"mrr", m.mrr}, {"hits_at", hits}, {"query_count", m.query_count}};
}

json to_json(const JudgeOutcome& o) {
  json scores = json::array();
  for (const auto& s : o.scores) {
    scores.push_back({{"method_label", s.method_label},
                      {"score", s.score},
                      {"case_id", s.case_id},
                      {"judge_model", s.judge_model},
                      {"presentation_position", s.presentation_position}});
  }
  return {{"case_id", o.case_id},     {"seed", o.seed},          {"presentation_order", o.presentation_order},
          {"scored", o.scored},       {"scores", scores},        {"raw_output", o.raw_output},
          {"error", o.error}};
}

json to_json(const AblationReport& r) {
  json rows = json::array();
  for (const auto& row : r.rows) {
    json calls = json::object();
    for (auto p : kAllPurposes) {
      auto it = row.calls.find(p);
      calls[std::string(to_string(p))] = it == row.calls.end() ? 0 : it->second;
    }
    rows.push_back({{"setting", row.setting},
                    {"mean_score", row.mean_score},
                    {"case_count", row.case_count},
                    {"scored_count", row.scored_count},
                    {"failed_dialogues", row.failed_dialogues},
                    {"calls", calls}});
  }
  json judgements = json::array();
  for (const auto& j : r.judgements) judgements.push_back(to_json(j));
  return {{"axis", to_string(r.axis)}, {"seed", r.seed},       {"rows", rows},
          {"partial", r.partial},      {"problems", r.problems}, {"judgements", judgements}};
}

std::string render_table(const RetrievalMetrics& m, std::string_view title) {
  std::string out = fmt::format("{:<12} {:>8} {:>8} {:>8} {:>8} {:>8}\n", "index", "queries", "MRR", "Hits@1",
                                "Hits@3", "Hits@10");
  out += fmt::format("{:<12} {:>8} {:>8.4f} {:>8.4f} {:>8.4f} {:>8.4f}\n", title, m.query_count, m.mrr,
                     m.hits_at.at(1), m.hits_at.at(3), m.hits_at.at(10));
  return out;
}

std::string render_table(const AblationReport& r) {
  std::string out = fmt::format("Ablation: {}{}\n", to_string(r.axis), r.partial ? " (partial)" : "");
  out += fmt::format("{:<16} {:>10} {:>6} {:>7} {:>9}\n", "setting", "mean", "cases", "scored", "analyzer");
  for (const auto& row : r.rows) {
    auto it = row.calls.find(Purpose::Analyzer);
    out += fmt::format("{:<16} {:>10.3f} {:>6} {:>7} {:>9}\n", row.setting, row.mean_score, row.case_count,
                       row.scored_count, it == row.calls.end() ? 0 : it->second);
  }
  return out;
}

}  // namespace mrdrag
