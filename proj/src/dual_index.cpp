#include "mrdrag/dual_index.hpp"

#include <algorithm>
#include <atomic>
#include <bit>
#include <cmath>
#include <cstring>
#include <mutex>
#include <thread>
#include <unordered_map>

#include "mrdrag/util.hpp"

static_assert(std::endian::native == std::endian::little, "index serialization assumes a little-endian host");

namespace mrdrag {

std::string_view to_string(IndexSource s) { return s == IndexSource::DI ? "DI" : "MR"; }

std::string_view to_string(IndexMode m) {
  switch (m) {
    case IndexMode::DI: return "DI";
    case IndexMode::MR: return "MR";
    case IndexMode::Both: return "Both";
  }
  return "?";
}

std::optional<IndexMode> parse_index_mode(std::string_view s) {
  const auto lower = to_lower_ascii(s);
  if (lower == "di") return IndexMode::DI;
  if (lower == "mr") return IndexMode::MR;
  if (lower == "both") return IndexMode::Both;
  return std::nullopt;
}

std::optional<IndexSource> parse_index_source(std::string_view s) {
  const auto lower = to_lower_ascii(s);
  if (lower == "di") return IndexSource::DI;
  if (lower == "mr") return IndexSource::MR;
  return std::nullopt;
}

namespace {

bool entry_less(const IndexEntry& a, const IndexEntry& b) {
  return std::tie(a.disease_id, a.source_record_id) < std::tie(b.disease_id, b.source_record_id);
}

void check_entry(const IndexEntry& e, std::size_t dim, IndexSource expected) {
  auto bad = [&](const std::string& why) {
    throw Error(ErrorCode::CorruptIndex, "index entry " + e.disease_id + "/" + e.source_record_id + ": " + why);
  };
  if (e.source != expected) bad("entry is in the wrong index");
  if (e.disease_id.empty()) bad("empty disease_id");
  if (expected == IndexSource::DI && !e.source_record_id.empty()) bad("DI entry carries a record id");
  if (expected == IndexSource::MR && e.source_record_id.empty()) bad("MR entry lacks a record id");
  if (e.vector.size() != dim) {
    throw Error(ErrorCode::DimensionMismatch, "entry " + e.disease_id + " has dim " +
                                                  std::to_string(e.vector.size()) + ", index dim " +
                                                  std::to_string(dim));
  }
  double norm_sq = 0.0;
  for (float x : e.vector) {
    if (!std::isfinite(x)) bad("non-finite component");
    norm_sq += static_cast<double>(x) * x;
  }
  if (std::abs(std::sqrt(norm_sq) - 1.0) > 1e-6) bad("vector is not unit norm");
}

}  // namespace

DualIndex::DualIndex(std::size_t dim, std::string corpus_fingerprint, std::vector<IndexEntry> di_entries,
                     std::vector<IndexEntry> mr_entries)
    : dim_(dim), fingerprint_(std::move(corpus_fingerprint)), di_(std::move(di_entries)), mr_(std::move(mr_entries)) {
  if (dim_ == 0) throw Error(ErrorCode::CorruptIndex, "index dim must be positive");
  for (const auto& e : di_) check_entry(e, dim_, IndexSource::DI);
  for (const auto& e : mr_) check_entry(e, dim_, IndexSource::MR);
  std::sort(di_.begin(), di_.end(), entry_less);
  std::sort(mr_.begin(), mr_.end(), entry_less);
  for (std::size_t i = 1; i < di_.size(); ++i) {
    if (di_[i].disease_id == di_[i - 1].disease_id) {
      throw Error(ErrorCode::CorruptIndex, "disease " + di_[i].disease_id + " has two DI entries");
    }
  }
  for (std::size_t i = 1; i < mr_.size(); ++i) {
    if (mr_[i].source_record_id == mr_[i - 1].source_record_id && mr_[i].disease_id == mr_[i - 1].disease_id) {
      throw Error(ErrorCode::CorruptIndex, "record " + mr_[i].source_record_id + " indexed twice");
    }
  }
  for (const auto& e : mr_) {
    if (!std::binary_search(di_.begin(), di_.end(), IndexEntry{e.disease_id, IndexSource::DI, "", {}}, entry_less)) {
      throw Error(ErrorCode::CorruptIndex, "MR entry " + e.source_record_id + " references a disease absent from DI");
    }
  }
}

std::vector<RetrievalHit> DualIndex::search(std::span<const double> query, std::size_t k, IndexMode mode) const {
  if (query.size() != dim_) {
    throw Error(ErrorCode::DimensionMismatch,
                "query dim " + std::to_string(query.size()) + " vs index dim " + std::to_string(dim_));
  }
  if (k == 0) return {};

  struct Best {
    double score;
    IndexSource source;
  };
  std::unordered_map<std::string_view, Best> best;
  best.reserve(di_.size());
  auto scan = [&](const std::vector<IndexEntry>& entries) {
    for (const auto& e : entries) {
      const double score = cosine_similarity(query, std::span<const float>(e.vector));
      auto [it, inserted] = best.try_emplace(e.disease_id, Best{score, e.source});
      if (!inserted && score > it->second.score) it->second = Best{score, e.source};
    }
  };
  if (mode != IndexMode::MR) scan(di_);
  if (mode != IndexMode::DI) scan(mr_);

  std::vector<RetrievalHit> hits;
  hits.reserve(best.size());
  for (const auto& [id, b] : best) hits.push_back(RetrievalHit{std::string(id), b.score, b.source, 0});
  const auto by_rank = [](const RetrievalHit& a, const RetrievalHit& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.disease_id < b.disease_id;
  };
  const std::size_t keep = std::min(k, hits.size());
  std::partial_sort(hits.begin(), hits.begin() + static_cast<std::ptrdiff_t>(keep), hits.end(), by_rank);
  hits.resize(keep);
  for (std::size_t i = 0; i < hits.size(); ++i) hits[i].rank = i + 1;
  return hits;
}

void DualIndex::verify_against(const Corpus& corpus) const {
  const auto fp = corpus.fingerprint();
  if (fp != fingerprint_) {
    throw Error(ErrorCode::FingerprintMismatch,
                "index was built from corpus " + fingerprint_.substr(0, 12) + ", got " + fp.substr(0, 12));
  }
}

// ---------------------------------------------------------------------------
// build

DualIndex build_index(const Corpus& corpus, const Embedder& embedder, std::size_t workers) {
  if (corpus.empty()) throw Error(ErrorCode::EmptyCorpus, "cannot index an empty corpus");

  struct Job {
    const std::string* text;
    IndexEntry entry;
  };
  std::vector<Job> jobs;
  for (const auto& d : corpus.diseases()) {
    jobs.push_back({&d.diagnosis_text, IndexEntry{d.disease_id, IndexSource::DI, "", {}}});
    for (const auto& r : d.records) {
      jobs.push_back({&r.narrative, IndexEntry{d.disease_id, IndexSource::MR, r.record_id, {}}});
    }
  }

  std::atomic<std::size_t> next{0};
  std::atomic<bool> failed{false};
  std::string failure;
  std::mutex failure_mu;
  auto worker = [&] {
    for (std::size_t i = next++; i < jobs.size() && !failed; i = next++) {
      auto& job = jobs[i];
      try {
        auto v = embedder.embed(*job.text).values;
        if (v.size() != embedder.dim()) {
          throw Error(ErrorCode::DimensionMismatch, "embedder returned dim " + std::to_string(v.size()));
        }
        l2_normalize(v);
        job.entry.vector.assign(v.begin(), v.end());
      } catch (const std::exception& e) {
        std::lock_guard lock(failure_mu);
        if (!failed.exchange(true)) {
          const auto& id = job.entry.source == IndexSource::DI ? job.entry.disease_id : job.entry.source_record_id;
          failure = id + ": " + e.what();
        }
      }
    }
  };
  const std::size_t n_threads = std::clamp<std::size_t>(workers, 1, jobs.size());
  if (n_threads == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < n_threads; ++t) pool.emplace_back(worker);
  }
  if (failed) throw Error(ErrorCode::EmbeddingFailed, "embedding failed for " + failure);

  std::vector<IndexEntry> di, mr;
  for (auto& job : jobs) (job.entry.source == IndexSource::DI ? di : mr).push_back(std::move(job.entry));
  return DualIndex(embedder.dim(), corpus.fingerprint(), std::move(di), std::move(mr));
}

// ---------------------------------------------------------------------------
// persistence

namespace {

constexpr std::string_view kMagic = "MRDIDX01";
constexpr std::size_t kChecksumSize = 32;

void put_u32(std::string& out, std::uint32_t v) {
  char buf[4];
  std::memcpy(buf, &v, 4);
  out.append(buf, 4);
}

void put_str(std::string& out, std::string_view s) {
  put_u32(out, static_cast<std::uint32_t>(s.size()));
  out.append(s);
}

class Reader {
 public:
  explicit Reader(std::string_view bytes) : bytes_(bytes) {}

  std::string_view take(std::size_t n) {
    if (n > bytes_.size() - pos_) throw Error(ErrorCode::CorruptIndex, "index file truncated");
    auto out = bytes_.substr(pos_, n);
    pos_ += n;
    return out;
  }
  std::uint32_t u32() {
    std::uint32_t v;
    std::memcpy(&v, take(4).data(), 4);
    return v;
  }
  std::string str() { return std::string(take(u32())); }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  std::string_view bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string serialize_index(const DualIndex& index) {
  std::string out(kMagic);
  put_u32(out, static_cast<std::uint32_t>(index.dim()));
  put_u32(out, static_cast<std::uint32_t>(index.di_entries().size()));
  put_u32(out, static_cast<std::uint32_t>(index.mr_entries().size()));
  put_str(out, index.corpus_fingerprint());
  auto put_entries = [&](std::span<const IndexEntry> entries) {
    for (const auto& e : entries) {
      put_str(out, e.disease_id);
      out.push_back(static_cast<char>(e.source == IndexSource::DI ? 0 : 1));
      put_str(out, e.source_record_id);
      out.append(reinterpret_cast<const char*>(e.vector.data()), e.vector.size() * sizeof(float));
    }
  };
  put_entries(index.di_entries());
  put_entries(index.mr_entries());
  out += sha256_raw(out);
  return out;
}

DualIndex deserialize_index(std::string_view bytes) {
  if (bytes.size() < kMagic.size() + kChecksumSize) throw Error(ErrorCode::CorruptIndex, "index file truncated");
  const auto body = bytes.substr(0, bytes.size() - kChecksumSize);
  if (sha256_raw(body) != bytes.substr(body.size())) {
    throw Error(ErrorCode::CorruptIndex, "index checksum mismatch (truncated or modified file)");
  }
  Reader in(body);
  if (in.take(kMagic.size()) != kMagic) throw Error(ErrorCode::CorruptIndex, "not an index file");
  const std::size_t dim = in.u32();
  const std::size_t n_di = in.u32();
  const std::size_t n_mr = in.u32();
  std::string fingerprint = in.str();
  auto read_entries = [&](std::size_t n) {
    std::vector<IndexEntry> entries;
    for (std::size_t i = 0; i < n; ++i) {
      IndexEntry e;
      e.disease_id = in.str();
      const char src = in.take(1)[0];
      if (src != 0 && src != 1) throw Error(ErrorCode::CorruptIndex, "bad entry source tag");
      e.source = src == 0 ? IndexSource::DI : IndexSource::MR;
      e.source_record_id = in.str();
      const auto raw = in.take(dim * sizeof(float));
      e.vector.resize(dim);
      std::memcpy(e.vector.data(), raw.data(), raw.size());
      entries.push_back(std::move(e));
    }
    return entries;
  };
  auto di = read_entries(n_di);
  auto mr = read_entries(n_mr);
  if (!in.done()) throw Error(ErrorCode::CorruptIndex, "trailing bytes in index file");
  try {
    return DualIndex(dim, std::move(fingerprint), std::move(di), std::move(mr));
  } catch (const Error& e) {
    throw Error(ErrorCode::CorruptIndex, e.what());
  }
}

void save_index(const DualIndex& index, const std::filesystem::path& path) {
  write_text_file(path.string(), serialize_index(index));
}

DualIndex load_index(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw Error(ErrorCode::MissingFile, "no index file at " + path.string());
  std::string bytes;
  try {
    bytes = read_text_file(path.string());
  } catch (const Error&) {
    throw Error(ErrorCode::CorruptIndex, "cannot read index file " + path.string());
  }
  return deserialize_index(bytes);
}

DualIndex load_index(const std::filesystem::path& path, const Corpus& corpus) {
  auto index = load_index(path);
  index.verify_against(corpus);
  return index;
}

}  // namespace mrdrag
