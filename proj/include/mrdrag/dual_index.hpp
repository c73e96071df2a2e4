#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "mrdrag/embedding.hpp"
#include "mrdrag/kg_store.hpp"

namespace mrdrag {

/// Which representation an index entry embeds: the clinical diagnosis text
/// (DI) or a patient-style medical record (MR).
enum class IndexSource { DI, MR };
enum class IndexMode { DI, MR, Both };

std::string_view to_string(IndexSource s);
std::string_view to_string(IndexMode m);
/// Accepts "di", "mr", "both" in any case.
std::optional<IndexMode> parse_index_mode(std::string_view s);
std::optional<IndexSource> parse_index_source(std::string_view s);

struct IndexEntry {
  std::string disease_id;
  IndexSource source = IndexSource::DI;
  std::string source_record_id;  // empty for DI entries
  std::vector<float> vector;     // unit norm

  bool operator==(const IndexEntry&) const = default;
};

struct RetrievalHit {
  std::string disease_id;
  double score = 0.0;
  IndexSource source = IndexSource::DI;
  std::size_t rank = 0;  // 1-based

  bool operator==(const RetrievalHit&) const = default;
};

/// Two exact (linear-scan) vector indexes over one corpus. Immutable once
/// built; entries are kept in canonical order (DI by disease id, MR by
/// disease id then record id) so serialization is order-independent.
class DualIndex {
 public:
  DualIndex(std::size_t dim, std::string corpus_fingerprint, std::vector<IndexEntry> di_entries,
            std::vector<IndexEntry> mr_entries);

  std::span<const IndexEntry> di_entries() const noexcept { return di_; }
  std::span<const IndexEntry> mr_entries() const noexcept { return mr_; }
  std::size_t dim() const noexcept { return dim_; }
  const std::string& corpus_fingerprint() const noexcept { return fingerprint_; }

  /// Exact top-k. Scores are cosine similarities accumulated in double.
  /// Each disease keeps only its best entry; within one disease an equal
  /// score keeps the entry scanned first (DI before MR, MR by record id).
  /// Results are ordered by score descending, then disease_id ascending.
  std::vector<RetrievalHit> search(std::span<const double> query, std::size_t k, IndexMode mode) const;

  /// Throws FingerprintMismatch unless this index was built from `corpus`.
  void verify_against(const Corpus& corpus) const;

  bool operator==(const DualIndex&) const = default;

 private:
  std::size_t dim_;
  std::string fingerprint_;
  std::vector<IndexEntry> di_;
  std::vector<IndexEntry> mr_;
};

/// One DI entry per disease (diagnosis_text) and one MR entry per record
/// (narrative). `workers` > 1 embeds concurrently; output does not depend on
/// it. Throws EmptyCorpus or EmbeddingFailed naming the failing id.
DualIndex build_index(const Corpus& corpus, const Embedder& embedder, std::size_t workers = 1);

/// Binary layout, little-endian:
///   "MRDIDX01" | u32 dim | u32 n_di | u32 n_mr | u32 len + fingerprint
///   entries: u32 len + disease_id | u8 source | u32 len + record_id | dim x f32
///   32-byte SHA-256 of every preceding byte
std::string serialize_index(const DualIndex& index);
DualIndex deserialize_index(std::string_view bytes);

void save_index(const DualIndex& index, const std::filesystem::path& path);
/// Throws CorruptIndex on truncation, bad magic or checksum.
DualIndex load_index(const std::filesystem::path& path);
/// As above, then verify_against(corpus).
DualIndex load_index(const std::filesystem::path& path, const Corpus& corpus);

}  // namespace mrdrag
