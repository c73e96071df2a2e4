#pragma once

#include <chrono>
#include <cmath>
#include <cstddef>
#include <memory>
#include <semaphore>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "mrdrag/error.hpp"

namespace mrdrag {

struct EmbeddingVector {
  std::vector<double> values;

  std::size_t dim() const noexcept { return values.size(); }
  std::span<const double> view() const noexcept { return values; }
  bool operator==(const EmbeddingVector&) const = default;
};

enum class EmbedderBackend { RemoteAPI, DeterministicTest };

inline constexpr std::string_view kDefaultEmbeddingModel = "text-embedding-3-small";

struct EmbedderSpec {
  EmbedderBackend backend = EmbedderBackend::DeterministicTest;
  std::string model_name = std::string(kDefaultEmbeddingModel);
  std::size_t dim = 256;
};

/// Connection settings shared by the remote embedding and chat clients.
struct RemoteEndpoint {
  std::string base_url = "https://api.openai.com/v1";
  std::string api_key;
  int max_in_flight = 4;
  int attempts = 3;
  std::chrono::milliseconds initial_backoff{500};
  std::chrono::seconds timeout{60};
};

class Embedder {
 public:
  virtual ~Embedder() = default;

  /// Throws Error(EmptyText) when text is blank after trimming.
  virtual EmbeddingVector embed(std::string_view text) const = 0;
  virtual std::size_t dim() const noexcept = 0;
  virtual std::string describe() const = 0;
};

/// Character-trigram hashing embedder. The text is lower-cased, runs of
/// whitespace collapse to one space and the result is padded with a space on
/// each side; every trigram of that string adds 1 to bucket
/// fnv1a64(trigram) % dim. The count vector is L2-normalized. Word order
/// therefore matters only through trigrams spanning word boundaries.
class TrigramEmbedder final : public Embedder {
 public:
  explicit TrigramEmbedder(std::size_t dim);

  EmbeddingVector embed(std::string_view text) const override;
  std::size_t dim() const noexcept override { return dim_; }
  std::string describe() const override;

 private:
  std::size_t dim_;
};

/// OpenAI-compatible POST {base_url}/embeddings client.
class RemoteEmbedder final : public Embedder {
 public:
  RemoteEmbedder(EmbedderSpec spec, RemoteEndpoint endpoint);

  EmbeddingVector embed(std::string_view text) const override;
  std::size_t dim() const noexcept override { return spec_.dim; }
  std::string describe() const override;

 private:
  EmbedderSpec spec_;
  RemoteEndpoint endpoint_;
  mutable std::counting_semaphore<1024> in_flight_;
};

std::unique_ptr<Embedder> make_embedder(const EmbedderSpec& spec, const RemoteEndpoint& endpoint = {});

/// dot(a, b) / (|a| |b|), accumulated in double. Throws DimensionMismatch or
/// ZeroVector.
template <class A, class B>
double cosine_similarity(std::span<const A> a, std::span<const B> b) {
  if (a.size() != b.size()) {
    throw Error(ErrorCode::DimensionMismatch,
                "cosine over dims " + std::to_string(a.size()) + " and " + std::to_string(b.size()));
  }
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double x = static_cast<double>(a[i]);
    const double y = static_cast<double>(b[i]);
    dot += x * y;
    na += x * x;
    nb += y * y;
  }
  if (na == 0.0 || nb == 0.0) throw Error(ErrorCode::ZeroVector, "cosine of a zero vector");
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

inline double cosine_similarity(const EmbeddingVector& a, const EmbeddingVector& b) {
  return cosine_similarity(a.view(), b.view());
}

/// Scales to unit L2 norm in place. Throws ZeroVector.
void l2_normalize(std::vector<double>& v);

}  // namespace mrdrag
