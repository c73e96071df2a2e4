#include "mrdrag/embedding.hpp"

#include <cctype>

#include <nlohmann/json.hpp>

#include "mrdrag/http_client.hpp"
#include "mrdrag/util.hpp"

namespace mrdrag {

void l2_normalize(std::vector<double>& v) {
  double norm_sq = 0.0;
  for (double x : v) norm_sq += x * x;
  if (norm_sq == 0.0) throw Error(ErrorCode::ZeroVector, "cannot normalize a zero vector");
  const double norm = std::sqrt(norm_sq);
  for (double& x : v) x /= norm;
}

namespace {

void require_text(std::string_view text) {
  if (trim(text).empty()) throw Error(ErrorCode::EmptyText, "cannot embed blank text");
}

}  // namespace

TrigramEmbedder::TrigramEmbedder(std::size_t dim) : dim_(dim) {
  if (dim_ == 0) throw Error(ErrorCode::ConfigError, "embedding dim must be positive");
}

EmbeddingVector TrigramEmbedder::embed(std::string_view text) const {
  require_text(text);
  std::string norm = " ";
  bool in_space = true;
  for (unsigned char c : text) {
    if (std::isspace(c)) {
      if (!in_space) norm.push_back(' ');
      in_space = true;
    } else {
      norm.push_back(static_cast<char>(std::tolower(c)));
      in_space = false;
    }
  }
  if (!in_space) norm.push_back(' ');

  std::vector<double> counts(dim_, 0.0);
  for (std::size_t i = 0; i + 3 <= norm.size(); ++i) {
    counts[fnv1a64(std::string_view(norm).substr(i, 3)) % dim_] += 1.0;
  }
  l2_normalize(counts);
  return EmbeddingVector{std::move(counts)};
}

std::string TrigramEmbedder::describe() const { return "DeterministicTest(trigram, dim=" + std::to_string(dim_) + ")"; }

RemoteEmbedder::RemoteEmbedder(EmbedderSpec spec, RemoteEndpoint endpoint)
    : spec_(std::move(spec)), endpoint_(std::move(endpoint)), in_flight_(std::max(1, endpoint_.max_in_flight)) {
  if (spec_.dim == 0) throw Error(ErrorCode::ConfigError, "embedding dim must be positive");
}

EmbeddingVector RemoteEmbedder::embed(std::string_view text) const {
  require_text(text);
  const nlohmann::json request = {{"model", spec_.model_name}, {"input", nlohmann::json::array({std::string(text)})}};

  in_flight_.acquire();
  std::string body;
  try {
    body = post_json_with_retries(endpoint_, "/embeddings", request.dump());
  } catch (...) {
    in_flight_.release();
    throw;
  }
  in_flight_.release();

  std::vector<double> values;
  try {
    const auto j = nlohmann::json::parse(body);
    for (const auto& x : j.at("data").at(0).at("embedding")) values.push_back(x.get<double>());
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::BackendUnavailable, std::string("unexpected embeddings response: ") + e.what());
  }
  if (values.size() != spec_.dim) {
    throw Error(ErrorCode::DimensionMismatch, "provider returned dim " + std::to_string(values.size()) +
                                                  ", expected " + std::to_string(spec_.dim));
  }
  for (double x : values) {
    if (!std::isfinite(x)) throw Error(ErrorCode::BackendUnavailable, "provider returned a non-finite value");
  }
  l2_normalize(values);
  return EmbeddingVector{std::move(values)};
}

std::string RemoteEmbedder::describe() const {
  return "RemoteAPI(" + spec_.model_name + ", dim=" + std::to_string(spec_.dim) + ")";
}

std::unique_ptr<Embedder> make_embedder(const EmbedderSpec& spec, const RemoteEndpoint& endpoint) {
  if (spec.backend == EmbedderBackend::DeterministicTest) return std::make_unique<TrigramEmbedder>(spec.dim);
  return std::make_unique<RemoteEmbedder>(spec, endpoint);
}

}  // namespace mrdrag
