#include <chrono>
#include <cmath>
#include <map>
#include <random>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "fake_provider.hpp"
#include "mrdrag/embedding.hpp"
#include "mrdrag/util.hpp"

namespace mrdrag {
namespace {

double norm(const EmbeddingVector& v) {
  double s = 0;
  for (double x : v.values) s += x * x;
  return std::sqrt(s);
}

TEST(Cosine, HandComputedValues) {
  const std::vector<double> a{1, 0}, b{0, 1}, c{-1, 0};
  const std::vector<double> d{3, 4}, e{4, 3};
  const std::vector<double> f{1, 2, 3}, g{2, 4, 6};
  EXPECT_DOUBLE_EQ(cosine_similarity(std::span<const double>(a), std::span<const double>(b)), 0.0);
  EXPECT_DOUBLE_EQ(cosine_similarity(std::span<const double>(a), std::span<const double>(c)), -1.0);
  EXPECT_NEAR(cosine_similarity(std::span<const double>(d), std::span<const double>(e)), 24.0 / 25.0, 1e-15);
  EXPECT_NEAR(cosine_similarity(std::span<const double>(f), std::span<const double>(g)), 1.0, 1e-15);
}

TEST(Cosine, RejectsZeroAndMismatchedVectors) {
  const std::vector<double> z{0, 0}, a{1, 0}, b{1, 0, 0};
  try {
    cosine_similarity(std::span<const double>(z), std::span<const double>(a));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::ZeroVector);
  }
  try {
    cosine_similarity(std::span<const double>(a), std::span<const double>(b));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::DimensionMismatch);
  }
}

TEST(Fnv, KnownVectors) {
  EXPECT_EQ(fnv1a64(""), 0xcbf29ce484222325ULL);
  EXPECT_EQ(fnv1a64("a"), 0xaf63dc4c8601ec8cULL);
  EXPECT_EQ(fnv1a64("foobar"), 0x85944171f73967e8ULL);
}

TEST(Trigram, MatchesHandBuiltVector) {
  // " fever " has trigrams " fe", "fev", "eve", "ver", "er ".
  const std::size_t dim = 64;
  std::vector<double> expected(dim, 0.0);
  for (const char* t : {" fe", "fev", "eve", "ver", "er "}) expected[fnv1a64(t) % dim] += 1.0;
  double n = 0;
  for (double x : expected) n += x * x;
  for (double& x : expected) x /= std::sqrt(n);

  const auto v = TrigramEmbedder(dim).embed("  FEVER ");
  ASSERT_EQ(v.dim(), dim);
  for (std::size_t i = 0; i < dim; ++i) EXPECT_NEAR(v.values[i], expected[i], 1e-15);
}

TEST(Trigram, NormalizesCaseAndWhitespace) {
  TrigramEmbedder e(128);
  EXPECT_EQ(e.embed("Fever   and\tCough"), e.embed("fever and cough"));
  EXPECT_NE(e.embed("fever and cough"), e.embed("cough and fever"));
}

TEST(Trigram, BlankTextIsRejected) {
  TrigramEmbedder e(32);
  for (const char* s : {"", "   ", "\n\t"}) {
    try {
      e.embed(s);
      FAIL() << "'" << s << "'";
    } catch (const Error& err) {
      EXPECT_EQ(err.code(), ErrorCode::EmptyText);
    }
  }
}

TEST(Trigram, FrozenRanking) {
  TrigramEmbedder e(256);
  const auto q = e.embed("fever cough headache");
  const double close = cosine_similarity(q, e.embed("fever and cough with a headache"));
  const double mid = cosine_similarity(q, e.embed("a persistent cough"));
  const double far = cosine_similarity(q, e.embed("itchy skin rash on the elbows"));
  EXPECT_GT(close, mid);
  EXPECT_GT(mid, far);
}

TEST(TrigramProperty, UnitNormDeterministicAndBounded) {
  std::mt19937_64 rng(99);
  const std::string alphabet = "abcdefghij klmnop ";
  TrigramEmbedder e(48);
  for (int trial = 0; trial < 300; ++trial) {
    std::string a, b;
    for (int i = 0, n = 1 + static_cast<int>(rng() % 40); i < n; ++i) a += alphabet[rng() % alphabet.size()];
    for (int i = 0, n = 1 + static_cast<int>(rng() % 40); i < n; ++i) b += alphabet[rng() % alphabet.size()];
    if (trim(a).empty() || trim(b).empty()) continue;
    const auto va = e.embed(a), vb = e.embed(b);
    EXPECT_NEAR(norm(va), 1.0, 1e-9);
    EXPECT_EQ(va, e.embed(a));
    const double s = cosine_similarity(va, vb);
    EXPECT_LE(s, 1.0 + 1e-12);
    EXPECT_GE(s, -1.0 - 1e-12);
    EXPECT_NEAR(s, cosine_similarity(vb, va), 1e-15);
    EXPECT_NEAR(cosine_similarity(va, va), 1.0, 1e-12);
  }
}

RemoteEndpoint endpoint_for(const testing::FakeProvider& p) {
  RemoteEndpoint ep;
  ep.base_url = p.base_url();
  ep.api_key = "test-key";
  ep.attempts = 3;
  ep.initial_backoff = std::chrono::milliseconds(1);
  ep.timeout = std::chrono::seconds(5);
  return ep;
}

void reply_embedding(httplib::Response& res, std::vector<double> v) {
  res.set_content(nlohmann::json{{"data", {{{"embedding", v}}}}}.dump(), "application/json");
}

TEST(RemoteEmbedder, RetriesTransientFailures) {
  testing::FakeProvider provider([](const httplib::Request&, httplib::Response& res, int call) {
    if (call < 3) {
      res.status = call == 1 ? 503 : 429;
      return;
    }
    reply_embedding(res, {3, 0, 4, 0});
  });
  RemoteEmbedder e({EmbedderBackend::RemoteAPI, "m", 4}, endpoint_for(provider));
  const auto v = e.embed("hello");
  EXPECT_EQ(provider.calls(), 3);
  EXPECT_NEAR(v.values[0], 0.6, 1e-15);
  EXPECT_NEAR(v.values[2], 0.8, 1e-15);
  EXPECT_EQ(provider.last_auth(), "Bearer test-key");
  const auto body = nlohmann::json::parse(provider.last_body());
  EXPECT_EQ(body["model"], "m");
  EXPECT_EQ(body["input"][0], "hello");
}

TEST(RemoteEmbedder, GivesUpAfterAttempts) {
  testing::FakeProvider provider([](const httplib::Request&, httplib::Response& res, int) { res.status = 500; });
  RemoteEmbedder e({EmbedderBackend::RemoteAPI, "m", 4}, endpoint_for(provider));
  try {
    e.embed("hello");
    FAIL();
  } catch (const Error& err) {
    EXPECT_EQ(err.code(), ErrorCode::BackendUnavailable);
  }
  EXPECT_EQ(provider.calls(), 3);
}

TEST(RemoteEmbedder, ClientErrorsAreNotRetried) {
  testing::FakeProvider provider([](const httplib::Request&, httplib::Response& res, int) { res.status = 401; });
  RemoteEmbedder e({EmbedderBackend::RemoteAPI, "m", 4}, endpoint_for(provider));
  EXPECT_THROW(e.embed("hello"), Error);
  EXPECT_EQ(provider.calls(), 1);
}

TEST(RemoteEmbedder, DimensionMismatch) {
  testing::FakeProvider provider([](const httplib::Request&, httplib::Response& res, int) {
    reply_embedding(res, {1, 2, 3});
  });
  RemoteEmbedder e({EmbedderBackend::RemoteAPI, "m", 4}, endpoint_for(provider));
  try {
    e.embed("hello");
    FAIL();
  } catch (const Error& err) {
    EXPECT_EQ(err.code(), ErrorCode::DimensionMismatch);
  }
}

TEST(RemoteEmbedder, UnreachableProvider) {
  RemoteEndpoint ep;
  ep.base_url = "http://127.0.0.1:1/v1";
  ep.attempts = 2;
  ep.initial_backoff = std::chrono::milliseconds(1);
  RemoteEmbedder e({EmbedderBackend::RemoteAPI, "m", 4}, ep);
  try {
    e.embed("hello");
    FAIL();
  } catch (const Error& err) {
    EXPECT_EQ(err.code(), ErrorCode::BackendUnavailable);
  }
}

TEST(EmbedderFactory, PicksBackend) {
  EXPECT_EQ(make_embedder({EmbedderBackend::DeterministicTest, "x", 16})->dim(), 16u);
  EXPECT_NE(make_embedder({EmbedderBackend::RemoteAPI, "x", 16})->describe().find("RemoteAPI"), std::string::npos);
}

}  // namespace
}  // namespace mrdrag
