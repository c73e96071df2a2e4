#pragma once

#include <chrono>
#include <cstdint>
#include <random>
#include <string>
#include <string_view>
#include <vector>

namespace mrdrag {

// std::mt19937_64's output sequence is fixed by the standard, but the
// distributions and std::shuffle are not; everything that must reproduce
// across toolchains goes through these helpers instead.
using Rng = std::mt19937_64;

/// Uniform integer in [0, n) by rejection sampling. n must be > 0.
inline std::uint64_t uniform_below(Rng& rng, std::uint64_t n) {
  const std::uint64_t limit = Rng::max() - (Rng::max() % n + 1) % n;
  std::uint64_t draw = rng();
  while (draw > limit) draw = rng();
  return draw % n;
}

template <class T>
void seeded_shuffle(std::vector<T>& items, Rng& rng) {
  for (std::size_t i = items.size(); i > 1; --i) {
    const auto j = static_cast<std::size_t>(uniform_below(rng, i));
    std::swap(items[i - 1], items[j]);
  }
}

/// Fisher-Yates permutation of 0..n-1 for a seed.
std::vector<std::size_t> seeded_permutation(std::size_t n, std::uint64_t seed);

/// FNV-1a 64-bit.
std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t basis = 0xcbf29ce484222325ULL);

/// Deterministically derives a sub-seed, e.g. one per case id.
std::uint64_t derive_seed(std::uint64_t seed, std::string_view salt);

/// Lower-case hex SHA-256 of a byte string.
std::string sha256_hex(std::string_view bytes);

/// Raw 32-byte SHA-256 digest.
std::string sha256_raw(std::string_view bytes);

std::string trim(std::string_view s);
std::string to_lower_ascii(std::string_view s);
bool contains_case_insensitive(std::string_view haystack, std::string_view needle);

/// ISO-8601 UTC timestamp with millisecond precision.
std::string format_utc(std::chrono::system_clock::time_point tp);

/// 32 hex characters from std::random_device.
std::string random_token();

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, std::string_view content);

}  // namespace mrdrag
