#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "mrdrag/dual_index.hpp"

namespace mrdrag::testing {

// Full-sort reference search: score every entry, keep each disease's first
// maximum in scan order, sort everything, cut at k.
inline std::vector<RetrievalHit> brute_force_search(const DualIndex& index, const std::vector<double>& query,
                                                    std::size_t k, IndexMode mode) {
  std::vector<const IndexEntry*> scan;
  if (mode == IndexMode::DI || mode == IndexMode::Both) {
    for (const auto& e : index.di_entries()) scan.push_back(&e);
  }
  if (mode == IndexMode::MR || mode == IndexMode::Both) {
    for (const auto& e : index.mr_entries()) scan.push_back(&e);
  }

  std::map<std::string, RetrievalHit> best;
  for (const auto* e : scan) {
    double dot = 0, qq = 0, ee = 0;
    for (std::size_t i = 0; i < query.size(); ++i) {
      const double x = query[i];
      const double y = e->vector[i];
      dot += x * y;
      qq += x * x;
      ee += y * y;
    }
    const double s = dot / (std::sqrt(qq) * std::sqrt(ee));
    auto found = best.find(e->disease_id);
    if (found == best.end()) {
      best.emplace(e->disease_id, RetrievalHit{e->disease_id, s, e->source, 0});
    } else if (s > found->second.score) {
      found->second.score = s;
      found->second.source = e->source;
    }
  }

  std::vector<RetrievalHit> all;
  for (auto& [id, h] : best) all.push_back(h);
  std::stable_sort(all.begin(), all.end(), [](const RetrievalHit& a, const RetrievalHit& b) { return a.score > b.score; });
  if (all.size() > k) all.resize(k);
  for (std::size_t i = 0; i < all.size(); ++i) all[i].rank = i + 1;
  return all;
}

// Rank of the gold disease in a fully sorted, deduplicated list; nullopt if absent.
inline std::optional<std::size_t> oracle_rank(const DualIndex& index, const std::vector<double>& query,
                                              const std::string& gold, IndexMode mode) {
  const auto all = brute_force_search(index, query, static_cast<std::size_t>(-1), mode);
  for (const auto& h : all) {
    if (h.disease_id == gold) return h.rank;
  }
  return std::nullopt;
}

}  // namespace mrdrag::testing
