#pragma once

#include <algorithm>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "mmsc/types.hpp"

namespace mmsc {

/// Scores and binary relevance for one event's retrieval list.
struct RankedList {
  std::vector<double> scores;
  std::vector<int> relevance;
  std::vector<std::string> clip_ids;
};

/// Non-interpolated average precision. Items are ranked by descending score,
/// equal scores by ascending clip id. A list with no relevant item has AP 0.
inline double average_precision(const RankedList& r) {
  const std::size_t n = r.scores.size();
  detail::require(n >= 1, "average_precision: empty list");
  detail::require(r.relevance.size() == n && r.clip_ids.size() == n, "average_precision: length mismatch");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (r.scores[a] != r.scores[b]) return r.scores[a] > r.scores[b];
    return r.clip_ids[a] < r.clip_ids[b];
  });
  double sum = 0.0;
  int hits = 0;
  for (std::size_t k = 0; k < n; ++k) {
    const int rel = r.relevance[order[k]];
    detail::require(rel == 0 || rel == 1, "average_precision: relevance must be 0 or 1");
    if (rel) {
      ++hits;
      sum += static_cast<double>(hits) / static_cast<double>(k + 1);
    }
  }
  return hits == 0 ? 0.0 : sum / hits;
}

inline double mean_average_precision(std::span<const RankedList> per_event) {
  detail::require(!per_event.empty(), "mean_average_precision: no events");
  double s = 0.0;
  for (const auto& r : per_event) s += average_precision(r);
  return s / static_cast<double>(per_event.size());
}

inline double accuracy(std::span<const std::string> predicted, std::span<const std::string> truth) {
  detail::require(predicted.size() == truth.size(), "accuracy: length mismatch");
  detail::require(!predicted.empty(), "accuracy: empty input");
  std::size_t ok = 0;
  for (std::size_t i = 0; i < predicted.size(); ++i) ok += predicted[i] == truth[i];
  return static_cast<double>(ok) / static_cast<double>(predicted.size());
}

}  // namespace mmsc
