#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <utility>
#include <vector>

#include "monet/errors.hpp"

namespace monet {

namespace detail {
inline double pairs(double n) { return n * (n - 1.0) / 2.0; }
}  // namespace detail

// Adjusted Rand index between two clusterings of the same items. When the
// chance-corrected denominator vanishes (both partitions trivial: one cluster
// each, or all singletons each) the partitions are identical and 1 is returned.
inline double adjusted_rand_index(std::span<const int> a, std::span<const int> b) {
  if (a.size() != b.size()) {
    throw ArgumentError("ari: label arrays differ in length (" + std::to_string(a.size()) + " vs " +
                        std::to_string(b.size()) + ")");
  }
  const double n = static_cast<double>(a.size());
  if (a.size() < 2) return 1.0;
  std::map<std::pair<int, int>, std::int64_t> joint;
  std::map<int, std::int64_t> rows, cols;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ++joint[{a[i], b[i]}];
    ++rows[a[i]];
    ++cols[b[i]];
  }
  double index = 0, sum_a = 0, sum_b = 0;
  for (const auto& [k, c] : joint) index += detail::pairs(static_cast<double>(c));
  for (const auto& [k, c] : rows) sum_a += detail::pairs(static_cast<double>(c));
  for (const auto& [k, c] : cols) sum_b += detail::pairs(static_cast<double>(c));
  const double expected = sum_a * sum_b / detail::pairs(n);
  const double max_index = 0.5 * (sum_a + sum_b);
  if (max_index == expected) return 1.0;
  return (index - expected) / (max_index - expected);
}

inline double adjusted_rand_index(const std::vector<int>& a, const std::vector<int>& b) {
  return adjusted_rand_index(std::span<const int>(a), std::span<const int>(b));
}

// ARI over the items whose ground-truth label differs from `background`.
inline double foreground_ari(std::span<const int> predicted, std::span<const int> truth, int background = 0) {
  if (predicted.size() != truth.size()) throw ArgumentError("fg_ari: label arrays differ in length");
  std::vector<int> p, t;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (truth[i] == background) continue;
    p.push_back(predicted[i]);
    t.push_back(truth[i]);
  }
  return adjusted_rand_index(p, t);
}

}  // namespace monet
