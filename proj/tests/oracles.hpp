#pragma once

// Brute-force reference implementations of the clustering metrics.

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <span>
#include <vector>

#include "imvc/matrix.hpp"

namespace testing {

/// Distinct ids in first-seen order.
inline std::vector<int> distinct(std::span<const int> v) {
  std::vector<int> out;
  for (int x : v)
    if (std::find(out.begin(), out.end(), x) == out.end()) out.push_back(x);
  return out;
}

/// Best fraction of matches over every injective cluster -> class map.
inline double brute_accuracy(std::span<const int> pred, std::span<const int> truth) {
  const std::vector<int> cs = distinct(pred), ks = distinct(truth);
  const std::size_t m = std::max(cs.size(), ks.size());
  // slots >= ks.size() are dummy classes that never match
  std::vector<int> perm(m);
  std::iota(perm.begin(), perm.end(), 0);
  std::size_t best = 0;
  do {
    std::size_t hits = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
      const auto c = static_cast<std::size_t>(std::find(cs.begin(), cs.end(), pred[i]) - cs.begin());
      const auto slot = static_cast<std::size_t>(perm[c]);
      if (slot < ks.size() && ks[slot] == truth[i]) ++hits;
    }
    best = std::max(best, hits);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return static_cast<double>(best) / static_cast<double>(pred.size());
}

inline double brute_purity(std::span<const int> pred, std::span<const int> truth) {
  std::size_t total = 0;
  for (int c : distinct(pred)) {
    std::map<int, std::size_t> votes;
    for (std::size_t i = 0; i < pred.size(); ++i)
      if (pred[i] == c) ++votes[truth[i]];
    std::size_t top = 0;
    for (const auto& [k, n] : votes) top = std::max(top, n);
    total += top;
  }
  return static_cast<double>(total) / static_cast<double>(pred.size());
}

/// Mutual information from the joint distribution, normalised by the
/// geometric mean of the two entropies.
inline double direct_nmi(std::span<const int> pred, std::span<const int> truth) {
  const double n = static_cast<double>(pred.size());
  // integer counts: summing 1/n repeatedly drifts off 1 and fakes entropy
  std::map<int, std::size_t> ca, cb;
  std::map<std::pair<int, int>, std::size_t> cab;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    ++ca[pred[i]];
    ++cb[truth[i]];
    ++cab[{pred[i], truth[i]}];
  }
  double ha = 0.0, hb = 0.0, mi = 0.0;
  for (const auto& [k, c] : ca) ha -= c / n * std::log(c / n);
  for (const auto& [k, c] : cb) hb -= c / n * std::log(c / n);
  for (const auto& [kk, c] : cab) {
    const double pa = ca[kk.first] / n, pb = cb[kk.second] / n;
    mi += c / n * std::log(c / n / (pa * pb));
  }
  if (ha <= 0.0 || hb <= 0.0) return 0.0;
  return mi / std::sqrt(ha * hb);
}

/// Lexicographically first permutation of minimal cost.
inline std::vector<std::size_t> brute_assignment(const imvc::Matrix& cost) {
  std::vector<std::size_t> perm(cost.rows()), best;
  std::iota(perm.begin(), perm.end(), 0);
  double best_cost = 0.0;
  do {
    double c = 0.0;
    for (std::size_t i = 0; i < perm.size(); ++i) c += cost(i, perm[i]);
    if (best.empty() || c < best_cost) {
      best_cost = c;
      best = perm;
    }
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

inline double assignment_cost(const imvc::Matrix& cost, const std::vector<std::size_t>& perm) {
  double c = 0.0;
  for (std::size_t i = 0; i < perm.size(); ++i) c += cost(i, perm[i]);
  return c;
}

/// Calls f on every labeling of n samples over k ids.
template <class F>
void for_each_labeling(std::size_t n, int k, F&& f) {
  std::vector<int> lab(n, 0);
  while (true) {
    f(std::span<const int>(lab));
    std::size_t i = 0;
    while (i < n && ++lab[i] == k) lab[i++] = 0;
    if (i == n) return;
  }
}

}  // namespace testing
