#include "imvc/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

namespace imvc {

namespace {

// Kuhn-Munkres with row/column potentials, O(n^3). Returns result[row] = col.
std::vector<std::size_t> solve_assignment(const Matrix& cost) {
  const std::size_t n = cost.rows();
  constexpr double inf = std::numeric_limits<double>::infinity();
  // 1-based arrays; index 0 is the virtual root column
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
  std::vector<std::size_t> match(n + 1, 0), way(n + 1, 0);
  for (std::size_t i = 1; i <= n; ++i) {
    match[0] = i;
    std::size_t j0 = 0;
    std::vector<double> minv(n + 1, inf);
    std::vector<char> used(n + 1, 0);
    do {
      used[j0] = 1;
      const std::size_t i0 = match[j0];
      double delta = inf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= n; ++j) {
        if (used[j]) {
          u[match[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (match[j0] != 0);
    do {
      const std::size_t j1 = way[j0];
      match[j0] = match[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<std::size_t> result(n);
  for (std::size_t j = 1; j <= n; ++j) result[match[j] - 1] = j - 1;
  return result;
}

double assignment_cost(const Matrix& cost, const std::vector<std::size_t>& perm) {
  double s = 0.0;
  for (std::size_t i = 0; i < perm.size(); ++i) s += cost(i, perm[i]);
  return s;
}

// Best cost of rows [first, n) over the columns not in `taken`.
double residual_optimum(const Matrix& cost, std::size_t first, const std::vector<char>& taken) {
  const std::size_t n = cost.rows();
  if (first == n) return 0.0;
  std::vector<std::size_t> free_cols;
  for (std::size_t j = 0; j < n; ++j)
    if (!taken[j]) free_cols.push_back(j);
  const std::size_t m = n - first;
  Matrix sub(m, m);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < m; ++j) sub(i, j) = cost(first + i, free_cols[j]);
  return assignment_cost(sub, solve_assignment(sub));
}

struct Encoded {
  std::vector<std::size_t> ids;
  std::vector<int> values;  // sorted distinct labels
};

Encoded encode(std::span<const int> labels) {
  Encoded e;
  e.values.assign(labels.begin(), labels.end());
  std::sort(e.values.begin(), e.values.end());
  e.values.erase(std::unique(e.values.begin(), e.values.end()), e.values.end());
  e.ids.reserve(labels.size());
  for (int y : labels) {
    e.ids.push_back(static_cast<std::size_t>(
        std::lower_bound(e.values.begin(), e.values.end(), y) - e.values.begin()));
  }
  return e;
}

void check_lengths(std::span<const int> pred, std::span<const int> truth, const char* what) {
  if (pred.size() != truth.size()) {
    throw Error(std::string(what) + ": length mismatch (" + std::to_string(pred.size()) + " vs " +
                std::to_string(truth.size()) + ")");
  }
}

// counts[p][t]
std::vector<std::vector<double>> contingency(const Encoded& p, const Encoded& t) {
  std::vector<std::vector<double>> table(p.values.size(), std::vector<double>(t.values.size(), 0.0));
  for (std::size_t i = 0; i < p.ids.size(); ++i) table[p.ids[i]][t.ids[i]] += 1.0;
  return table;
}

}  // namespace

std::vector<std::size_t> hungarian(const Matrix& cost) {
  if (cost.rows() != cost.cols()) throw Error("hungarian: cost matrix must be square, got " + shape_string(cost));
  if (!cost.all_finite()) throw Error("hungarian: cost must be finite");
  const std::size_t n = cost.rows();
  if (n == 0) return {};
  const double best = assignment_cost(cost, solve_assignment(cost));
  double scale = 1.0;
  for (double x : cost.values()) scale = std::max(scale, std::abs(x));
  const double tol = 1e-9 * scale * static_cast<double>(n);

  // fix rows in order, each to the smallest column that keeps the optimum reachable
  std::vector<std::size_t> result(n);
  std::vector<char> taken(n, 0);
  double fixed = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (taken[j]) continue;
      taken[j] = 1;
      const double total = fixed + cost(i, j) + residual_optimum(cost, i + 1, taken);
      if (total <= best + tol) {
        result[i] = j;
        fixed += cost(i, j);
        break;
      }
      taken[j] = 0;
    }
  }
  return result;
}

std::vector<int> best_mapping(std::span<const int> pred, std::span<const int> truth) {
  check_lengths(pred, truth, "best_mapping");
  if (pred.empty()) return {};
  for (int y : pred)
    if (y < 0) throw Error("best_mapping: prediction ids must be >= 0");
  const Encoded p = encode(pred), t = encode(truth);
  const auto table = contingency(p, t);
  const std::size_t n = std::max(p.values.size(), t.values.size());
  Matrix cost(n, n, 0.0);
  for (std::size_t a = 0; a < p.values.size(); ++a)
    for (std::size_t b = 0; b < t.values.size(); ++b) cost(a, b) = -table[a][b];
  const std::vector<std::size_t> perm = hungarian(cost);
  const int max_pred = p.values.back();
  std::vector<int> mapping(static_cast<std::size_t>(max_pred) + 1, -1);
  for (std::size_t a = 0; a < p.values.size(); ++a) {
    if (perm[a] < t.values.size()) mapping[static_cast<std::size_t>(p.values[a])] = t.values[perm[a]];
  }
  return mapping;
}

double accuracy(std::span<const int> pred, std::span<const int> truth) {
  check_lengths(pred, truth, "accuracy");
  if (pred.empty()) throw Error("accuracy: empty labels");
  const std::vector<int> mapping = best_mapping(pred, truth);
  std::size_t hit = 0;
  for (std::size_t i = 0; i < pred.size(); ++i)
    if (mapping[static_cast<std::size_t>(pred[i])] == truth[i]) ++hit;
  return static_cast<double>(hit) / static_cast<double>(pred.size());
}

double nmi(std::span<const int> pred, std::span<const int> truth) {
  check_lengths(pred, truth, "nmi");
  if (pred.empty()) throw Error("nmi: empty labels");
  const Encoded p = encode(pred), t = encode(truth);
  const auto table = contingency(p, t);
  const double n = static_cast<double>(pred.size());
  // marginals from integer counts, so a single label has entropy exactly 0
  Vector ca(p.values.size(), 0.0), cb(t.values.size(), 0.0);
  for (std::size_t a = 0; a < ca.size(); ++a)
    for (std::size_t b = 0; b < cb.size(); ++b) {
      ca[a] += table[a][b];
      cb[b] += table[a][b];
    }
  Vector pa(ca.size()), pb(cb.size());
  for (std::size_t a = 0; a < ca.size(); ++a) pa[a] = ca[a] / n;
  for (std::size_t b = 0; b < cb.size(); ++b) pb[b] = cb[b] / n;
  auto entropy = [](const Vector& q) {
    double h = 0.0;
    for (double x : q)
      if (x > 0.0) h -= x * std::log(x);
    return h;
  };
  const double ha = entropy(pa), hb = entropy(pb);
  if (ha <= 0.0 || hb <= 0.0) return 0.0;
  double mi = 0.0;
  for (std::size_t a = 0; a < pa.size(); ++a)
    for (std::size_t b = 0; b < pb.size(); ++b) {
      const double pab = table[a][b] / n;
      if (pab > 0.0) mi += pab * std::log(pab / (pa[a] * pb[b]));
    }
  return std::clamp(mi / std::sqrt(ha * hb), 0.0, 1.0);
}

double purity(std::span<const int> pred, std::span<const int> truth) {
  check_lengths(pred, truth, "purity");
  if (pred.empty()) throw Error("purity: empty labels");
  const auto table = contingency(encode(pred), encode(truth));
  double s = 0.0;
  for (const auto& row : table) s += *std::max_element(row.begin(), row.end());
  return s / static_cast<double>(pred.size());
}

GroupAccuracy group_accuracy(std::span<const int> pred, std::span<const int> truth,
                             std::span<const std::size_t> class_counts) {
  check_lengths(pred, truth, "group_accuracy");
  const std::size_t k = class_counts.size();
  std::vector<std::size_t> order(k);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return class_counts[a] > class_counts[b]; });
  const std::size_t third = (k + 2) / 3;
  const std::size_t head_n = std::min(third, k);
  const std::size_t tail_n = std::min(third, k - head_n);
  std::vector<int> group(k, 1);  // 0 head, 1 medium, 2 tail
  for (std::size_t r = 0; r < head_n; ++r) group[order[r]] = 0;
  for (std::size_t r = k - tail_n; r < k; ++r) group[order[r]] = 2;

  const std::vector<int> mapping = pred.empty() ? std::vector<int>{} : best_mapping(pred, truth);
  std::size_t hit[3] = {0, 0, 0}, total[3] = {0, 0, 0};
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (truth[i] < 0 || static_cast<std::size_t>(truth[i]) >= k) {
      throw Error("group_accuracy: true label outside class_counts");
    }
    const int g = group[static_cast<std::size_t>(truth[i])];
    ++total[g];
    if (mapping[static_cast<std::size_t>(pred[i])] == truth[i]) ++hit[g];
  }
  auto score = [&](int g) -> std::optional<double> {
    if (total[g] == 0) return std::nullopt;
    return static_cast<double>(hit[g]) / static_cast<double>(total[g]);
  };
  return GroupAccuracy{score(0), score(1), score(2)};
}

ClusterMetrics evaluate_clustering(std::span<const int> pred, std::span<const int> truth,
                                   std::span<const std::size_t> class_counts) {
  ClusterMetrics m;
  m.acc = accuracy(pred, truth);
  m.nmi = nmi(pred, truth);
  m.purity = purity(pred, truth);
  m.group_acc = group_accuracy(pred, truth, class_counts);
  return m;
}

}  // namespace imvc
