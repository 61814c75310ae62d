#pragma once

#include <optional>
#include <span>
#include <vector>

#include "imvc/matrix.hpp"

namespace imvc {

/// Per-group accuracy; a group with no classes is empty.
struct GroupAccuracy {
  std::optional<double> head;
  std::optional<double> medium;
  std::optional<double> tail;
};

struct ClusterMetrics {
  double acc = 0.0;
  double nmi = 0.0;
  double purity = 0.0;
  GroupAccuracy group_acc;
};

/// Minimum-cost perfect assignment on a square matrix: result[row] = column.
/// Among optimal assignments the lexicographically smallest is returned.
std::vector<std::size_t> hungarian(const Matrix& cost);

/// Best cluster -> class mapping: mapping[cluster] = class, or -1 for clusters
/// left over when there are more clusters than classes.
std::vector<int> best_mapping(std::span<const int> pred, std::span<const int> truth);

double accuracy(std::span<const int> pred, std::span<const int> truth);
/// Mutual information over sqrt(H(pred) H(truth)); 0 when either entropy is 0.
double nmi(std::span<const int> pred, std::span<const int> truth);
double purity(std::span<const int> pred, std::span<const int> truth);

/// Classes ranked by true count (descending, ties by class id) and split into
/// head = top ceil(K/3), tail = bottom ceil(K/3), medium = the rest. Each group
/// is scored with the global mapping restricted to its samples.
GroupAccuracy group_accuracy(std::span<const int> pred, std::span<const int> truth,
                             std::span<const std::size_t> class_counts);

ClusterMetrics evaluate_clustering(std::span<const int> pred, std::span<const int> truth,
                                   std::span<const std::size_t> class_counts);

}  // namespace imvc
