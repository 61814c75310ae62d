#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "imvc/matrix.hpp"

namespace imvc {

/// V views over the same N samples, plus ground truth kept for evaluation only.
struct MultiViewDataset {
  std::vector<Matrix> views;
  std::vector<int> labels;
  std::size_t num_classes = 0;
  std::vector<std::size_t> class_counts;
  std::uint64_t seed = 0;
  double ratio = 1.0;

  std::size_t num_samples() const { return labels.size(); }
  std::size_t num_views() const { return views.size(); }
  std::vector<std::size_t> view_dims() const;
  /// Throws if views disagree on N, labels fall outside [0, K), or counts are stale.
  void validate() const;
};

/// Parameters of the synthetic imbalanced generator.
struct GenSpec {
  std::size_t num_classes = 5;
  std::size_t num_views = 3;
  std::size_t num_samples = 1000;
  double ratio = 0.1;
  std::vector<std::size_t> view_dims = {20, 20, 20};
  std::size_t latent_dim = 8;
  double separation = 2.0;
  double noise_std = 1.0;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Geometric class-size profile from the largest class down to ratio * largest,
/// summing to N exactly, largest first.
std::vector<std::size_t> class_sizes(std::size_t num_samples, std::size_t num_classes,
                                     double ratio);

/// Latent centroids pushed through a fixed random linear map per view, plus
/// Gaussian noise per view. Values are rounded to 9 significant digits so the
/// text format stores them exactly.
MultiViewDataset generate(const GenSpec& spec);

/// min_k n_k / max_k n_k over the classes that occur.
double imbalance_ratio(std::span<const int> labels);

/// Directory layout: view_<v>.csv per view, labels.csv, meta.
void save_dataset(const MultiViewDataset& ds, const std::filesystem::path& dir);
MultiViewDataset load_dataset(const std::filesystem::path& dir);

/// Round to 9 significant digits (the precision of the dataset text format).
double round_to_stored_precision(double x);

/// One integer label per line. Used for labels.csv and for prediction files.
std::vector<int> read_label_file(const std::filesystem::path& path);
void write_label_file(const std::filesystem::path& path, std::span<const int> labels);

}  // namespace imvc
