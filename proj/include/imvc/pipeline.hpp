#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "imvc/datagen.hpp"
#include "imvc/metrics.hpp"
#include "imvc/networks.hpp"
#include "imvc/self_labeling.hpp"

namespace imvc {

/// Every knob of one training run. Field names double as config-file keys.
struct ExperimentConfig {
  // data: a dataset directory, or a generated dataset when empty
  std::string data_dir;
  std::size_t num_classes = 5;
  std::size_t num_views = 3;
  std::size_t num_samples = 1000;
  double ratio = 0.1;
  std::size_t view_dim = 20;
  std::size_t gen_latent_dim = 8;
  double separation = 1.0;
  double noise_std = 1.0;

  // model
  std::size_t hidden_dim = 64;
  std::size_t latent_dim = 32;
  std::size_t projection_hidden = 32;
  std::size_t projection_dim = 16;
  std::size_t attention_dim = 16;

  // schedule
  std::size_t epochs_stage1 = 60;
  std::size_t epochs_stage2 = 30;
  std::size_t epochs_stage3 = 30;
  std::size_t batch_size = 64;
  double lr = 1e-3;

  // losses and labels
  double alpha = 0.5;
  double tau_f = 0.5;
  double tau_l = 1.0;
  double classifier_temperature = 0.2;
  double lambda_base = 0.1;
  double lambda_max = 1.0;
  double epsilon = 0.1;
  double beta = 0.5;
  std::size_t solver_max_iter = 1000;
  double solver_tol = 1e-8;
  double w_v = 0.8;
  double w_t = 0.2;
  double ce_weight = 1.0;
  double im_weight = 1.0;
  bool keep_align = false;
  bool balanced_labels = false;

  std::uint64_t seed = 0;
  std::string out_dir;

  void validate() const;
  /// Set one field from its textual form. Throws on unknown keys or bad values.
  void set(const std::string& key, const std::string& value);
  /// Every field as (key, value) in a fixed order; parse(echo) reproduces the config.
  std::vector<std::pair<std::string, std::string>> echo() const;

  GenSpec gen_spec() const;
  ModelConfig model_config(const MultiViewDataset& data) const;
};

/// Flat key=value text; '#' starts a comment. Unknown keys are rejected.
ExperimentConfig parse_config(const std::string& text, ExperimentConfig base = {});
ExperimentConfig load_config(const std::filesystem::path& path, ExperimentConfig base = {});
std::string format_config(const ExperimentConfig& config);

struct EpochRecord {
  int stage = 0;
  std::size_t epoch = 0;
  double loss = 0.0;
  // stage 3 only
  std::optional<double> ce;
  std::optional<double> im;
  std::optional<double> lambda;
  std::optional<std::size_t> solver_iterations;
  std::optional<bool> converged;
  std::optional<std::size_t> assigned;
  std::string warning;
};

struct StageTiming {
  std::string name;
  double seconds = 0.0;
};

struct ExperimentReport {
  std::vector<std::pair<std::string, std::string>> config;
  std::size_t num_samples = 0;
  std::size_t num_views = 0;
  std::size_t num_classes = 0;
  double data_ratio = 0.0;
  std::vector<std::size_t> true_counts;
  std::vector<EpochRecord> epochs;
  std::optional<ClusterMetrics> metrics;
  std::vector<std::size_t> predicted_counts;  // per class after the best mapping
  std::vector<std::size_t> pseudo_label_counts;
  std::size_t final_assigned = 0;
  std::vector<int> predictions;
  std::string status = "ok";
  std::string failure;
  std::vector<StageTiming> timing;  // excluded from report.json
};

/// State carried between stages.
struct TrainState {
  ModelConfig model;
  ModelParams params;
};

TrainState init_training(const ExperimentConfig& config, const MultiViewDataset& data);

/// Mini-batch Adam on the reconstruction loss.
void train_stage1(const ExperimentConfig& config, const MultiViewDataset& data, TrainState& state,
                  std::vector<EpochRecord>& log);
/// Mini-batch Adam on the alignment loss with uniform view weights.
void train_stage2(const ExperimentConfig& config, const MultiViewDataset& data, TrainState& state,
                  std::vector<EpochRecord>& log);
/// Per epoch: full-data labels at the scheduled mass, then mini-batch Adam on
/// ce_weight * CE + im_weight * imbalance loss (+ alignment when keep_align).
/// Returns the labels of a final assignment at full schedule.
std::optional<PseudoLabels> train_stage3(const ExperimentConfig& config, const MultiViewDataset& data,
                                         TrainState& state, std::vector<EpochRecord>& log);

/// Pseudo-labels for the whole dataset under the current model.
PseudoLabels label_dataset(const ExperimentConfig& config, const MultiViewDataset& data, const TrainState& state,
                           double lambda);

ExperimentReport run_experiment(const ExperimentConfig& config, const MultiViewDataset& data);
/// Builds or loads the dataset named by the config.
MultiViewDataset load_or_generate(const ExperimentConfig& config);

/// report.json (deterministic), timing.json, epochs.csv, metrics.csv, predictions.csv.
void write_report(const ExperimentReport& report, const std::filesystem::path& dir);
std::string report_json(const ExperimentReport& report);

struct SweepRow {
  double ratio = 0.0;
  std::uint64_t seed = 0;
  bool balanced = false;
  ClusterMetrics metrics;
};

struct SweepSummary {
  double ratio = 0.0;
  double median_acc_method = 0.0;
  double median_acc_baseline = 0.0;
  double median_gap = 0.0;  // median over seeds of (method - baseline)
  double median_tail_method = 0.0;
  double median_tail_baseline = 0.0;
};

struct SweepResult {
  std::vector<SweepRow> rows;
  std::vector<SweepSummary> summary;
};

/// Method vs balanced-label baseline for every ratio and seed.
SweepResult run_sweep(const ExperimentConfig& base, const std::vector<double>& ratios,
                      const std::vector<std::uint64_t>& seeds);
void write_sweep(const SweepResult& result, const std::filesystem::path& dir);
std::string sweep_table(const SweepResult& result);

double median(std::vector<double> v);

}  // namespace imvc
