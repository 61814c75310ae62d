#pragma once

#include <span>
#include <vector>

#include "imvc/matrix.hpp"
#include "imvc/ot.hpp"

namespace imvc {

/// Hard-label value for samples the partial plan left (mostly) untransported.
inline constexpr int kUnassigned = -1;

/// p_hat = alpha * P + (1 - alpha) / V * sum_v P^v.
struct MixedPrediction {
  Matrix p_hat;
  double alpha = 0.5;
};

/// Pseudo-labels read off a transport plan.
struct PseudoLabels {
  Matrix soft;            // T*, rows carry at most 1/N mass
  std::vector<int> hard;  // argmax of soft, or kUnassigned
  Vector row_mass;
  std::vector<std::size_t> class_counts;
  Vector class_freq;
  Vector class_weight;
  double lambda = 1.0;
  std::size_t solver_iterations = 0;
  bool converged = false;

  std::size_t num_samples() const { return hard.size(); }
  std::size_t num_classes() const { return soft.cols(); }
  std::size_t num_assigned() const;
  /// N * T*: per-sample conditional assignment, each row mass <= 1.
  Matrix conditional() const;
  /// Hard labels with unassigned rows resolved by the row argmax of soft.
  std::vector<int> resolved() const;
};

/// Sigmoid ramp-up of the transported mass over `total_steps` steps.
struct MassSchedule {
  double lambda_base = 0.1;
  double lambda_max = 1.0;
  std::size_t total_steps = 1;

  void validate() const;
};

MixedPrediction mix_predictions(const Matrix& consensus, std::span<const Matrix> views,
                                double alpha);

/// lambda_base + (lambda_max - lambda_base) * exp(-5 (1 - step/total_steps)^2)
double lambda_at(const MassSchedule& schedule, std::size_t step);

/// Hard labels go to rows holding at least half their 1/N budget.
double assignment_threshold(std::size_t num_samples);

/// Solve the partial + unbalanced problem on -log(p_hat) and read labels off T*.
PseudoLabels assign_pot_labels(const MixedPrediction& mixed, double lambda,
                               const ot::PotConfig& config);

/// Baseline labeler: balanced Sinkhorn with uniform marginals (lambda = 1, beta -> inf).
PseudoLabels assign_balanced_labels(const MixedPrediction& mixed, double epsilon,
                                    std::size_t max_iter = 1000, double tol = 1e-9);

/// Build PseudoLabels from an N x K plan (row masses <= 1/N).
PseudoLabels labels_from_plan(Matrix plan, double lambda);

struct ClassStatistics {
  Vector class_freq;    // n_k / sum n, used for the logit adjustment
  Vector class_weight;  // n_k / sum n, used to rescale pseudo-label candidates
};

/// Frequencies over assigned samples. Throws when nothing is assigned.
ClassStatistics class_statistics(const PseudoLabels& labels);

}  // namespace imvc
