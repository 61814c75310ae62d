#include "imvc/self_labeling.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "imvc/core_math.hpp"

namespace imvc {

std::size_t PseudoLabels::num_assigned() const {
  return static_cast<std::size_t>(
      std::count_if(hard.begin(), hard.end(), [](int h) { return h != kUnassigned; }));
}

Matrix PseudoLabels::conditional() const { return soft * static_cast<double>(soft.rows()); }

std::vector<int> PseudoLabels::resolved() const {
  std::vector<int> out = hard;
  for (std::size_t i = 0; i < out.size(); ++i)
    if (out[i] == kUnassigned) out[i] = static_cast<int>(argmax(soft.row(i)));
  return out;
}

void MassSchedule::validate() const {
  if (!(lambda_base > 0.0) || !(lambda_base <= lambda_max) || !(lambda_max <= 1.0)) {
    throw Error("MassSchedule: need 0 < lambda_base <= lambda_max <= 1");
  }
}

MixedPrediction mix_predictions(const Matrix& consensus, std::span<const Matrix> views,
                                double alpha) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw Error("mix_predictions: alpha must be in [0, 1]");
  MixedPrediction out{consensus * alpha, alpha};
  if (views.empty()) {
    if (alpha != 1.0) throw Error("mix_predictions: no view predictions with alpha < 1");
    return out;
  }
  const double w = (1.0 - alpha) / static_cast<double>(views.size());
  for (const Matrix& v : views) {
    require_same_shape(consensus, v, "mix_predictions");
    for (std::size_t k = 0; k < v.size(); ++k) out.p_hat.values()[k] += w * v.values()[k];
  }
  return out;
}

double lambda_at(const MassSchedule& schedule, std::size_t step) {
  schedule.validate();
  if (step > schedule.total_steps) {
    throw Error("lambda_at: step " + std::to_string(step) + " exceeds total_steps " +
                std::to_string(schedule.total_steps));
  }
  if (schedule.total_steps == 0) return schedule.lambda_max;
  const double tau = static_cast<double>(step) / static_cast<double>(schedule.total_steps);
  const double ramp = std::exp(-5.0 * (1.0 - tau) * (1.0 - tau));
  return schedule.lambda_base + (schedule.lambda_max - schedule.lambda_base) * ramp;
}

double assignment_threshold(std::size_t num_samples) {
  return 0.5 / static_cast<double>(num_samples);
}

PseudoLabels labels_from_plan(Matrix plan, double lambda) {
  const std::size_t n = plan.rows(), k = plan.cols();
  PseudoLabels out;
  out.lambda = lambda;
  out.row_mass = row_sums(plan);
  out.hard.assign(n, kUnassigned);
  out.class_counts.assign(k, 0);
  // relative slack so rows sitting exactly on the threshold are not lost to rounding
  const double threshold = assignment_threshold(n) * (1.0 - 1e-9);
  for (std::size_t i = 0; i < n; ++i) {
    if (out.row_mass[i] >= threshold) {
      const std::size_t c = argmax(plan.row(i));
      out.hard[i] = static_cast<int>(c);
      ++out.class_counts[c];
    }
  }
  out.soft = std::move(plan);
  if (out.num_assigned() > 0) {
    ClassStatistics s = class_statistics(out);
    out.class_freq = std::move(s.class_freq);
    out.class_weight = std::move(s.class_weight);
  } else {
    out.class_freq.assign(k, 0.0);
    out.class_weight.assign(k, 0.0);
  }
  return out;
}

PseudoLabels assign_pot_labels(const MixedPrediction& mixed, double lambda,
                               const ot::PotConfig& config) {
  if (!(lambda > 0.0) || lambda > 1.0) throw Error("assign_pot_labels: lambda must be in (0, 1]");
  ot::TransportPlan t = ot::pot_uot_scaling(ot::pot_cost(mixed.p_hat), lambda, config);
  PseudoLabels out = labels_from_plan(std::move(t.plan), lambda);
  out.solver_iterations = t.iterations_used;
  out.converged = t.converged;
  return out;
}

PseudoLabels assign_balanced_labels(const MixedPrediction& mixed, double epsilon,
                                    std::size_t max_iter, double tol) {
  const std::size_t n = mixed.p_hat.rows(), k = mixed.p_hat.cols();
  const Vector r(n, 1.0 / static_cast<double>(n));
  const Vector c(k, 1.0 / static_cast<double>(k));
  ot::TransportPlan t = ot::sinkhorn(ot::pot_cost(mixed.p_hat), r, c, epsilon, max_iter, tol);
  PseudoLabels out = labels_from_plan(std::move(t.plan), 1.0);
  out.solver_iterations = t.iterations_used;
  out.converged = t.converged;
  return out;
}

ClassStatistics class_statistics(const PseudoLabels& labels) {
  double total = 0.0;
  for (std::size_t c : labels.class_counts) total += static_cast<double>(c);
  if (total == 0.0) throw Error("class_statistics: no assigned samples");
  ClassStatistics s;
  s.class_freq.resize(labels.class_counts.size());
  for (std::size_t k = 0; k < labels.class_counts.size(); ++k)
    s.class_freq[k] = static_cast<double>(labels.class_counts[k]) / total;
  s.class_weight = s.class_freq;
  return s;
}

}  // namespace imvc
