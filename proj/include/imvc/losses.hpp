#pragma once

#include <span>
#include <vector>

#include "imvc/matrix.hpp"
#include "imvc/networks.hpp"
#include "imvc/self_labeling.hpp"

// Training objectives with hand-written gradients.
//
// Every function returns its value and, when gradient outputs are given,
// accumulates scale * d(value)/d(input) into them. Empty output matrices are
// allocated on first use, so one OutputGrads can collect several terms.
namespace imvc {

struct LossValue {
  double value = 0.0;
  Vector per_sample;
};

/// Inputs of the two rebalanced losses for one batch.
struct RebalanceContext {
  Vector eta;                   // -log class_freq of the sample's pseudo-label; 0 when unassigned
  std::vector<char> assigned;   // 1 where the sample has a hard pseudo-label
  Matrix targets;               // per-sample pseudo-label rows (N * T*), zero when unassigned
  Vector class_weight;          // w_c
  double w_v = 0.8;
  double w_t = 0.2;
  double tau_f = 0.5;

  std::size_t num_assigned() const;
  RebalanceContext subset(std::span<const std::size_t> idx) const;
  void validate(std::size_t n, std::size_t k) const;
};

RebalanceContext make_rebalance_context(const PseudoLabels& labels, double tau_f, double w_v = 0.8,
                                        double w_t = 0.2);

/// sum_v |x^v - xhat^v|^2 over all samples, no averaging.
LossValue reconstruction_loss(std::span<const Matrix> xs, std::span<const Matrix> xhats,
                              std::vector<Matrix>* d_xhats = nullptr, double scale = 1.0);

/// -(1/N) sum_ik t_ik log max(p_ik, 1e-12). Zero rows of t contribute nothing.
LossValue self_label_ce(const Matrix& p_hat, const Matrix& t, Matrix* d_p_hat = nullptr,
                        double scale = 1.0);

/// Structure-weighted feature contrast between each H^v and the consensus
/// features: negatives j != i are weighted by 1 - G_ij^2. Mean over i and v.
LossValue structure_contrastive_loss(std::span<const Matrix> hs, const Matrix& hu, const Matrix& g,
                                     double tau_f, std::vector<Matrix>* d_hs = nullptr,
                                     Matrix* d_hu = nullptr, double scale = 1.0);

/// Contrast over class columns: column k of P^v against column k of P, with
/// the other columns of P as negatives. Mean over k and v.
LossValue semantic_alignment_loss(std::span<const Matrix> view_probs, const Matrix& probs, double tau_l,
                                  std::vector<Matrix>* d_view_probs = nullptr, Matrix* d_probs = nullptr,
                                  double scale = 1.0);

/// sum_v w_v * (feature contrast of view v + class contrast of view v).
LossValue align_loss(std::span<const Matrix> hs, const Matrix& hu, const Matrix& g,
                     std::span<const Matrix> view_probs, const Matrix& probs,
                     std::span<const double> view_weights, double tau_f, double tau_l,
                     OutputGrads* grads = nullptr, double scale = 1.0);

/// Logit-adjusted feature contrast over assigned samples:
/// -(D_ii + eta_i) + log sum_j exp(D_ij), D = exp(cos / tau_f). Mean over assigned i and v.
LossValue rebalanced_feature_loss(std::span<const Matrix> hs, const Matrix& hu, const RebalanceContext& ctx,
                                  std::vector<Matrix>* d_hs = nullptr, Matrix* d_hu = nullptr,
                                  double scale = 1.0);

/// Weighted multi-positive class contrast per assigned sample. Candidates are
/// the view rows P^v_i scored by P^v_i . x_i and the pseudo-label row t_i scored
/// by t_i . (x_i * w_c), with x_i = P_i. Mean over assigned samples.
LossValue rebalanced_class_loss(std::span<const Matrix> view_probs, const Matrix& probs,
                                const RebalanceContext& ctx, std::vector<Matrix>* d_view_probs = nullptr,
                                Matrix* d_probs = nullptr, double scale = 1.0);

/// rebalanced_feature_loss + rebalanced_class_loss.
LossValue imbalance_loss(std::span<const Matrix> hs, const Matrix& hu, std::span<const Matrix> view_probs,
                         const Matrix& probs, const RebalanceContext& ctx, OutputGrads* grads = nullptr,
                         double scale = 1.0);

}  // namespace imvc
