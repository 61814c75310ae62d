#include "imvc/losses.hpp"

#include <cmath>
#include <string>

#include "imvc/core_math.hpp"

namespace imvc {

namespace {

constexpr double kProbFloor = 1e-12;

Matrix& slot(Matrix& m, std::size_t rows, std::size_t cols) {
  if (m.empty()) m = Matrix(rows, cols);
  return m;
}

Matrix* view_slot(std::vector<Matrix>* v, std::size_t view, std::size_t nv, std::size_t rows, std::size_t cols) {
  if (!v) return nullptr;
  if (v->size() < nv) v->resize(nv);
  return &slot((*v)[view], rows, cols);
}

void check_views(std::span<const Matrix> views, const Matrix& ref, const char* what) {
  if (views.empty()) throw Error(std::string(what) + ": no views");
  for (const Matrix& m : views) require_same_shape(m, ref, what);
}

// Feature contrast of one view. Returns per-sample losses; accumulates
// scale * d/dh and scale * d/dhu of their mean.
Vector mvc_view(const Matrix& h, const Matrix& hu, const Matrix& g, double tau, Matrix* dh, Matrix* dhu,
                double scale) {
  const std::size_t n = h.rows();
  const CosineMatrix cm = cosine_matrix(h, hu);
  Vector loss(n);
  Matrix d_cos(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    double denom = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      const double w = 1.0 - g(i, j) * g(i, j);
      const double e = w * std::exp(cm.value(i, j) / tau);
      d_cos(i, j) = e;
      denom += e;
    }
    if (!(denom > 0.0)) {
      throw Error("structure_contrastive_loss: sample " + std::to_string(i) + " has no weighted negatives");
    }
    loss[i] = -cm.value(i, i) / tau + std::log(denom);
    const double c = scale / static_cast<double>(n);
    for (std::size_t j = 0; j < n; ++j) d_cos(i, j) = c * d_cos(i, j) / (denom * tau);
    d_cos(i, i) = -c / tau;
  }
  if (dh || dhu) cosine_matrix_backward(cm, d_cos, dh, dhu);
  return loss;
}

// Column contrast of one view; returns the K per-class losses.
Vector sem_view(const Matrix& pv, const Matrix& p, double tau, Matrix* dpv, Matrix* dp, double scale) {
  const std::size_t k = p.cols();
  const CosineMatrix cm = cosine_matrix(pv.transpose(), p.transpose());
  Vector loss(k);
  Matrix d_cos(k, k);
  for (std::size_t a = 0; a < k; ++a) {
    Vector logits;
    for (std::size_t b = 0; b < k; ++b)
      if (b != a) logits.push_back(cm.value(a, b) / tau);
    const double lse = log_sum_exp(logits);
    loss[a] = -cm.value(a, a) / tau + lse;
    const double c = scale / static_cast<double>(k);
    for (std::size_t b = 0; b < k; ++b)
      d_cos(a, b) = b == a ? -c / tau : c * std::exp(cm.value(a, b) / tau - lse) / tau;
  }
  if (dpv || dp) {
    Matrix dpv_t, dp_t;
    cosine_matrix_backward(cm, d_cos, dpv ? &dpv_t : nullptr, dp ? &dp_t : nullptr);
    if (dpv) *dpv += dpv_t.transpose();
    if (dp) *dp += dp_t.transpose();
  }
  return loss;
}

double mean(const Vector& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

}  // namespace

std::size_t RebalanceContext::num_assigned() const {
  std::size_t n = 0;
  for (char a : assigned) n += a ? 1 : 0;
  return n;
}

RebalanceContext RebalanceContext::subset(std::span<const std::size_t> idx) const {
  RebalanceContext out = *this;
  out.eta.clear();
  out.assigned.clear();
  for (std::size_t i : idx) {
    out.eta.push_back(eta.at(i));
    out.assigned.push_back(assigned.at(i));
  }
  out.targets = targets.rows_subset(idx);
  return out;
}

void RebalanceContext::validate(std::size_t n, std::size_t k) const {
  if (eta.size() != n || assigned.size() != n || targets.rows() != n) {
    throw Error("RebalanceContext: expected " + std::to_string(n) + " samples");
  }
  if (targets.cols() != k || class_weight.size() != k) {
    throw Error("RebalanceContext: expected " + std::to_string(k) + " classes");
  }
  for (double e : eta)
    if (!(e >= 0.0) || !std::isfinite(e)) throw Error("RebalanceContext: eta must be finite and >= 0");
  if (!(w_v >= 0.0) || !(w_t >= 0.0) || std::abs(w_v + w_t - 1.0) > 1e-12) {
    throw Error("RebalanceContext: w_v and w_t must be nonnegative and sum to 1");
  }
  if (!(tau_f > 0.0)) throw Error("RebalanceContext: tau_f must be positive");
}

RebalanceContext make_rebalance_context(const PseudoLabels& labels, double tau_f, double w_v, double w_t) {
  const ClassStatistics stats = class_statistics(labels);
  RebalanceContext ctx;
  ctx.w_v = w_v;
  ctx.w_t = w_t;
  ctx.tau_f = tau_f;
  ctx.class_weight = stats.class_weight;
  ctx.targets = labels.conditional();
  for (std::size_t i = 0; i < labels.hard.size(); ++i) {
    const int y = labels.hard[i];
    const bool on = y != kUnassigned;
    if (!on)
      for (double& x : ctx.targets.row(i)) x = 0.0;
    ctx.assigned.push_back(on ? 1 : 0);
    ctx.eta.push_back(on ? -std::log(stats.class_freq[static_cast<std::size_t>(y)]) : 0.0);
  }
  ctx.validate(labels.num_samples(), labels.num_classes());
  return ctx;
}

LossValue reconstruction_loss(std::span<const Matrix> xs, std::span<const Matrix> xhats,
                              std::vector<Matrix>* d_xhats, double scale) {
  if (xs.size() != xhats.size()) throw Error("reconstruction_loss: view count mismatch");
  if (xs.empty()) throw Error("reconstruction_loss: no views");
  LossValue out;
  out.per_sample.assign(xs[0].rows(), 0.0);
  for (std::size_t v = 0; v < xs.size(); ++v) {
    require_same_shape(xs[v], xhats[v], "reconstruction_loss");
    if (xs[v].rows() != out.per_sample.size()) throw Error("reconstruction_loss: views differ in sample count");
    Matrix* d = view_slot(d_xhats, v, xs.size(), xs[v].rows(), xs[v].cols());
    for (std::size_t i = 0; i < xs[v].rows(); ++i)
      for (std::size_t j = 0; j < xs[v].cols(); ++j) {
        const double r = xhats[v](i, j) - xs[v](i, j);
        out.per_sample[i] += r * r;
        if (d) (*d)(i, j) += scale * 2.0 * r;
      }
  }
  for (double x : out.per_sample) out.value += x;
  return out;
}

LossValue self_label_ce(const Matrix& p_hat, const Matrix& t, Matrix* d_p_hat, double scale) {
  require_same_shape(p_hat, t, "self_label_ce");
  if (p_hat.rows() == 0) throw Error("self_label_ce: empty batch");
  const double n = static_cast<double>(p_hat.rows());
  LossValue out;
  out.per_sample.assign(p_hat.rows(), 0.0);
  Matrix* d = d_p_hat ? &slot(*d_p_hat, p_hat.rows(), p_hat.cols()) : nullptr;
  for (std::size_t i = 0; i < p_hat.rows(); ++i)
    for (std::size_t k = 0; k < p_hat.cols(); ++k) {
      const double tk = t(i, k);
      if (!(tk >= 0.0)) throw Error("self_label_ce: negative target at row " + std::to_string(i));
      if (tk == 0.0) continue;
      const double p = p_hat(i, k);
      out.per_sample[i] -= tk * std::log(std::max(p, kProbFloor));
      if (d && p > kProbFloor) (*d)(i, k) -= scale * tk / (n * p);
    }
  for (double x : out.per_sample) out.value += x / n;
  return out;
}

LossValue structure_contrastive_loss(std::span<const Matrix> hs, const Matrix& hu, const Matrix& g,
                                     double tau_f, std::vector<Matrix>* d_hs, Matrix* d_hu, double scale) {
  check_views(hs, hu, "structure_contrastive_loss");
  const std::size_t n = hu.rows();
  if (n < 2) throw Error("structure_contrastive_loss: need at least 2 samples");
  if (g.rows() != n || g.cols() != n) throw Error("structure_contrastive_loss: G must be N x N");
  if (!(tau_f > 0.0)) throw Error("structure_contrastive_loss: tau_f must be positive");
  const double wv = 1.0 / static_cast<double>(hs.size());
  LossValue out;
  out.per_sample.assign(n, 0.0);
  Matrix* du = d_hu ? &slot(*d_hu, n, hu.cols()) : nullptr;
  for (std::size_t v = 0; v < hs.size(); ++v) {
    Matrix* dh = view_slot(d_hs, v, hs.size(), n, hu.cols());
    const Vector l = mvc_view(hs[v], hu, g, tau_f, dh, du, scale * wv);
    for (std::size_t i = 0; i < n; ++i) out.per_sample[i] += wv * l[i];
  }
  out.value = mean(out.per_sample);
  return out;
}

LossValue semantic_alignment_loss(std::span<const Matrix> view_probs, const Matrix& probs, double tau_l,
                                  std::vector<Matrix>* d_view_probs, Matrix* d_probs, double scale) {
  check_views(view_probs, probs, "semantic_alignment_loss");
  if (probs.cols() < 2) throw Error("semantic_alignment_loss: need at least 2 classes");
  if (!(tau_l > 0.0)) throw Error("semantic_alignment_loss: tau_l must be positive");
  const double wv = 1.0 / static_cast<double>(view_probs.size());
  Matrix* dp = d_probs ? &slot(*d_probs, probs.rows(), probs.cols()) : nullptr;
  LossValue out;
  for (std::size_t v = 0; v < view_probs.size(); ++v) {
    Matrix* dpv = view_slot(d_view_probs, v, view_probs.size(), probs.rows(), probs.cols());
    out.value += wv * mean(sem_view(view_probs[v], probs, tau_l, dpv, dp, scale * wv));
  }
  return out;
}

LossValue align_loss(std::span<const Matrix> hs, const Matrix& hu, const Matrix& g,
                     std::span<const Matrix> view_probs, const Matrix& probs,
                     std::span<const double> view_weights, double tau_f, double tau_l, OutputGrads* grads,
                     double scale) {
  check_views(hs, hu, "align_loss");
  check_views(view_probs, probs, "align_loss");
  const std::size_t nv = hs.size(), n = hu.rows();
  if (view_probs.size() != nv || view_weights.size() != nv) throw Error("align_loss: view count mismatch");
  if (n < 2) throw Error("align_loss: need at least 2 samples");
  if (g.rows() != n || g.cols() != n) throw Error("align_loss: G must be N x N");
  if (probs.cols() < 2) throw Error("align_loss: need at least 2 classes");
  if (!(tau_f > 0.0) || !(tau_l > 0.0)) throw Error("align_loss: temperatures must be positive");
  for (double w : view_weights)
    if (!(w >= 0.0)) throw Error("align_loss: view weights must be nonnegative");
  LossValue out;
  out.per_sample.assign(n, 0.0);
  for (std::size_t v = 0; v < nv; ++v) {
    const double w = view_weights[v];
    if (w == 0.0) continue;
    Matrix *dh = nullptr, *dhu = nullptr, *dpv = nullptr, *dp = nullptr;
    if (grads) {
      dh = view_slot(&grads->h, v, nv, n, hu.cols());
      dhu = &slot(grads->h_consensus, n, hu.cols());
      dpv = view_slot(&grads->view_probs, v, nv, n, probs.cols());
      dp = &slot(grads->consensus_probs, n, probs.cols());
    }
    const Vector fea = mvc_view(hs[v], hu, g, tau_f, dh, dhu, scale * w);
    const Vector sem = sem_view(view_probs[v], probs, tau_l, dpv, dp, scale * w);
    for (std::size_t i = 0; i < n; ++i) out.per_sample[i] += w * fea[i];
    out.value += w * (mean(fea) + mean(sem));
  }
  return out;
}

LossValue rebalanced_feature_loss(std::span<const Matrix> hs, const Matrix& hu, const RebalanceContext& ctx,
                                  std::vector<Matrix>* d_hs, Matrix* d_hu, double scale) {
  check_views(hs, hu, "rebalanced_feature_loss");
  const std::size_t n = hu.rows();
  ctx.validate(n, ctx.class_weight.size());
  const std::size_t m = ctx.num_assigned();
  if (m == 0) throw Error("rebalanced_feature_loss: no assigned samples");
  const double c = 1.0 / (static_cast<double>(m) * static_cast<double>(hs.size()));
  LossValue out;
  out.per_sample.assign(n, 0.0);
  Matrix* du = d_hu ? &slot(*d_hu, n, hu.cols()) : nullptr;
  for (std::size_t v = 0; v < hs.size(); ++v) {
    const CosineMatrix cm = cosine_matrix(hs[v], hu);
    Matrix d_cos(n, n);
    for (std::size_t i = 0; i < n; ++i) {
      if (!ctx.assigned[i]) continue;
      Vector d(n);
      for (std::size_t j = 0; j < n; ++j) d[j] = std::exp(cm.value(i, j) / ctx.tau_f);
      const double lse = log_sum_exp(d);
      const double l = -(d[i] + ctx.eta[i]) + lse;
      out.per_sample[i] += l / static_cast<double>(hs.size());
      out.value += c * l;
      for (std::size_t j = 0; j < n; ++j) {
        const double dl_dd = std::exp(d[j] - lse) - (j == i ? 1.0 : 0.0);
        d_cos(i, j) = scale * c * dl_dd * d[j] / ctx.tau_f;
      }
    }
    Matrix* dh = view_slot(d_hs, v, hs.size(), n, hu.cols());
    if (dh || du) cosine_matrix_backward(cm, d_cos, dh, du);
  }
  return out;
}

LossValue rebalanced_class_loss(std::span<const Matrix> view_probs, const Matrix& probs,
                                const RebalanceContext& ctx, std::vector<Matrix>* d_view_probs, Matrix* d_probs,
                                double scale) {
  check_views(view_probs, probs, "rebalanced_class_loss");
  const std::size_t n = probs.rows(), k = probs.cols(), nv = view_probs.size();
  ctx.validate(n, k);
  const std::size_t m = ctx.num_assigned();
  if (m == 0) throw Error("rebalanced_class_loss: no assigned samples");
  const double c = 1.0 / static_cast<double>(m);
  const double w_total = static_cast<double>(nv) * ctx.w_v + ctx.w_t;
  Matrix* dp = d_probs ? &slot(*d_probs, n, k) : nullptr;
  std::vector<Matrix*> dpv(nv, nullptr);
  for (std::size_t v = 0; v < nv; ++v) dpv[v] = view_slot(d_view_probs, v, nv, n, k);
  LossValue out;
  out.per_sample.assign(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    if (!ctx.assigned[i]) continue;
    const auto x = probs.row(i);
    const auto t = ctx.targets.row(i);
    Vector scaled_t(k);
    for (std::size_t j = 0; j < k; ++j) scaled_t[j] = t[j] * ctx.class_weight[j];
    Vector s(nv + 1);
    for (std::size_t v = 0; v < nv; ++v) s[v] = dot(view_probs[v].row(i), x);
    s[nv] = dot(scaled_t, x);
    const double lse = log_sum_exp(s);
    double l = 0.0;
    for (std::size_t v = 0; v < nv; ++v) l -= ctx.w_v * (s[v] - lse);
    l -= ctx.w_t * (s[nv] - lse);
    out.per_sample[i] = l;
    out.value += c * l;
    if (!dp && !d_view_probs) continue;
    for (std::size_t a = 0; a <= nv; ++a) {
      const double w = a < nv ? ctx.w_v : ctx.w_t;
      const double ds = scale * c * (-w + w_total * std::exp(s[a] - lse));
      for (std::size_t j = 0; j < k; ++j) {
        if (a < nv) {
          if (dpv[a]) (*dpv[a])(i, j) += ds * x[j];
          if (dp) (*dp)(i, j) += ds * view_probs[a](i, j);
        } else if (dp) {
          (*dp)(i, j) += ds * scaled_t[j];
        }
      }
    }
  }
  return out;
}

LossValue imbalance_loss(std::span<const Matrix> hs, const Matrix& hu, std::span<const Matrix> view_probs,
                         const Matrix& probs, const RebalanceContext& ctx, OutputGrads* grads, double scale) {
  const LossValue fea = rebalanced_feature_loss(hs, hu, ctx, grads ? &grads->h : nullptr,
                                                grads ? &grads->h_consensus : nullptr, scale);
  const LossValue cls = rebalanced_class_loss(view_probs, probs, ctx, grads ? &grads->view_probs : nullptr,
                                              grads ? &grads->consensus_probs : nullptr, scale);
  LossValue out;
  out.value = fea.value + cls.value;
  out.per_sample = fea.per_sample;
  for (std::size_t i = 0; i < out.per_sample.size(); ++i) out.per_sample[i] += cls.per_sample[i];
  return out;
}

}  // namespace imvc
