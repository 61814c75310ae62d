#include "imvc/ot.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "imvc/kernels.hpp"

namespace imvc::ot {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();
constexpr double kLogSwitch = 60.0;
constexpr double kOverflow = 700.0;

enum class StopRule { RowMarginal, ColumnScaling };

// Targets and exponents of one scaling problem on the log kernel -C/eps.
struct ScalingProblem {
  Matrix log_kernel;
  Vector row_target;
  Vector row_exp;
  Vector col_target;
  Vector col_exp;
  std::size_t max_iter;
  double tol;
  KernelMode mode;
  StopRule stop;
};

struct ScalingOutput {
  Matrix plan;
  Vector a, b;
  std::size_t iterations = 0;
  bool converged = false;
  bool log_domain = false;
  Vector trace;
};

bool use_log_domain(const Matrix& log_kernel, KernelMode mode) {
  double lo = 0.0, hi = 0.0;
  for (double x : log_kernel.values()) {
    lo = std::min(lo, x);
    hi = std::max(hi, x);
  }
  switch (mode) {
    case KernelMode::LogDomain:
      return true;
    case KernelMode::Standard:
      if (hi > kOverflow) {
        throw Error("scaling: kernel exp(-C/eps) overflows (max -C/eps = " + std::to_string(hi) +
                    "); use log-domain mode");
      }
      return false;
    case KernelMode::Auto:
      return lo < -kLogSwitch || hi > kLogSwitch;
  }
  return false;
}

double safe_log(double x) { return x > 0.0 ? std::log(x) : kNegInf; }

// (target / denom)^exponent with the conventions 0/0 = 0 and 0^f = 0.
double scale_update(double target, double denom, double exponent) {
  if (target == 0.0) return 0.0;
  if (!(denom > 0.0)) {
    throw Error("scaling: kernel row or column vanished; use log-domain mode");
  }
  return exponent == 1.0 ? target / denom : std::pow(target / denom, exponent);
}

double log_scale_update(double log_target, double log_denom, double exponent) {
  if (log_target == kNegInf) return kNegInf;
  if (log_denom == kNegInf) throw Error("scaling: empty support in log-domain update");
  return exponent * (log_target - log_denom);
}

ScalingOutput run_scaling(const ScalingProblem& p) {
  const std::size_t n = p.log_kernel.rows(), m = p.log_kernel.cols();
  ScalingOutput out;
  out.log_domain = use_log_domain(p.log_kernel, p.mode);
  out.trace.reserve(std::min<std::size_t>(p.max_iter, 4096));

  if (!out.log_domain) {
    Matrix kernel = p.log_kernel;
    for (double& x : kernel.values()) x = std::exp(x);
    Vector a(n, 1.0), b(m, 1.0);
    for (std::size_t it = 0; it < p.max_iter; ++it) {
      const Vector kb = kernels::matvec(kernel, b);
      for (std::size_t i = 0; i < n; ++i) a[i] = scale_update(p.row_target[i], kb[i], p.row_exp[i]);
      const Vector kta = kernels::matvec_t(kernel, a);
      double change = 0.0;
      for (std::size_t j = 0; j < m; ++j) {
        const double nb = scale_update(p.col_target[j], kta[j], p.col_exp[j]);
        change = std::max(change, std::abs(nb - b[j]));
        b[j] = nb;
      }
      out.trace.push_back(change);
      out.iterations = it + 1;
      double err = change;
      if (p.stop == StopRule::RowMarginal) {
        const Vector kb2 = kernels::matvec(kernel, b);
        err = 0.0;
        for (std::size_t i = 0; i < n; ++i)
          err = std::max(err, std::abs(a[i] * kb2[i] - p.row_target[i]));
      }
      if (!std::isfinite(err)) throw Error("scaling: non-finite iterate; use log-domain mode");
      if (err < p.tol) {
        out.converged = true;
        break;
      }
    }
    out.plan = Matrix(n, m);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < m; ++j) out.plan(i, j) = a[i] * kernel(i, j) * b[j];
    out.a = std::move(a);
    out.b = std::move(b);
    return out;
  }

  Vector log_r(n), log_c(m);
  for (std::size_t i = 0; i < n; ++i) log_r[i] = safe_log(p.row_target[i]);
  for (std::size_t j = 0; j < m; ++j) log_c[j] = safe_log(p.col_target[j]);
  Vector la(n, 0.0), lb(m, 0.0);
  for (std::size_t it = 0; it < p.max_iter; ++it) {
    const Vector lkb = kernels::log_matvec(p.log_kernel, lb);
    for (std::size_t i = 0; i < n; ++i) la[i] = log_scale_update(log_r[i], lkb[i], p.row_exp[i]);
    const Vector lkta = kernels::log_matvec_t(p.log_kernel, la);
    double change = 0.0;
    for (std::size_t j = 0; j < m; ++j) {
      const double nb = log_scale_update(log_c[j], lkta[j], p.col_exp[j]);
      change = std::max(change, std::abs(std::exp(nb) - std::exp(lb[j])));
      lb[j] = nb;
    }
    out.trace.push_back(change);
    out.iterations = it + 1;
    double err = change;
    if (p.stop == StopRule::RowMarginal) {
      const Vector lkb2 = kernels::log_matvec(p.log_kernel, lb);
      err = 0.0;
      for (std::size_t i = 0; i < n; ++i)
        err = std::max(err, std::abs(std::exp(la[i] + lkb2[i]) - p.row_target[i]));
    }
    if (!std::isfinite(err)) throw Error("scaling: non-finite iterate in log domain");
    if (err < p.tol) {
      out.converged = true;
      break;
    }
  }
  out.plan = Matrix(n, m);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) {
      const double l = la[i] + p.log_kernel(i, j) + lb[j];
      out.plan(i, j) = l == kNegInf ? 0.0 : std::exp(l);
    }
  out.a.resize(n);
  out.b.resize(m);
  for (std::size_t i = 0; i < n; ++i) out.a[i] = std::exp(la[i]);
  for (std::size_t j = 0; j < m; ++j) out.b[j] = std::exp(lb[j]);
  return out;
}

Matrix log_kernel_of(const Matrix& cost, double epsilon) {
  if (!(epsilon > 0.0)) throw Error("epsilon must be > 0");
  if (!cost.all_finite()) throw Error("cost matrix must be finite");
  Matrix lk = cost;
  for (double& x : lk.values()) x = -x / epsilon;
  return lk;
}

void check_nonnegative(std::span<const double> v, std::size_t expected, const char* what) {
  if (v.size() != expected) {
    throw Error(std::string(what) + ": length " + std::to_string(v.size()) + ", expected " +
                std::to_string(expected));
  }
  for (double x : v)
    if (!(x >= 0.0) || !std::isfinite(x)) throw Error(std::string(what) + ": entries must be >= 0");
}

TransportPlan finish(ScalingOutput&& s) {
  TransportPlan t;
  t.plan = std::move(s.plan);
  t.row_marginal = row_sums(t.plan);
  t.col_marginal = col_sums(t.plan);
  t.total_mass = total_sum(t.plan);
  t.iterations_used = s.iterations;
  t.converged = s.converged;
  t.log_domain = s.log_domain;
  t.b_change_trace = std::move(s.trace);
  return t;
}

}  // namespace

double PotConfig::beta_at(std::size_t k) const { return beta.size() == 1 ? beta[0] : beta.at(k); }

void PotConfig::validate(std::size_t num_classes) const {
  if (!(epsilon > 0.0)) throw Error("PotConfig: epsilon must be > 0");
  if (!(tol > 0.0)) throw Error("PotConfig: tol must be > 0");
  if (max_iter == 0) throw Error("PotConfig: max_iter must be > 0");
  if (beta.size() != 1 && beta.size() != num_classes) {
    throw Error("PotConfig: beta must have 1 or K entries");
  }
  for (double b : beta)
    if (!(b > 0.0)) throw Error("PotConfig: beta must be > 0 on real columns");
}

TransportPlan sinkhorn(const Matrix& cost, std::span<const double> r, std::span<const double> c,
                       double epsilon, std::size_t max_iter, double tol, KernelMode mode) {
  check_nonnegative(r, cost.rows(), "sinkhorn row marginal");
  check_nonnegative(c, cost.cols(), "sinkhorn column marginal");
  double sr = 0.0, sc = 0.0;
  for (double x : r) sr += x;
  for (double x : c) sc += x;
  if (std::abs(sr - sc) > 1e-9) {
    throw Error("sinkhorn: marginal masses differ (" + std::to_string(sr) + " vs " +
                std::to_string(sc) + ")");
  }
  ScalingProblem p{log_kernel_of(cost, epsilon),
                   Vector(r.begin(), r.end()),
                   Vector(cost.rows(), 1.0),
                   Vector(c.begin(), c.end()),
                   Vector(cost.cols(), 1.0),
                   max_iter,
                   tol,
                   mode,
                   StopRule::RowMarginal};
  return finish(run_scaling(p));
}

TransportPlan uot_sinkhorn(const Matrix& cost, std::span<const double> r,
                           std::span<const double> c, double epsilon, double gamma1,
                           double gamma2, std::size_t max_iter, double tol, KernelMode mode) {
  check_nonnegative(r, cost.rows(), "uot_sinkhorn row marginal");
  check_nonnegative(c, cost.cols(), "uot_sinkhorn column marginal");
  if (!(gamma1 > 0.0) || !(gamma2 > 0.0)) throw Error("uot_sinkhorn: gamma1, gamma2 must be > 0");
  const double f1 = std::isinf(gamma1) ? 1.0 : gamma1 / (gamma1 + epsilon);
  const double f2 = std::isinf(gamma2) ? 1.0 : gamma2 / (gamma2 + epsilon);
  ScalingProblem p{log_kernel_of(cost, epsilon),
                   Vector(r.begin(), r.end()),
                   Vector(cost.rows(), f1),
                   Vector(c.begin(), c.end()),
                   Vector(cost.cols(), f2),
                   max_iter,
                   tol,
                   mode,
                   StopRule::ColumnScaling};
  return finish(run_scaling(p));
}

Matrix pot_cost(const Matrix& probabilities) {
  Matrix c = probabilities;
  for (double& x : c.values()) {
    if (!std::isfinite(x) || x < 0.0) throw Error("pot_cost: probabilities must be finite and >= 0");
    x = -std::log(std::max(x, 1e-12));
  }
  return c;
}

Matrix pot_extended_cost(const Matrix& neg_log_pred) {
  Matrix ext(neg_log_pred.rows(), neg_log_pred.cols() + 1, 0.0);
  for (std::size_t i = 0; i < neg_log_pred.rows(); ++i)
    for (std::size_t j = 0; j < neg_log_pred.cols(); ++j) ext(i, j) = neg_log_pred(i, j);
  return ext;
}

Matrix pot_extended_plan(const TransportPlan& t) {
  const std::size_t n = t.plan.rows(), k = t.plan.cols();
  if (t.unassigned.size() != n) throw Error("pot_extended_plan: plan has no virtual column");
  Matrix ext(n, k + 1);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < k; ++j) ext(i, j) = t.plan(i, j);
    ext(i, k) = t.unassigned[i];
  }
  return ext;
}

ConstraintSpec pot_constraints(std::size_t n, std::size_t k, double lambda,
                               const PotConfig& config) {
  ConstraintSpec s;
  s.rows.target.assign(n, 1.0 / static_cast<double>(n));
  s.rows.weight.assign(n, kInf);
  s.cols.target.assign(k + 1, lambda / static_cast<double>(k));
  s.cols.target[k] = 1.0 - lambda;
  s.cols.weight.resize(k + 1);
  for (std::size_t j = 0; j < k; ++j) s.cols.weight[j] = config.beta_at(j);
  s.cols.weight[k] = kInf;
  return s;
}

TransportPlan pot_uot_scaling(const Matrix& neg_log_pred, double lambda, const PotConfig& config,
                              ScalingState* state) {
  if (!(lambda > 0.0) || lambda > 1.0) throw Error("pot_uot_scaling: lambda must be in (0, 1]");
  const std::size_t n = neg_log_pred.rows(), k = neg_log_pred.cols();
  if (n == 0 || k == 0) throw Error("pot_uot_scaling: empty prediction matrix");
  if (!neg_log_pred.all_finite()) throw Error("pot_uot_scaling: cost must be finite");
  config.validate(k);

  const ConstraintSpec spec = pot_constraints(n, k, lambda, config);
  Vector col_exp(k + 1, 1.0);
  for (std::size_t j = 0; j < k; ++j) {
    const double beta = config.beta_at(j);
    col_exp[j] = std::isinf(beta) ? 1.0 : beta / (beta + config.epsilon);
  }
  // virtual column: beta -> +inf, so f = 1 and its update is an exact projection
  col_exp[k] = 1.0;

  ScalingProblem p{log_kernel_of(pot_extended_cost(neg_log_pred), config.epsilon),
                   spec.rows.target,
                   Vector(n, 1.0),
                   spec.cols.target,
                   col_exp,
                   config.max_iter,
                   config.tol,
                   config.mode,
                   StopRule::ColumnScaling};
  ScalingOutput out = run_scaling(p);

  if (state) *state = ScalingState{out.a, out.b, col_exp};

  TransportPlan t;
  t.unassigned.resize(n);
  for (std::size_t i = 0; i < n; ++i) t.unassigned[i] = out.plan(i, k);
  t.plan = out.plan.cols_prefix(k);
  t.row_marginal = row_sums(t.plan);
  t.col_marginal = col_sums(t.plan);
  t.total_mass = total_sum(t.plan);
  t.iterations_used = out.iterations;
  t.converged = out.converged;
  t.log_domain = out.log_domain;
  t.b_change_trace = std::move(out.trace);
  return t;
}

double weighted_kl(std::span<const double> x, std::span<const double> y,
                   std::span<const double> w) {
  if (x.size() != y.size() || x.size() != w.size()) throw Error("weighted_kl: length mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!(y[i] > 0.0)) throw Error("weighted_kl: y must be strictly positive");
    if (x[i] < 0.0) throw Error("weighted_kl: x must be nonnegative");
    if (x[i] > 0.0) s += w[i] * x[i] * std::log(x[i] / y[i]);
  }
  return s;
}

namespace {

double generalized_kl_term(double x, double y) {
  double v = y - x;
  if (x > 0.0) v += x * std::log(x / y);
  return v;
}

}  // namespace

double transport_objective(const Matrix& plan, const Matrix& cost, const ConstraintSpec& spec,
                           double epsilon) {
  require_same_shape(plan, cost, "transport_objective");
  double obj = 0.0;
  for (std::size_t k = 0; k < plan.size(); ++k) {
    const double t = plan.values()[k];
    obj += t * cost.values()[k];
    if (t > 0.0) obj += epsilon * (t * std::log(t) - t);
  }
  const Vector rows = row_sums(plan), cols = col_sums(plan);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const double w = spec.rows.weight.at(i);
    if (!std::isinf(w)) obj += w * generalized_kl_term(rows[i], spec.rows.target.at(i));
  }
  for (std::size_t j = 0; j < cols.size(); ++j) {
    const double w = spec.cols.weight.at(j);
    if (!std::isinf(w)) obj += w * generalized_kl_term(cols[j], spec.cols.target.at(j));
  }
  return obj;
}

ConstraintSpec balanced_constraints(std::span<const double> r, std::span<const double> c) {
  ConstraintSpec s;
  s.rows.target.assign(r.begin(), r.end());
  s.rows.weight.assign(r.size(), kInf);
  s.cols.target.assign(c.begin(), c.end());
  s.cols.weight.assign(c.size(), kInf);
  return s;
}

ConstraintSpec unbalanced_constraints(std::span<const double> r, std::span<const double> c,
                                      double gamma1, double gamma2) {
  ConstraintSpec s;
  s.rows.target.assign(r.begin(), r.end());
  s.rows.weight.assign(r.size(), gamma1);
  s.cols.target.assign(c.begin(), c.end());
  s.cols.weight.assign(c.size(), gamma2);
  return s;
}

}  // namespace imvc::ot
