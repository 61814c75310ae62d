#pragma once

#include <cstddef>
#include <limits>
#include <span>

#include "imvc/matrix.hpp"

namespace imvc::ot {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

/// Whether the scaling recursion runs on the kernel or on its logarithm.
enum class KernelMode {
  Auto,       // log domain as soon as any -C/eps < -60 (or > 60)
  Standard,   // plain kernel; overflow is reported as an error
  LogDomain,  // always log domain
};

/// Result of any solver in this module.
///
/// `plan` holds the real columns. Solvers with a virtual column (POT) place
/// the untransported mass of each row in `unassigned`; it is empty otherwise.
struct TransportPlan {
  Matrix plan;
  Vector unassigned;
  Vector row_marginal;  // plan * 1
  Vector col_marginal;  // plan^T * 1
  double total_mass = 0.0;
  std::size_t iterations_used = 0;
  bool converged = false;
  bool log_domain = false;
  /// sup-norm change of the column scaling vector per iteration
  Vector b_change_trace;
};

/// Settings of the partial + unbalanced scaling solver.
struct PotConfig {
  double epsilon = 0.1;
  /// KL weight per real column; a single entry is broadcast to all K columns.
  Vector beta = {0.5};
  std::size_t max_iter = 1000;
  double tol = 1e-8;
  KernelMode mode = KernelMode::Auto;

  double beta_at(std::size_t k) const;
  void validate(std::size_t num_classes) const;
};

/// Scaling vectors of the recursion T = diag(a) M diag(b), with exponents f.
struct ScalingState {
  Vector a;
  Vector b;
  Vector f;
};

/// Balanced entropic OT. Stops when the row marginal error drops below `tol`.
TransportPlan sinkhorn(const Matrix& cost, std::span<const double> r, std::span<const double> c,
                       double epsilon, std::size_t max_iter = 1000, double tol = 1e-9,
                       KernelMode mode = KernelMode::Auto);

/// Entropic OT with both marginals relaxed by KL penalties of weight gamma1 (rows)
/// and gamma2 (columns). Stops on the sup-norm change of the column scaling.
TransportPlan uot_sinkhorn(const Matrix& cost, std::span<const double> r,
                           std::span<const double> c, double epsilon, double gamma1,
                           double gamma2, std::size_t max_iter = 1000, double tol = 1e-9,
                           KernelMode mode = KernelMode::Auto);

/// Partial + unbalanced OT with a virtual cluster.
///
/// `neg_log_pred` is the N x K matrix -log P. The cost is extended with a zero
/// column, rows are held to 1/N, the real columns are pulled toward lambda/K by
/// weighted KL, and the virtual column is held exactly at 1 - lambda (f = 1).
/// Returns the first K columns; the virtual column goes to `unassigned`.
TransportPlan pot_uot_scaling(const Matrix& neg_log_pred, double lambda, const PotConfig& config,
                              ScalingState* state = nullptr);

/// -log(max(p, 1e-12)) entrywise.
Matrix pot_cost(const Matrix& probabilities);

/// sum_i w_i x_i log(x_i / y_i), with 0 log 0 = 0.
double weighted_kl(std::span<const double> x, std::span<const double> y,
                   std::span<const double> w);

/// Marginal targets with per-entry KL weights; a weight of +inf marks a hard
/// equality constraint on that row or column sum.
struct MarginalConstraint {
  Vector target;
  Vector weight;
};

/// Constraint description shared by the objective evaluator and the reference solver.
struct ConstraintSpec {
  MarginalConstraint rows;
  MarginalConstraint cols;
};

/// The entropic objective whose stationary point the scaling recursions reach:
///   <T, C> + eps * sum T (log T - 1) + sum_{finite w} w * (x log(x/y) - x + y)
/// over row and column sums. Hard constraints contribute nothing here; check
/// them separately.
double transport_objective(const Matrix& plan, const Matrix& cost, const ConstraintSpec& spec,
                           double epsilon);

ConstraintSpec balanced_constraints(std::span<const double> r, std::span<const double> c);
ConstraintSpec unbalanced_constraints(std::span<const double> r, std::span<const double> c,
                                      double gamma1, double gamma2);
/// Constraints of the extended (K+1 column) POT problem.
ConstraintSpec pot_constraints(std::size_t n, std::size_t k, double lambda,
                               const PotConfig& config);
/// [C, 0]
Matrix pot_extended_cost(const Matrix& neg_log_pred);
/// [plan, unassigned]
Matrix pot_extended_plan(const TransportPlan& plan);

struct ReferenceOptions {
  std::size_t iterations = 100000;
  /// Entries are kept at or above this floor so log T stays finite.
  double floor = 1e-14;
};

/// Slow oracle: projected gradient descent directly on the plan entries, with
/// a geometrically decaying step. Never touches the scaling recursion.
/// Limited to at most 8 rows and 5 columns (4 classes plus a virtual one).
TransportPlan reference_solver(const Matrix& cost, const ConstraintSpec& spec, double epsilon,
                               const ReferenceOptions& options = {});

}  // namespace imvc::ot
