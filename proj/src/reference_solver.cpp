// Oracle for the scaling solvers: projected gradient descent on the plan
// entries. It evaluates the same objective as transport_objective() but
// shares no code with the scaling recursion.

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>

#include "imvc/ot.hpp"

namespace imvc::ot {

namespace {

// Euclidean projection of y onto {x >= lo, sum x = total}. Writes into x.
void project_simplex(std::span<const double> y, double total, double lo, std::span<double> x,
                     std::vector<double>& scratch) {
  const std::size_t n = y.size();
  const double budget = total - lo * static_cast<double>(n);
  if (budget <= 0.0) {
    // target below the floor (e.g. an empty virtual column): spread it evenly
    std::fill(x.begin(), x.end(), total / static_cast<double>(n));
    return;
  }
  scratch.resize(n);
  // insertion sort, descending; rows and columns here have at most 8 entries
  for (std::size_t k = 0; k < n; ++k) {
    const double v = y[k];
    std::size_t p = k;
    while (p > 0 && scratch[p - 1] < v) {
      scratch[p] = scratch[p - 1];
      --p;
    }
    scratch[p] = v;
  }
  double cumulative = 0.0, theta = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    cumulative += scratch[k] - lo;
    const double t = (cumulative - budget) / static_cast<double>(k + 1);
    if (k + 1 == n || scratch[k + 1] - lo <= t) {
      theta = t;
      break;
    }
  }
  for (std::size_t k = 0; k < n; ++k) x[k] = lo + std::max(0.0, y[k] - lo - theta);
}

struct Projector {
  std::size_t rows = 0, cols = 0;
  double floor = 0.0;
  bool rows_equal = false;
  std::vector<std::size_t> equal_cols;
  Vector row_target, col_target;
  // warm start for the single-equality-column case
  double shift = 0.0;
  std::vector<double> scratch, buf;

  void operator()(const Matrix& y, Matrix& x) {
    if (rows_equal && equal_cols.empty()) {
      for (std::size_t i = 0; i < rows; ++i)
        project_simplex(y.row(i), row_target[i], floor, x.row(i), scratch);
    } else if (rows_equal && equal_cols.size() == 1) {
      project_rows_and_column(y, x);
    } else if (rows_equal) {
      dykstra(y, x);
    } else {
      x = y;
      for (double& v : x.values()) v = std::max(v, floor);
      for (std::size_t j : equal_cols) project_column(x, j);
    }
  }

  void project_column(Matrix& x, std::size_t j) {
    buf.resize(rows);
    Vector col(rows), out(rows);
    for (std::size_t i = 0; i < rows; ++i) col[i] = x(i, j);
    project_simplex(col, col_target[j], floor, out, scratch);
    for (std::size_t i = 0; i < rows; ++i) x(i, j) = out[i];
  }

  // Rows fixed to row_target and one column fixed: x_ij = max(floor, y_ij - alpha_i - mu [j = e]).
  // For a given mu each row is a simplex projection; the column sum is
  // nonincreasing and piecewise linear in mu, solved by safeguarded Newton.
  void project_rows_and_column(const Matrix& y, Matrix& x) {
    const std::size_t e = equal_cols.front();
    const double target = col_target[e];
    buf.resize(cols);
    auto column_sum = [&](double mu, double& slope) {
      double s = 0.0;
      slope = 0.0;
      for (std::size_t i = 0; i < rows; ++i) {
        auto yr = y.row(i);
        std::copy(yr.begin(), yr.end(), buf.begin());
        buf[e] -= mu;
        project_simplex(buf, row_target[i], floor, x.row(i), scratch);
        s += x(i, e);
        if (x(i, e) > floor) {
          std::size_t active = 0;
          for (double v : x.row(i))
            if (v > floor) ++active;
          slope -= 1.0 - 1.0 / static_cast<double>(active);
        }
      }
      return s;
    };
    double span = 1.0;
    for (double v : y.values()) span = std::max(span, std::abs(v));
    for (double v : row_target) span += v;
    double lo = -4.0 * span, hi = 4.0 * span;
    const double tol = 1e-14 * std::max(1.0, target);
    double mu = std::clamp(shift, lo, hi);
    // x always holds the projection at the current mu when the loop exits
    for (int it = 0; it < 200; ++it) {
      double slope = 0.0;
      const double g = column_sum(mu, slope) - target;
      if (std::abs(g) <= tol || hi - lo < 1e-16) break;
      if (g > 0.0) lo = mu; else hi = mu;
      double next = slope < 0.0 ? mu - g / slope : 0.5 * (lo + hi);
      if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
      mu = next;
    }
    shift = mu;
  }

  // Alternating projections with Dykstra corrections between the row set and
  // the column set; converges to the projection onto their intersection.
  void dykstra(const Matrix& y, Matrix& x) {
    Matrix cur = y, p(rows, cols, 0.0), q(rows, cols, 0.0), tmp(rows, cols), a(rows, cols);
    for (int it = 0; it < 2000; ++it) {
      tmp = cur + p;
      for (std::size_t i = 0; i < rows; ++i)
        project_simplex(tmp.row(i), row_target[i], floor, a.row(i), scratch);
      p = tmp - a;
      tmp = a + q;
      Matrix b = tmp;
      for (std::size_t j : equal_cols) project_column(b, j);
      q = tmp - b;
      double change = 0.0;
      for (std::size_t k = 0; k < b.size(); ++k)
        change = std::max(change, std::abs(b.values()[k] - cur.values()[k]));
      cur = std::move(b);
      if (change < 1e-15) break;
    }
    x = cur;
  }
};

}  // namespace

TransportPlan reference_solver(const Matrix& cost, const ConstraintSpec& spec, double epsilon,
                               const ReferenceOptions& options) {
  const std::size_t n = cost.rows(), m = cost.cols();
  if (n == 0 || m == 0) throw Error("reference_solver: empty cost");
  if (n > 8 || m > 5) throw Error("reference_solver: limited to 8 rows and 5 columns");
  if (!(epsilon > 0.0)) throw Error("reference_solver: epsilon must be > 0");
  if (!cost.all_finite()) throw Error("reference_solver: cost must be finite");
  if (spec.rows.target.size() != n || spec.rows.weight.size() != n ||
      spec.cols.target.size() != m || spec.cols.weight.size() != m) {
    throw Error("reference_solver: constraint sizes do not match the cost");
  }

  Projector proj;
  proj.rows = n;
  proj.cols = m;
  proj.floor = options.floor;
  proj.row_target = spec.rows.target;
  proj.col_target = spec.cols.target;
  const std::size_t hard_rows = static_cast<std::size_t>(
      std::count_if(spec.rows.weight.begin(), spec.rows.weight.end(),
                    [](double w) { return std::isinf(w); }));
  if (hard_rows != 0 && hard_rows != n) {
    throw Error("reference_solver: rows must be all hard or all soft");
  }
  proj.rows_equal = hard_rows == n;
  for (std::size_t j = 0; j < m; ++j)
    if (std::isinf(spec.cols.weight[j])) proj.equal_cols.push_back(j);

  double mass = 0.0;
  if (proj.rows_equal) {
    for (double v : spec.rows.target) mass += v;
  } else if (!proj.equal_cols.empty() && proj.equal_cols.size() == m) {
    for (double v : spec.cols.target) mass += v;
  } else {
    for (double v : spec.rows.target) mass += v;
    mass = std::max(mass, 1e-3);
  }
  const double typical = mass / static_cast<double>(n * m);

  Matrix t(n, m, typical), y(n, m);
  proj(Matrix(t), t);

  // step decays geometrically from 0.1 to 1e-6 of a typical entry per unit gradient
  const double step0 = 0.1 * typical / std::max(epsilon, 1e-3);
  const double step1 = 1e-6 * typical / std::max(epsilon, 1e-3);
  const std::size_t iters = std::max<std::size_t>(options.iterations, 1);
  const double decay = std::pow(step1 / step0, 1.0 / static_cast<double>(iters));
  double step = step0;

  Vector rows(n), cols(m);
  for (std::size_t it = 0; it < iters; ++it) {
    std::fill(rows.begin(), rows.end(), 0.0);
    std::fill(cols.begin(), cols.end(), 0.0);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < m; ++j) {
        rows[i] += t(i, j);
        cols[j] += t(i, j);
      }
    for (std::size_t i = 0; i < n; ++i) {
      const double wr = spec.rows.weight[i];
      const double row_term =
          std::isinf(wr) ? 0.0 : wr * std::log(rows[i] / spec.rows.target[i]);
      for (std::size_t j = 0; j < m; ++j) {
        const double wc = spec.cols.weight[j];
        const double col_term =
            std::isinf(wc) ? 0.0 : wc * std::log(cols[j] / spec.cols.target[j]);
        const double grad = cost(i, j) + epsilon * std::log(t(i, j)) + row_term + col_term;
        y(i, j) = t(i, j) - step * grad;
      }
    }
    proj(y, t);
    step *= decay;
  }

  TransportPlan out;
  out.plan = t;
  out.row_marginal = row_sums(t);
  out.col_marginal = col_sums(t);
  out.total_mass = total_sum(t);
  out.iterations_used = iters;
  out.converged = true;
  return out;
}

}  // namespace imvc::ot
