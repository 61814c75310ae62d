#include <cmath>
#include <limits>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "imvc/kernels.hpp"

namespace imvc::kernels {

int max_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

namespace parallel {

namespace {

// below this many multiply-adds the fork/join overhead dominates
constexpr std::size_t kMinParallelWork = std::size_t{1} << 14;

void check_inner(std::size_t lhs, std::size_t rhs, const char* what) {
  if (lhs != rhs) {
    throw Error(std::string(what) + ": inner dimension mismatch " + std::to_string(lhs) + " vs " +
                std::to_string(rhs));
  }
}

}  // namespace

Matrix matmul(const Matrix& a, const Matrix& b) {
  check_inner(a.cols(), b.rows(), "matmul");
  Matrix out(a.rows(), b.cols());
  const std::size_t n = a.rows(), inner = a.cols(), m = b.cols();
#pragma omp parallel for schedule(static) if (n * inner * m > kMinParallelWork)
  for (std::size_t i = 0; i < n; ++i) {
    double* o = out.data() + i * m;
    for (std::size_t k = 0; k < inner; ++k) {
      const double aik = a(i, k);
      const double* br = b.data() + k * m;
      for (std::size_t j = 0; j < m; ++j) o[j] += aik * br[j];
    }
  }
  return out;
}

Matrix matmul_tn(const Matrix& a, const Matrix& b) {
  check_inner(a.rows(), b.rows(), "matmul_tn");
  Matrix out(a.cols(), b.cols());
  const std::size_t n = a.cols(), inner = a.rows(), m = b.cols();
#pragma omp parallel for schedule(static) if (n * inner * m > kMinParallelWork)
  for (std::size_t i = 0; i < n; ++i) {
    double* o = out.data() + i * m;
    for (std::size_t k = 0; k < inner; ++k) {
      const double aki = a(k, i);
      const double* br = b.data() + k * m;
      for (std::size_t j = 0; j < m; ++j) o[j] += aki * br[j];
    }
  }
  return out;
}

Matrix matmul_nt(const Matrix& a, const Matrix& b) {
  check_inner(a.cols(), b.cols(), "matmul_nt");
  Matrix out(a.rows(), b.rows());
  const std::size_t n = a.rows(), m = b.rows(), inner = a.cols();
#pragma omp parallel for schedule(static) if (n * inner * m > kMinParallelWork)
  for (std::size_t i = 0; i < n; ++i) {
    const double* ar = a.data() + i * inner;
    for (std::size_t j = 0; j < m; ++j) {
      const double* br = b.data() + j * inner;
      double s = 0.0;
      for (std::size_t k = 0; k < inner; ++k) s += ar[k] * br[k];
      out(i, j) = s;
    }
  }
  return out;
}

void softmax_rows_inplace(Matrix& m) {
  const std::size_t n = m.rows(), c = m.cols();
#pragma omp parallel for schedule(static) if (n * c > kMinParallelWork)
  for (std::size_t i = 0; i < n; ++i) {
    double* r = m.data() + i * c;
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < c; ++j) mx = std::max(mx, r[j]);
    double s = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
      r[j] = std::exp(r[j] - mx);
      s += r[j];
    }
    for (std::size_t j = 0; j < c; ++j) r[j] /= s;
  }
}

Vector matvec(const Matrix& m, std::span<const double> x) {
  check_inner(m.cols(), x.size(), "matvec");
  const std::size_t n = m.rows(), c = m.cols();
  Vector out(n, 0.0);
#pragma omp parallel for schedule(static) if (n * c > kMinParallelWork)
  for (std::size_t i = 0; i < n; ++i) {
    const double* r = m.data() + i * c;
    double s = 0.0;
    for (std::size_t j = 0; j < c; ++j) s += r[j] * x[j];
    out[i] = s;
  }
  return out;
}

Vector matvec_t(const Matrix& m, std::span<const double> x) {
  check_inner(m.rows(), x.size(), "matvec_t");
  const std::size_t n = m.rows(), c = m.cols();
  Vector out(c, 0.0);
#pragma omp parallel for schedule(static) if (n * c > kMinParallelWork)
  for (std::size_t j = 0; j < c; ++j) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += m(i, j) * x[i];
    out[j] = s;
  }
  return out;
}

Vector log_matvec(const Matrix& log_m, std::span<const double> log_x) {
  check_inner(log_m.cols(), log_x.size(), "log_matvec");
  constexpr double neg_inf = -std::numeric_limits<double>::infinity();
  const std::size_t n = log_m.rows(), c = log_m.cols();
  Vector out(n, neg_inf);
#pragma omp parallel for schedule(static) if (n * c > kMinParallelWork)
  for (std::size_t i = 0; i < n; ++i) {
    double mx = neg_inf;
    for (std::size_t j = 0; j < c; ++j) mx = std::max(mx, log_m(i, j) + log_x[j]);
    if (mx == neg_inf) continue;
    double s = 0.0;
    for (std::size_t j = 0; j < c; ++j) s += std::exp(log_m(i, j) + log_x[j] - mx);
    out[i] = mx + std::log(s);
  }
  return out;
}

Vector log_matvec_t(const Matrix& log_m, std::span<const double> log_x) {
  check_inner(log_m.rows(), log_x.size(), "log_matvec_t");
  constexpr double neg_inf = -std::numeric_limits<double>::infinity();
  const std::size_t n = log_m.rows(), c = log_m.cols();
  Vector out(c, neg_inf);
#pragma omp parallel for schedule(static) if (n * c > kMinParallelWork)
  for (std::size_t j = 0; j < c; ++j) {
    double mx = neg_inf;
    for (std::size_t i = 0; i < n; ++i) mx = std::max(mx, log_m(i, j) + log_x[i]);
    if (mx == neg_inf) continue;
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += std::exp(log_m(i, j) + log_x[i] - mx);
    out[j] = mx + std::log(s);
  }
  return out;
}

}  // namespace parallel
}  // namespace imvc::kernels
