#include <cmath>
#include <limits>

#include "imvc/kernels.hpp"

namespace imvc::kernels::serial {

namespace {

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
  for (std::size_t i = 0; i < a.rows(); ++i) {
    double* o = out.row(i).data();
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double aik = a(i, k);
      const double* br = b.row(k).data();
      for (std::size_t j = 0; j < b.cols(); ++j) o[j] += aik * br[j];
    }
  }
  return out;
}

Matrix matmul_tn(const Matrix& a, const Matrix& b) {
  check_inner(a.rows(), b.rows(), "matmul_tn");
  Matrix out(a.cols(), b.cols());
  for (std::size_t i = 0; i < a.cols(); ++i) {
    double* o = out.row(i).data();
    for (std::size_t k = 0; k < a.rows(); ++k) {
      const double aki = a(k, i);
      const double* br = b.row(k).data();
      for (std::size_t j = 0; j < b.cols(); ++j) o[j] += aki * br[j];
    }
  }
  return out;
}

Matrix matmul_nt(const Matrix& a, const Matrix& b) {
  check_inner(a.cols(), b.cols(), "matmul_nt");
  Matrix out(a.rows(), b.rows());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    const double* ar = a.row(i).data();
    for (std::size_t j = 0; j < b.rows(); ++j) {
      const double* br = b.row(j).data();
      double s = 0.0;
      for (std::size_t k = 0; k < a.cols(); ++k) s += ar[k] * br[k];
      out(i, j) = s;
    }
  }
  return out;
}

void softmax_rows_inplace(Matrix& m) {
  for (std::size_t i = 0; i < m.rows(); ++i) {
    auto r = m.row(i);
    double mx = -std::numeric_limits<double>::infinity();
    for (double x : r) mx = std::max(mx, x);
    double s = 0.0;
    for (double& x : r) {
      x = std::exp(x - mx);
      s += x;
    }
    for (double& x : r) x /= s;
  }
}

Vector matvec(const Matrix& m, std::span<const double> x) {
  check_inner(m.cols(), x.size(), "matvec");
  Vector out(m.rows(), 0.0);
  for (std::size_t i = 0; i < m.rows(); ++i) {
    const double* r = m.row(i).data();
    double s = 0.0;
    for (std::size_t j = 0; j < m.cols(); ++j) s += r[j] * x[j];
    out[i] = s;
  }
  return out;
}

Vector matvec_t(const Matrix& m, std::span<const double> x) {
  check_inner(m.rows(), x.size(), "matvec_t");
  Vector out(m.cols(), 0.0);
  for (std::size_t j = 0; j < m.cols(); ++j) {
    double s = 0.0;
    for (std::size_t i = 0; i < m.rows(); ++i) s += m(i, j) * x[i];
    out[j] = s;
  }
  return out;
}

Vector log_matvec(const Matrix& log_m, std::span<const double> log_x) {
  check_inner(log_m.cols(), log_x.size(), "log_matvec");
  constexpr double neg_inf = -std::numeric_limits<double>::infinity();
  Vector out(log_m.rows(), neg_inf);
  for (std::size_t i = 0; i < log_m.rows(); ++i) {
    double mx = neg_inf;
    for (std::size_t j = 0; j < log_m.cols(); ++j) mx = std::max(mx, log_m(i, j) + log_x[j]);
    if (mx == neg_inf) continue;
    double s = 0.0;
    for (std::size_t j = 0; j < log_m.cols(); ++j) s += std::exp(log_m(i, j) + log_x[j] - mx);
    out[i] = mx + std::log(s);
  }
  return out;
}

Vector log_matvec_t(const Matrix& log_m, std::span<const double> log_x) {
  check_inner(log_m.rows(), log_x.size(), "log_matvec_t");
  constexpr double neg_inf = -std::numeric_limits<double>::infinity();
  Vector out(log_m.cols(), neg_inf);
  for (std::size_t j = 0; j < log_m.cols(); ++j) {
    double mx = neg_inf;
    for (std::size_t i = 0; i < log_m.rows(); ++i) mx = std::max(mx, log_m(i, j) + log_x[i]);
    if (mx == neg_inf) continue;
    double s = 0.0;
    for (std::size_t i = 0; i < log_m.rows(); ++i) s += std::exp(log_m(i, j) + log_x[i] - mx);
    out[j] = mx + std::log(s);
  }
  return out;
}

}  // namespace imvc::kernels::serial
