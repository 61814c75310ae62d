#include "imvc/core_math.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "imvc/kernels.hpp"

namespace imvc {

Matrix softmax_rows(const Matrix& m) {
  if (!m.all_finite()) throw Error("softmax_rows: non-finite input");
  Matrix out = m;
  kernels::softmax_rows_inplace(out);
  return out;
}

double log_sum_exp(std::span<const double> v) {
  if (v.empty()) throw Error("log_sum_exp: empty vector");
  double mx = v[0];
  for (double x : v) {
    if (!std::isfinite(x)) throw Error("log_sum_exp: non-finite input");
    mx = std::max(mx, x);
  }
  double s = 0.0;
  for (double x : v) s += std::exp(x - mx);
  return mx + std::log(s);
}

double dot(std::span<const double> u, std::span<const double> v) {
  if (u.size() != v.size()) throw Error("dot: length mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) s += u[i] * v[i];
  return s;
}

double norm2(std::span<const double> v) { return std::sqrt(dot(v, v)); }

double cosine_sim(std::span<const double> u, std::span<const double> v) {
  if (u.size() != v.size()) throw Error("cosine_sim: length mismatch");
  const double nu = norm2(u), nv = norm2(v);
  if (nu == 0.0 || nv == 0.0) throw Error("cosine_sim: zero-norm input");
  return std::clamp(dot(u, v) / (nu * nv), -1.0, 1.0);
}

std::size_t argmax(std::span<const double> v) {
  if (v.empty()) throw Error("argmax: empty vector");
  std::size_t best = 0;
  for (std::size_t i = 1; i < v.size(); ++i)
    if (v[i] > v[best]) best = i;
  return best;
}

namespace {

Matrix unit_rows(const Matrix& m, Vector& norms, const char* what) {
  Matrix out = m;
  norms.resize(m.rows());
  for (std::size_t i = 0; i < m.rows(); ++i) {
    const double n = norm2(m.row(i));
    if (!(n > 0.0)) throw Error(std::string(what) + ": zero-norm row " + std::to_string(i));
    norms[i] = n;
    for (double& x : out.row(i)) x /= n;
  }
  return out;
}

// d(unit)/d(raw) applied to g: (g - (g.u) u) / |raw|, accumulated into out
void unit_backward(const Matrix& unit, const Vector& norms, const Matrix& d_unit, Matrix& out) {
  for (std::size_t i = 0; i < unit.rows(); ++i) {
    const auto u = unit.row(i);
    const auto g = d_unit.row(i);
    const double proj = dot(g, u);
    auto o = out.row(i);
    for (std::size_t k = 0; k < u.size(); ++k) o[k] += (g[k] - proj * u[k]) / norms[i];
  }
}

}  // namespace

CosineMatrix cosine_matrix(const Matrix& x, const Matrix& y) {
  if (x.cols() != y.cols()) throw Error("cosine_matrix: width mismatch");
  CosineMatrix cm;
  cm.x_unit = unit_rows(x, cm.x_norm, "cosine_matrix(x)");
  cm.y_unit = unit_rows(y, cm.y_norm, "cosine_matrix(y)");
  cm.value = kernels::matmul_nt(cm.x_unit, cm.y_unit);
  return cm;
}

void cosine_matrix_backward(const CosineMatrix& cm, const Matrix& d_value, Matrix* dx, Matrix* dy) {
  require_same_shape(cm.value, d_value, "cosine_matrix_backward");
  if (dx) {
    if (dx->empty()) *dx = Matrix(cm.x_unit.rows(), cm.x_unit.cols());
    unit_backward(cm.x_unit, cm.x_norm, kernels::matmul(d_value, cm.y_unit), *dx);
  }
  if (dy) {
    if (dy->empty()) *dy = Matrix(cm.y_unit.rows(), cm.y_unit.cols());
    unit_backward(cm.y_unit, cm.y_norm, kernels::matmul_tn(d_value, cm.x_unit), *dy);
  }
}

}  // namespace imvc
