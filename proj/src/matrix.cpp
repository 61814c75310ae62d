#include "imvc/matrix.hpp"

#include <algorithm>
#include <cmath>

namespace imvc {

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows * cols) {
    throw Error("Matrix: data length " + std::to_string(data_.size()) + " does not match " +
                std::to_string(rows) + "x" + std::to_string(cols));
  }
}

Matrix Matrix::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
  const std::size_t r = rows.size();
  const std::size_t c = r ? rows.begin()->size() : 0;
  std::vector<double> data;
  data.reserve(r * c);
  for (const auto& row : rows) {
    if (row.size() != c) throw Error("Matrix::from_rows: ragged rows");
    data.insert(data.end(), row.begin(), row.end());
  }
  return Matrix(r, c, std::move(data));
}

void Matrix::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

bool Matrix::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double x) { return std::isfinite(x); });
}

Matrix Matrix::transpose() const {
  Matrix t(cols_, rows_);
  for (std::size_t i = 0; i < rows_; ++i)
    for (std::size_t j = 0; j < cols_; ++j) t(j, i) = (*this)(i, j);
  return t;
}

Matrix Matrix::rows_subset(std::span<const std::size_t> idx) const {
  Matrix out(idx.size(), cols_);
  for (std::size_t k = 0; k < idx.size(); ++k) {
    if (idx[k] >= rows_) throw Error("Matrix::rows_subset: row index out of range");
    auto src = row(idx[k]);
    std::copy(src.begin(), src.end(), out.row(k).begin());
  }
  return out;
}

Matrix Matrix::cols_prefix(std::size_t n) const {
  if (n > cols_) throw Error("Matrix::cols_prefix: too many columns");
  Matrix out(rows_, n);
  for (std::size_t i = 0; i < rows_; ++i)
    for (std::size_t j = 0; j < n; ++j) out(i, j) = (*this)(i, j);
  return out;
}

Matrix& Matrix::operator+=(const Matrix& o) {
  require_same_shape(*this, o, "operator+=");
  for (std::size_t k = 0; k < data_.size(); ++k) data_[k] += o.data_[k];
  return *this;
}

Matrix& Matrix::operator-=(const Matrix& o) {
  require_same_shape(*this, o, "operator-=");
  for (std::size_t k = 0; k < data_.size(); ++k) data_[k] -= o.data_[k];
  return *this;
}

Matrix& Matrix::operator*=(double s) {
  for (double& x : data_) x *= s;
  return *this;
}

Matrix operator+(Matrix a, const Matrix& b) { return a += b; }
Matrix operator-(Matrix a, const Matrix& b) { return a -= b; }
Matrix operator*(Matrix a, double s) { return a *= s; }

Vector row_sums(const Matrix& m) {
  Vector out(m.rows(), 0.0);
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (double x : m.row(i)) out[i] += x;
  return out;
}

Vector col_sums(const Matrix& m) {
  Vector out(m.cols(), 0.0);
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = 0; j < m.cols(); ++j) out[j] += m(i, j);
  return out;
}

double total_sum(const Matrix& m) {
  double s = 0.0;
  for (double x : m.values()) s += x;
  return s;
}

std::string shape_string(const Matrix& m) {
  return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

void require_same_shape(const Matrix& a, const Matrix& b, const char* what) {
  if (!a.same_shape(b)) {
    throw Error(std::string(what) + ": shape mismatch " + shape_string(a) + " vs " + shape_string(b));
  }
}

}  // namespace imvc
