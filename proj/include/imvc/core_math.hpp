#pragma once

#include <span>

#include "imvc/matrix.hpp"

namespace imvc {

/// Row-wise softmax with max-subtraction. Throws on non-finite input.
Matrix softmax_rows(const Matrix& m);

/// log(sum_i exp(v_i)) with max shift. Throws on empty or non-finite input.
double log_sum_exp(std::span<const double> v);

/// u.v / (|u| |v|). Throws on zero-norm or length mismatch.
double cosine_sim(std::span<const double> u, std::span<const double> v);

double dot(std::span<const double> u, std::span<const double> v);
double norm2(std::span<const double> v);

/// Index of the largest entry; ties resolve to the lowest index.
std::size_t argmax(std::span<const double> v);

/// Pairwise cosine similarities between the rows of x and the rows of y,
/// keeping what the backward pass needs.
struct CosineMatrix {
  Matrix value;  // value(i, j) = cos(x_i, y_j)
  Matrix x_unit;
  Matrix y_unit;
  Vector x_norm;
  Vector y_norm;
};

/// Throws if any row of x or y has zero norm.
CosineMatrix cosine_matrix(const Matrix& x, const Matrix& y);

/// Accumulates d/dx and d/dy of sum(d_value .* value). Either output may be null.
void cosine_matrix_backward(const CosineMatrix& cm, const Matrix& d_value, Matrix* dx, Matrix* dy);

}  // namespace imvc
