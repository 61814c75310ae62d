#pragma once

#include <span>

#include "imvc/matrix.hpp"

// Dense kernels used by the solvers and the network code.
//
// Two implementations share one interface: `serial` is the plain reference,
// `parallel` distributes independent output rows (or columns) over OpenMP
// threads. Each output element is accumulated in the same order in both, so
// results are bit-identical regardless of thread count. The unqualified
// functions in `imvc::kernels` dispatch to `parallel` when built with OpenMP.

namespace imvc::kernels {

namespace serial {
Matrix matmul(const Matrix& a, const Matrix& b);     // a * b
Matrix matmul_tn(const Matrix& a, const Matrix& b);  // a^T * b
Matrix matmul_nt(const Matrix& a, const Matrix& b);  // a * b^T
void softmax_rows_inplace(Matrix& m);
Vector matvec(const Matrix& m, std::span<const double> x);    // m * x
Vector matvec_t(const Matrix& m, std::span<const double> x);  // m^T * x
// out_i = log sum_j exp(log_m(i,j) + log_x[j]); -inf entries allowed
Vector log_matvec(const Matrix& log_m, std::span<const double> log_x);
Vector log_matvec_t(const Matrix& log_m, std::span<const double> log_x);
}  // namespace serial

namespace parallel {
Matrix matmul(const Matrix& a, const Matrix& b);
Matrix matmul_tn(const Matrix& a, const Matrix& b);
Matrix matmul_nt(const Matrix& a, const Matrix& b);
void softmax_rows_inplace(Matrix& m);
Vector matvec(const Matrix& m, std::span<const double> x);
Vector matvec_t(const Matrix& m, std::span<const double> x);
Vector log_matvec(const Matrix& log_m, std::span<const double> log_x);
Vector log_matvec_t(const Matrix& log_m, std::span<const double> log_x);
}  // namespace parallel

#ifdef _OPENMP
using parallel::log_matvec;
using parallel::log_matvec_t;
using parallel::matmul;
using parallel::matmul_nt;
using parallel::matmul_tn;
using parallel::matvec;
using parallel::matvec_t;
using parallel::softmax_rows_inplace;
#else
using serial::log_matvec;
using serial::log_matvec_t;
using serial::matmul;
using serial::matmul_nt;
using serial::matmul_tn;
using serial::matvec;
using serial::matvec_t;
using serial::softmax_rows_inplace;
#endif

/// Number of OpenMP threads the parallel kernels will use (1 without OpenMP).
int max_threads();

}  // namespace imvc::kernels
