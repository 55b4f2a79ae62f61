#pragma once

#include <cstddef>

#include "nbl/array.hpp"

// Low-level log-semiring kernels. Every kernel has a plain serial
// implementation (the reference used by tests) and an OpenMP-parallel
// one; dispatch is controlled by set_num_threads. Contractions are done
// in max-shifted exponential space so the heavy lifting is an ordinary
// GEMM, then mapped back to log space.
namespace nbl::kern {

void set_num_threads(int n);
int num_threads();

// max over a contiguous range; kNegInf for an empty range
double max_of(const double* x, std::size_t n);

// log(sum(exp(x_i))) with max shift; kNegInf if all entries are -inf
double logsumexp(const double* x, std::size_t n);

// y_i = exp(x_i - shift); exp(-inf) == 0 by construction
void exp_shifted_serial(const double* x, double* y, std::size_t n,
                        double shift);
void exp_shifted(const double* x, double* y, std::size_t n, double shift);

// y_i = log(x_i) + shift; log(0) == -inf
void log_shifted_serial(const double* x, double* y, std::size_t n,
                        double shift);
void log_shifted(const double* x, double* y, std::size_t n, double shift);

// C[r x c] (+)= A[r x k] * B[k x c], all row-major, linear space.
// accumulate=false overwrites C.
void gemm_serial(const double* a, const double* b, double* c, std::size_t r,
                 std::size_t k, std::size_t cc, bool accumulate);
void gemm(const double* a, const double* b, double* c, std::size_t r,
          std::size_t k, std::size_t cc, bool accumulate);

// out[r x c] = log( exp(A) . exp(B) ) for log-space inputs, computed
// stably with a single shift per operand.
void log_matmul_serial(const Array& a, const Array& b, Array& out);
void log_matmul(const Array& a, const Array& b, Array& out);

}  // namespace nbl::kern
