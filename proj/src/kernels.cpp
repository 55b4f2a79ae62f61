#include "nbl/kernels.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <atomic>
#include <cmath>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace nbl::kern {

namespace {
std::atomic<int> g_threads{1};
}

void set_num_threads(int n) { g_threads.store(n < 1 ? 1 : n); }
int num_threads() { return g_threads.load(); }

double max_of(const double* x, std::size_t n) {
  double m = kNegInf;
  for (std::size_t i = 0; i < n; ++i) m = std::max(m, x[i]);
  return m;
}

double logsumexp(const double* x, std::size_t n) {
  double m = max_of(x, n);
  if (m == kNegInf) return kNegInf;
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += std::exp(x[i] - m);
  return std::log(s) + m;
}

void exp_shifted_serial(const double* x, double* y, std::size_t n,
                        double shift) {
  for (std::size_t i = 0; i < n; ++i)
    y[i] = (x[i] == kNegInf) ? 0.0 : std::exp(x[i] - shift);
}

void exp_shifted(const double* x, double* y, std::size_t n, double shift) {
  if (num_threads() <= 1 || n < (1u << 14)) {
    exp_shifted_serial(x, y, n, shift);
    return;
  }
#pragma omp parallel for num_threads(num_threads()) schedule(static)
  for (long long i = 0; i < (long long)n; ++i)
    y[i] = (x[i] == kNegInf) ? 0.0 : std::exp(x[i] - shift);
}

void log_shifted_serial(const double* x, double* y, std::size_t n,
                        double shift) {
  for (std::size_t i = 0; i < n; ++i)
    y[i] = (x[i] <= 0.0) ? kNegInf : std::log(x[i]) + shift;
}

void log_shifted(const double* x, double* y, std::size_t n, double shift) {
  if (num_threads() <= 1 || n < (1u << 14)) {
    log_shifted_serial(x, y, n, shift);
    return;
  }
#pragma omp parallel for num_threads(num_threads()) schedule(static)
  for (long long i = 0; i < (long long)n; ++i)
    y[i] = (x[i] <= 0.0) ? kNegInf : std::log(x[i]) + shift;
}

using EMat = Eigen::Map<
    const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
using EMatMut = Eigen::Map<
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

void gemm_serial(const double* a, const double* b, double* c, std::size_t r,
                 std::size_t k, std::size_t cc, bool accumulate) {
  if (!accumulate)
    for (std::size_t i = 0; i < r * cc; ++i) c[i] = 0.0;
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t x = 0; x < k; ++x) {
      double av = a[i * k + x];
      if (av == 0.0) continue;
      const double* brow = b + x * cc;
      double* crow = c + i * cc;
      for (std::size_t j = 0; j < cc; ++j) crow[j] += av * brow[j];
    }
}

void gemm(const double* a, const double* b, double* c, std::size_t r,
          std::size_t k, std::size_t cc, bool accumulate) {
  EMat A(a, r, k), B(b, k, cc);
  EMatMut C(c, r, cc);
  if (accumulate)
    C.noalias() += A * B;
  else
    C.noalias() = A * B;
}

namespace {

void log_matmul_impl(const Array& a, const Array& b, Array& out, bool serial) {
  if (a.rank() != 2 || b.rank() != 2 || a.shape[1] != b.shape[0])
    throw std::invalid_argument("log_matmul: shapes " + a.shape_str() + " x " +
                                b.shape_str());
  std::size_t r = a.shape[0], k = a.shape[1], c = b.shape[1];
  out = Array({r, c});
  double sa = max_of(a.data.data(), a.numel());
  double sb = max_of(b.data.data(), b.numel());
  if (sa == kNegInf || sb == kNegInf) {
    std::fill(out.data.begin(), out.data.end(), kNegInf);
    return;
  }
  std::vector<double> ea(r * k), eb(k * c), ec(r * c);
  if (serial) {
    exp_shifted_serial(a.data.data(), ea.data(), r * k, sa);
    exp_shifted_serial(b.data.data(), eb.data(), k * c, sb);
    gemm_serial(ea.data(), eb.data(), ec.data(), r, k, c, false);
    log_shifted_serial(ec.data(), out.data.data(), r * c, sa + sb);
  } else {
    exp_shifted(a.data.data(), ea.data(), r * k, sa);
    exp_shifted(b.data.data(), eb.data(), k * c, sb);
    gemm(ea.data(), eb.data(), ec.data(), r, k, c, false);
    log_shifted(ec.data(), out.data.data(), r * c, sa + sb);
  }
}

}  // namespace

void log_matmul_serial(const Array& a, const Array& b, Array& out) {
  log_matmul_impl(a, b, out, true);
}

void log_matmul(const Array& a, const Array& b, Array& out) {
  log_matmul_impl(a, b, out, false);
}

}  // namespace nbl::kern
