// Compares the serial reference kernels with the OpenMP-dispatched
// versions: gemm and log_matmul over a few square sizes.
#include <chrono>
#include <cstdlib>
#include <functional>
#include <iostream>
#include <random>
#include <vector>

#include "nbl/array.hpp"
#include "nbl/kernels.hpp"

using namespace nbl;

namespace {

double time_of(const std::function<void()>& f, int reps) {
  f();  // warm-up
  auto t0 = std::chrono::steady_clock::now();
  for (int i = 0; i < reps; ++i) f();
  auto t1 = std::chrono::steady_clock::now();
  return std::chrono::duration<double>(t1 - t0).count() / reps;
}

}  // namespace

int main(int argc, char** argv) {
  int reps = argc > 1 ? std::atoi(argv[1]) : 5;
  std::mt19937 rng(7);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::cout << "kernel,n,serial_s,parallel_s,speedup\n";
  for (std::size_t n : {128, 256, 512}) {
    std::vector<double> a(n * n), b(n * n), c(n * n);
    for (auto& x : a) x = gauss(rng);
    for (auto& x : b) x = gauss(rng);
    double ts = time_of(
        [&] { kern::gemm_serial(a.data(), b.data(), c.data(), n, n, n, false); },
        reps);
    double tp = time_of(
        [&] { kern::gemm(a.data(), b.data(), c.data(), n, n, n, false); },
        reps);
    std::cout << "gemm," << n << "," << ts << "," << tp << "," << ts / tp
              << "\n";

    Array la({n, n}), lb({n, n}), lc({n, n});
    for (auto& x : la.data) x = gauss(rng);
    for (auto& x : lb.data) x = gauss(rng);
    ts = time_of([&] { kern::log_matmul_serial(la, lb, lc); }, reps);
    tp = time_of([&] { kern::log_matmul(la, lb, lc); }, reps);
    std::cout << "log_matmul," << n << "," << ts << "," << tp << ","
              << ts / tp << "\n";
  }
  return 0;
}
