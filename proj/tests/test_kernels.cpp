#include <doctest.h>

#include <cmath>
#include <random>

#include "nbl/kernels.hpp"

using namespace nbl;

namespace {

Array random_log_matrix(std::mt19937& rng, std::size_t r, std::size_t c,
                        double inf_frac = 0.1) {
  std::normal_distribution<double> nd(0.0, 3.0);
  std::uniform_real_distribution<double> ud(0.0, 1.0);
  Array a({r, c});
  for (auto& x : a.data) x = ud(rng) < inf_frac ? kNegInf : nd(rng);
  return a;
}

double naive_log_dot(const Array& a, const Array& b, std::size_t i,
                     std::size_t j) {
  std::vector<double> terms(a.shape[1]);
  for (std::size_t x = 0; x < a.shape[1]; ++x)
    terms[x] = a.at2(i, x) + b.at2(x, j);
  return kern::logsumexp(terms.data(), terms.size());
}

}  // namespace

TEST_SUITE("kernels") {

TEST_CASE("logsumexp handles empty, single, and all -inf inputs") {
  CHECK(kern::logsumexp(nullptr, 0) == kNegInf);
  double one = 2.5;
  CHECK(kern::logsumexp(&one, 1) == doctest::Approx(2.5));
  double ninf[3] = {kNegInf, kNegInf, kNegInf};
  CHECK(kern::logsumexp(ninf, 3) == kNegInf);
}

TEST_CASE("logsumexp is shift stable for large magnitudes") {
  double big[3] = {1e4, 1e4 + std::log(2.0), kNegInf};
  double got = kern::logsumexp(big, 3);
  CHECK(got == doctest::Approx(1e4 + std::log(3.0)).epsilon(1e-12));
}

TEST_CASE("exp_shifted and log_shifted round trip with -inf/0 mapping") {
  std::vector<double> x = {0.0, -1.0, kNegInf, 3.0};
  std::vector<double> y(4), back(4);
  kern::exp_shifted(x.data(), y.data(), 4, 1.5);
  CHECK(y[2] == 0.0);
  kern::log_shifted(y.data(), back.data(), 4, 1.5);
  for (int i = 0; i < 4; ++i) {
    if (x[i] == kNegInf)
      CHECK(back[i] == kNegInf);
    else
      CHECK(back[i] == doctest::Approx(x[i]).epsilon(1e-12));
  }
}

TEST_CASE("gemm serial and Eigen paths agree") {
  std::mt19937 rng(7);
  std::normal_distribution<double> nd(0.0, 1.0);
  std::size_t r = 9, k = 13, c = 11;
  std::vector<double> a(r * k), b(k * c), c1(r * c, 0.5), c2(r * c, 0.5);
  for (auto& v : a) v = nd(rng);
  for (auto& v : b) v = nd(rng);
  for (bool acc : {false, true}) {
    kern::gemm_serial(a.data(), b.data(), c1.data(), r, k, c, acc);
    kern::gemm(a.data(), b.data(), c2.data(), r, k, c, acc);
    for (std::size_t i = 0; i < r * c; ++i)
      CHECK(c1[i] == doctest::Approx(c2[i]).epsilon(1e-12));
  }
}

TEST_CASE("log_matmul matches per-entry logsumexp, including -inf rows") {
  std::mt19937 rng(11);
  Array a = random_log_matrix(rng, 6, 8);
  Array b = random_log_matrix(rng, 8, 5);
  for (std::size_t x = 0; x < 8; ++x) a.at2(2, x) = kNegInf;
  Array out;
  kern::log_matmul(a, b, out);
  for (std::size_t i = 0; i < 6; ++i)
    for (std::size_t j = 0; j < 5; ++j) {
      double want = naive_log_dot(a, b, i, j);
      if (want == kNegInf)
        CHECK(out.at2(i, j) == kNegInf);
      else
        CHECK(out.at2(i, j) == doctest::Approx(want).epsilon(1e-10));
    }
}

TEST_CASE("log_matmul all -inf operand yields all -inf result") {
  Array a = Array::full({3, 4}, kNegInf);
  std::mt19937 rng(3);
  Array b = random_log_matrix(rng, 4, 2, 0.0);
  Array out;
  kern::log_matmul(a, b, out);
  for (double v : out.data) CHECK(v == kNegInf);
}

TEST_CASE("serial and parallel paths agree on large inputs") {
  std::mt19937 rng(23);
  Array a = random_log_matrix(rng, 130, 260);
  Array b = random_log_matrix(rng, 260, 140);
  Array s, p;
  kern::log_matmul_serial(a, b, s);
  int saved = kern::num_threads();
  kern::set_num_threads(4);
  kern::log_matmul(a, b, p);
  kern::set_num_threads(saved);
  REQUIRE(s.shape == p.shape);
  for (std::size_t i = 0; i < s.numel(); ++i) {
    if (s.data[i] == kNegInf)
      CHECK(p.data[i] == kNegInf);
    else
      CHECK(s.data[i] == doctest::Approx(p.data[i]).epsilon(1e-10));
  }
}

}  // TEST_SUITE
