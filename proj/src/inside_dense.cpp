#include <chrono>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "nbl/inside.hpp"

namespace nbl {

namespace {

using Clock = std::chrono::steady_clock;

double secs_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

inline void logadd(double& acc, double x) {
  if (x == kNegInf) return;
  if (acc == kNegInf) {
    acc = x;
    return;
  }
  if (x > acc) std::swap(acc, x);
  acc += std::log1p(std::exp(x - acc));
}

// chart storage over all spans (width >= 1), entry: Array {m, width}
struct DenseChart {
  std::size_t l, m;
  std::vector<Array> s;  // indexed by sid(i, j)

  DenseChart(std::size_t l_, std::size_t m_, std::size_t n_N) : l(l_), m(m_) {
    s.reserve(l * (l + 1) / 2);
    for (std::size_t w = 1; w <= l; ++w)
      for (std::size_t i = 0; i + w <= l; ++i)
        s.emplace_back(Array::full({m, w}, kNegInf));
    for (std::size_t p = 0; p < l; ++p)
      for (std::size_t t = n_N; t < m; ++t) at(p, p + 1).at2(t, 0) = 0.0;
  }

  std::size_t sid(std::size_t i, std::size_t j) const {
    std::size_t w = j - i, off = 0;
    for (std::size_t w2 = 1; w2 < w; ++w2) off += l - w2 + 1;
    return off + i;
  }
  Array& at(std::size_t i, std::size_t j) { return s[sid(i, j)]; }
};

double root_combine(const DenseLpcfg& g, const DenseChart& chart,
                    const std::vector<std::size_t>& local) {
  std::size_t l = local.size();
  const Array& top = chart.s[chart.sid(0, l)];
  double z = kNegInf;
  for (std::size_t A = 0; A < g.inv.n_N; ++A)
    for (std::size_t p = 0; p < l; ++p)
      logadd(z, top.at2(A, p) + g.start.at2(A, local[p]));
  return z;
}

std::vector<std::size_t> localize(const DenseLpcfg& g,
                                  const std::vector<std::size_t>& words) {
  if (words.size() < 2)
    throw std::invalid_argument("inside: sentences must have length >= 2");
  std::vector<std::size_t> local(words.size());
  for (std::size_t i = 0; i < words.size(); ++i)
    local[i] = g.local_word(words[i]);
  return local;
}

}  // namespace

std::vector<LexTreePtr> enumerate_lexicalized_trees(
    std::size_t l, const SymbolInventory& inv) {
  if (l < 2 || l > 5)
    throw std::invalid_argument("enumerate_lexicalized_trees: l must be 2..5");
  inv.check();
  std::size_t m = inv.n_children();
  // memo[i][j): all subtrees over that span (leaf categories range over
  // the full child index space; nonterminal leaves carry zero mass)
  std::vector<std::vector<std::vector<LexTreePtr>>> memo(
      l, std::vector<std::vector<LexTreePtr>>(l + 1));
  for (std::size_t p = 0; p < l; ++p)
    for (std::size_t t = 0; t < m; ++t)
      memo[p][p + 1].push_back(make_leaf_node(p, t));
  for (std::size_t w = 2; w <= l; ++w)
    for (std::size_t i = 0; i + w <= l; ++i) {
      std::size_t j = i + w;
      auto& out = memo[i][j];
      for (std::size_t k = i + 1; k < j; ++k)
        for (const auto& left : memo[i][k])
          for (const auto& right : memo[k][j])
            for (std::size_t A = 0; A < inv.n_N; ++A)
              for (int d = 0; d < 2; ++d)
                out.push_back(make_binary_node(A, d, left, right));
    }
  return memo[0][l];
}

InsideResult inside_brute_force(const DenseLpcfg& g,
                                const std::vector<std::size_t>& words) {
  if (words.size() > 5)
    throw std::invalid_argument("inside_brute_force: l must be <= 5");
  localize(g, words);  // validates length and coverage
  auto trees = enumerate_lexicalized_trees(words.size(), g.inv);
  auto t0 = Clock::now();
  double z = kNegInf;
  for (const auto& t : trees) logadd(z, tree_log_probability(g, t, words));
  return {z, "brute_force", secs_since(t0), 0};
}

InsideResult inside_naive(const DenseLpcfg& g,
                          const std::vector<std::size_t>& words) {
  auto local = localize(g, words);
  std::size_t l = local.size(), m = g.inv.n_children();
  auto t0 = Clock::now();
  DenseChart chart(l, m, g.inv.n_N);
  for (std::size_t w = 2; w <= l; ++w)
    for (std::size_t i = 0; i + w <= l; ++i) {
      std::size_t j = i + w;
      Array& cell = chart.at(i, j);
      for (std::size_t A = 0; A < g.inv.n_N; ++A)
        for (std::size_t p = i; p < j; ++p) {
          double acc = kNegInf;
          for (std::size_t k = i + 1; k < j; ++k) {
            if (p < k) {
              const Array& hs = chart.at(i, k);
              const Array& ds = chart.at(k, j);
              for (std::size_t B = 0; B < m; ++B)
                for (std::size_t C = 0; C < m; ++C)
                  for (std::size_t q = k; q < j; ++q)
                    logadd(acc, g.bin_at(A, local[p], B, C, kHeadLeft,
                                         local[q]) +
                                    hs.at2(B, p - i) + ds.at2(C, q - k));
            } else {
              const Array& ds = chart.at(i, k);
              const Array& hs = chart.at(k, j);
              for (std::size_t B = 0; B < m; ++B)
                for (std::size_t C = 0; C < m; ++C)
                  for (std::size_t q = i; q < k; ++q)
                    logadd(acc, g.bin_at(A, local[p], B, C, kHeadRight,
                                         local[q]) +
                                    hs.at2(B, p - k) + ds.at2(C, q - i));
            }
          }
          cell.at2(A, p - i) = acc;
        }
    }
  double z = root_combine(g, chart, local);
  return {z, "naive", secs_since(t0), 0};
}

InsideResult inside_eisner_satta(const DenseLpcfg& g,
                                 const std::vector<std::size_t>& words) {
  auto local = localize(g, words);
  std::size_t l = local.size(), m = g.inv.n_children(), nN = g.inv.n_N;
  auto t0 = Clock::now();
  DenseChart chart(l, m, g.inv.n_N);
  // T[d][span][A][p][B] = lse over (C, q in span) of rule + s(C,q|span),
  // i.e. the dependent-side contraction cached per (A, p, dep span).
  std::vector<Array> T[2];
  std::vector<long> uses(chart.s.size(), 0);
  for (int d = 0; d < 2; ++d)
    T[d].assign(chart.s.size(), Array());
  long hits = 0;

  auto fill_T = [&](std::size_t i, std::size_t j) {
    std::size_t id = chart.sid(i, j);
    const Array& ds = chart.s[id];
    for (int d = 0; d < 2; ++d) {
      T[d][id] = Array::full({nN, l, m}, kNegInf);
      Array& t = T[d][id];
      for (std::size_t A = 0; A < nN; ++A)
        for (std::size_t p = 0; p < l; ++p) {
          if (p >= i && p < j) continue;  // head lies outside the dep span
          for (std::size_t B = 0; B < m; ++B) {
            double acc = kNegInf;
            for (std::size_t C = 0; C < m; ++C)
              for (std::size_t q = i; q < j; ++q)
                logadd(acc, g.bin_at(A, local[p], B, C, d, local[q]) +
                                ds.at2(C, q - i));
            t.at3(A, p, B) = acc;
          }
        }
    }
  };
  auto use_T = [&](std::size_t id) -> void {
    if (uses[id]++ > 0) ++hits;
  };

  for (std::size_t i = 0; i + 1 <= l; ++i) fill_T(i, i + 1);
  for (std::size_t w = 2; w <= l; ++w) {
    for (std::size_t i = 0; i + w <= l; ++i) {
      std::size_t j = i + w;
      Array& cell = chart.at(i, j);
      for (std::size_t k = i + 1; k < j; ++k) {
        std::size_t dep_r = chart.sid(k, j), dep_l = chart.sid(i, k);
        use_T(dep_r);
        use_T(dep_l);
        const Array& hsL = chart.at(i, k);
        const Array& hsR = chart.at(k, j);
        for (std::size_t A = 0; A < nN; ++A) {
          for (std::size_t p = i; p < k; ++p) {
            double acc = cell.at2(A, p - i);
            for (std::size_t B = 0; B < m; ++B)
              logadd(acc, T[0][dep_r].at3(A, p, B) + hsL.at2(B, p - i));
            cell.at2(A, p - i) = acc;
          }
          for (std::size_t p = k; p < j; ++p) {
            double acc = cell.at2(A, p - i);
            for (std::size_t B = 0; B < m; ++B)
              logadd(acc, T[1][dep_l].at3(A, p, B) + hsR.at2(B, p - k));
            cell.at2(A, p - i) = acc;
          }
        }
      }
    }
    if (w < l)
      for (std::size_t i = 0; i + w <= l; ++i) fill_T(i, i + w);
  }
  double z = root_combine(g, chart, local);
  return {z, "eisner_satta", secs_since(t0), hits};
}

std::size_t n_spans(std::size_t l) {
  std::size_t n = 0;
  for (std::size_t w = 2; w <= l; ++w) n += l - w + 1;
  return n;
}

std::size_t span_index(std::size_t i, std::size_t j, std::size_t l) {
  std::size_t w = j - i, off = 0;
  if (w < 2 || j > l) throw std::invalid_argument("span_index: bad span");
  for (std::size_t w2 = 2; w2 < w; ++w2) off += l - w2 + 1;
  return off + i;
}

}  // namespace nbl
