#include <algorithm>
#include <cmath>
#include <functional>
#include <stdexcept>
#include <vector>

#include "nbl/decode.hpp"
#include "nbl/inside.hpp"
#include "nbl/kernels.hpp"

namespace nbl {

namespace {

// H-marginalized log rule weights over the sentence's distinct words:
// slab (A, wp, d, wq) holds an m x m matrix over (B, C). Built by GEMM
// in exponential space; cost O(n_N |W|^2 m^2 d_H), memory 2 n_N |W|^2 m^2.
struct RuleTable {
  std::size_t nN = 0, m = 0, nW = 0;
  std::vector<std::size_t> wlist, wloc;
  Array W;  // [n_N, nW, 2, nW, m*m]

  const double* slab(std::size_t A, std::size_t wp, int d,
                     std::size_t wq) const {
    return W.data.data() + (((A * nW + wp) * 2 + d) * nW + wq) * m * m;
  }
};

RuleTable build_rule_table(const NblParams& p,
                           const std::vector<std::size_t>& words) {
  RuleTable t;
  t.nN = p.inv.n_N;
  t.m = p.inv.n_children();
  std::size_t V = p.inv.n_words(), dH = p.d_H, l = words.size();
  t.wloc.resize(l);
  for (std::size_t q = 0; q < l; ++q) {
    if (words[q] >= V)
      throw std::out_of_range("viterbi_cyk: word id out of range");
    auto it = std::find(t.wlist.begin(), t.wlist.end(), words[q]);
    t.wloc[q] = it == t.wlist.end() ? t.wlist.size()
                                    : std::size_t(it - t.wlist.begin());
    if (it == t.wlist.end()) t.wlist.push_back(words[q]);
  }
  t.nW = t.wlist.size();
  std::size_t total = t.nN * t.nW * 2 * t.nW * t.m * t.m;
  if (total > (std::size_t(1) << 28))
    throw std::invalid_argument(
        "viterbi_cyk: dense rule table too large for this sentence/config");

  bool dirB = p.binding == BindingMode::D_with_B;
  bool dirC = p.binding == BindingMode::D_with_C;
  bool dirW = p.binding == BindingMode::D_with_Wq;
  // direction-resolved factors in exp space; D_alone folds p(D|H) into C
  Array EBt[2] = {Array({t.m, dH}), Array({t.m, dH})};
  Array EC[2] = {Array({dH, t.m}), Array({dH, t.m})};
  Array EW[2] = {Array({dH, t.nW}), Array({dH, t.nW})};
  for (int d = 0; d < 2; ++d)
    for (std::size_t H = 0; H < dH; ++H) {
      for (std::size_t B = 0; B < t.m; ++B)
        EBt[d].at2(B, H) = std::exp(dirB ? p.factor_B.at3(H, d, B)
                                         : p.factor_B.at2(H, B));
      double fold = p.binding == BindingMode::D_alone
                        ? std::exp(p.factor_D.at2(H, d))
                        : 1.0;
      for (std::size_t C = 0; C < t.m; ++C)
        EC[d].at2(H, C) = fold * std::exp(dirC ? p.factor_C.at3(H, d, C)
                                               : p.factor_C.at2(H, C));
      for (std::size_t w = 0; w < t.nW; ++w)
        EW[d].at2(H, w) =
            std::exp(dirW ? p.factor_w.at3(H, d, t.wlist[w])
                          : p.factor_w.at2(H, t.wlist[w]));
    }

  t.W = Array({t.nN, t.nW, 2, t.nW, t.m * t.m});
  std::vector<double> scaled(t.m * dH);
  for (std::size_t A = 0; A < t.nN; ++A)
    for (std::size_t wp = 0; wp < t.nW; ++wp)
      for (int d = 0; d < 2; ++d)
        for (std::size_t wq = 0; wq < t.nW; ++wq) {
          double* slab = t.W.data.data() +
                         (((A * t.nW + wp) * 2 + d) * t.nW + wq) * t.m * t.m;
          for (std::size_t B = 0; B < t.m; ++B)
            for (std::size_t H = 0; H < dH; ++H)
              scaled[B * dH + H] =
                  EBt[d].at2(B, H) *
                  std::exp(p.head_latent.at3(A, t.wlist[wp], H)) *
                  EW[d].at2(H, wq);
          kern::gemm(scaled.data(), EC[d].data.data(), slab, t.m, dH, t.m,
                     false);
          for (std::size_t x = 0; x < t.m * t.m; ++x)
            slab[x] = slab[x] > 0.0 ? std::log(slab[x]) : kNegInf;
        }
  return t;
}

struct VCell {
  Array s;                  // [m, w] max log score
  std::vector<int> bp;      // per (A, p): packed (k, d, B), -1 when none
};

struct VDep {
  std::vector<int> bp;      // per (d, A, wp, B): packed (C, q)
};

}  // namespace

ParseOutput viterbi_cyk(const NblParams& p,
                        const std::vector<std::size_t>& words) {
  if (words.size() < 2)
    throw std::invalid_argument("viterbi_cyk: need at least 2 words");
  std::size_t l = words.size(), nN = p.inv.n_N, m = p.inv.n_children();
  RuleTable rt = build_rule_table(p, words);

  auto sid = [&](std::size_t i, std::size_t j) {
    std::size_t w = j - i, off = 0;
    for (std::size_t w2 = 1; w2 < w; ++w2) off += l - w2 + 1;
    return off + i;
  };
  std::vector<VCell> cells(l * (l + 1) / 2);
  std::vector<VDep> deps(cells.size());
  // the dependent cache is direction-dependent; store per-direction bests
  std::vector<Array> dep_best0(cells.size()), dep_best1(cells.size());

  for (std::size_t w = 1; w <= l; ++w)
    for (std::size_t i = 0; i + w <= l; ++i) {
      std::size_t j = i + w, s = sid(i, j);
      VCell& cell = cells[s];
      cell.s = Array::full({m, w}, kNegInf);
      cell.bp.assign(m * w, -1);
      if (w == 1) {
        for (std::size_t t = nN; t < m; ++t) cell.s.at2(t, 0) = 0.0;
      } else {
        for (std::size_t k = i + 1; k < j; ++k)
          for (int d = 0; d < 2; ++d) {
            std::size_t hs = d == 0 ? sid(i, k) : sid(k, j);
            std::size_t ds = d == 0 ? sid(k, j) : sid(i, k);
            const Array& dbest = d == 0 ? dep_best0[ds] : dep_best1[ds];
            const VCell& head = cells[hs];
            std::size_t hw = d == 0 ? k - i : j - k;
            for (std::size_t A = 0; A < nN; ++A)
              for (std::size_t hp = 0; hp < hw; ++hp) {
                std::size_t pc = d == 0 ? hp : (k - i) + hp;
                std::size_t gp = i + pc;
                for (std::size_t B = 0; B < m; ++B) {
                  double sc = head.s.at2(B, hp);
                  if (sc == kNegInf) continue;
                  double db = dbest.at3(A, rt.wloc[gp], B);
                  if (db == kNegInf) continue;
                  sc += db;
                  if (sc > cell.s.at2(A, pc)) {
                    cell.s.at2(A, pc) = sc;
                    cell.bp[A * w + pc] = int(((k - i - 1) * 2 + d) * m + B);
                  }
                }
              }
          }
      }
      if (w < l) {
        // per-direction dependent cache for parents of this span
        for (int d = 0; d < 2; ++d) {
          Array& dst = d == 0 ? dep_best0[s] : dep_best1[s];
          dst = Array::full({nN, rt.nW, m}, kNegInf);
          VDep& D = deps[s];
          if (D.bp.empty()) D.bp.assign(2 * nN * rt.nW * m, -1);
          for (std::size_t A = 0; A < nN; ++A)
            for (std::size_t wp = 0; wp < rt.nW; ++wp)
              for (std::size_t B = 0; B < m; ++B) {
                double bst = kNegInf;
                int arg = -1;
                for (std::size_t C = 0; C < m; ++C)
                  for (std::size_t q = 0; q < w; ++q) {
                    double sc = cell.s.at2(C, q);
                    if (sc == kNegInf) continue;
                    sc += rt.slab(A, wp, d, rt.wloc[i + q])[B * m + C];
                    if (sc > bst) {
                      bst = sc;
                      arg = int(C * w + q);
                    }
                  }
                dst.at3(A, wp, B) = bst;
                D.bp[((std::size_t(d) * nN + A) * rt.nW + wp) * m + B] = arg;
              }
        }
      }
    }

  const VCell& top = cells[sid(0, l)];
  double best = kNegInf;
  std::size_t bp_p = 0, bp_A = 0;
  for (std::size_t pc = 0; pc < l; ++pc)
    for (std::size_t A = 0; A < nN; ++A) {
      double sc = top.s.at2(A, pc);
      if (sc == kNegInf) continue;
      sc += p.root_sym.at(A) + p.root_word.at2(A, words[pc]);
      if (sc > best) {
        best = sc;
        bp_p = pc;
        bp_A = A;
      }
    }
  if (best == kNegInf)
    throw std::runtime_error("viterbi_cyk: sentence has zero probability");

  // reconstruct the lexicalized tree from backpointers
  std::function<LexTreePtr(std::size_t, std::size_t, std::size_t, std::size_t)>
      rebuild = [&](std::size_t i, std::size_t j, std::size_t A,
                    std::size_t pc) -> LexTreePtr {
    if (j - i == 1) return make_leaf_node(i, A);
    int packed = cells[sid(i, j)].bp[A * (j - i) + pc];
    std::size_t B = std::size_t(packed) % m;
    int d = (std::size_t(packed) / m) % 2;
    std::size_t k = i + 1 + std::size_t(packed) / std::size_t(2 * m);
    std::size_t ds = d == 0 ? sid(k, j) : sid(i, k);
    std::size_t di = d == 0 ? k : i, dj = d == 0 ? j : k;
    std::size_t gp = i + pc;
    int darg =
        deps[ds].bp[((std::size_t(d) * nN + A) * rt.nW + rt.wloc[gp]) * m + B];
    std::size_t C = std::size_t(darg) / (dj - di);
    std::size_t q = std::size_t(darg) % (dj - di);
    std::size_t hp = d == 0 ? pc : pc - (k - i);
    std::size_t hi = d == 0 ? i : k, hj = d == 0 ? k : j;
    LexTreePtr headT = rebuild(hi, hj, B, hp);
    LexTreePtr depT = rebuild(di, dj, C, q);
    return d == 0 ? make_binary_node(A, kHeadLeft, headT, depT)
                  : make_binary_node(A, kHeadRight, depT, headT);
  };
  ParseOutput out;
  out.tree = rebuild(0, l, bp_A, bp_p);
  out.deps = extract_dependencies(out.tree);
  out.log_likelihood = best;
  return out;
}

SpanMarginals span_marginals(const NblParams& p,
                             const std::vector<std::size_t>& words) {
  std::size_t l = words.size();
  NblInputs in = wrap_params(p, words, false);
  auto pot = ad::make_leaf(Array({n_spans(l)}), true);
  auto root = inside_nbl(in, pot);
  ad::backward(root);
  SpanMarginals mu;
  mu.l = l;
  mu.mu = Array({l + 1, l + 1});
  for (std::size_t i = 0; i < l; ++i) mu.mu.at2(i, i + 1) = 1.0;
  for (std::size_t w = 2; w <= l; ++w)
    for (std::size_t i = 0; i + w <= l; ++i)
      mu.mu.at2(i, i + w) = pot->grad.at(span_index(i, i + w, l));
  return mu;
}

ArcMarginals arc_marginals(const NblParams& p,
                           const std::vector<std::size_t>& words) {
  std::size_t l = words.size();
  NblInputs in = wrap_params(p, words, false);
  auto arc_pot = ad::make_leaf(Array({l, l}), true);
  auto root_pot = ad::make_leaf(Array({l}), true);
  auto root = inside_nbl_exact(in, arc_pot, root_pot);
  ad::backward(root);
  ArcMarginals mu;
  mu.l = l;
  mu.arc = arc_pot->grad;
  mu.root = root_pot->grad;
  return mu;
}

std::vector<std::pair<std::size_t, std::size_t>> mbr_constituency(
    const SpanMarginals& mu) {
  std::size_t l = mu.l;
  if (l < 2) throw std::invalid_argument("mbr_constituency: need l >= 2");
  Array best({l + 1, l + 1});
  std::vector<std::size_t> split((l + 1) * (l + 1), 0);
  for (std::size_t w = 2; w <= l; ++w)
    for (std::size_t i = 0; i + w <= l; ++i) {
      std::size_t j = i + w;
      double bst = kNegInf;
      std::size_t arg = i + 1;
      for (std::size_t k = i + 1; k < j; ++k) {
        double sc = best.at2(i, k) + best.at2(k, j);
        if (sc > bst) {
          bst = sc;
          arg = k;
        }
      }
      best.at2(i, j) = bst + mu.at(i, j);
      split[i * (l + 1) + j] = arg;
    }
  std::vector<std::pair<std::size_t, std::size_t>> spans;
  std::function<void(std::size_t, std::size_t)> walk = [&](std::size_t i,
                                                           std::size_t j) {
    if (j - i < 2) return;
    spans.emplace_back(i, j);
    std::size_t k = split[i * (l + 1) + j];
    walk(i, k);
    walk(k, j);
  };
  walk(0, l);
  std::sort(spans.begin(), spans.end());
  return spans;
}

DependencySet mbr_dependency(const ArcMarginals& mu) {
  std::size_t l = mu.l;
  if (l < 2) throw std::invalid_argument("mbr_dependency: need l >= 2");
  // Eisner first-order: I = incomplete (arc just added), C = complete.
  // Suffix r = head on the left end, suffix f = head on the right end.
  Array Ir({l, l}), If({l, l}), Cr({l, l}), Cf({l, l});
  std::vector<int> bIr(l * l, -1), bIf(l * l, -1), bCr(l * l, -1),
      bCf(l * l, -1);
  for (std::size_t w = 1; w < l; ++w)
    for (std::size_t i = 0; i + w < l; ++i) {
      std::size_t j = i + w;
      double bi = kNegInf, bf = kNegInf;
      int ai = -1, af = -1;
      for (std::size_t k = i; k < j; ++k) {
        double base = Cr.at2(i, k) + Cf.at2(k + 1, j);
        if (base + mu.arc.at2(i, j) > bi) {
          bi = base + mu.arc.at2(i, j);
          ai = int(k);
        }
        if (base + mu.arc.at2(j, i) > bf) {
          bf = base + mu.arc.at2(j, i);
          af = int(k);
        }
      }
      Ir.at2(i, j) = bi;
      If.at2(i, j) = bf;
      bIr[i * l + j] = ai;
      bIf[i * l + j] = af;
      double br = kNegInf, bff = kNegInf;
      int ar = -1, aff = -1;
      for (std::size_t k = i + 1; k <= j; ++k) {
        double sc = Ir.at2(i, k) + Cr.at2(k, j);
        if (sc > br) {
          br = sc;
          ar = int(k);
        }
      }
      for (std::size_t k = i; k < j; ++k) {
        double sc = Cf.at2(i, k) + If.at2(k, j);
        if (sc > bff) {
          bff = sc;
          aff = int(k);
        }
      }
      Cr.at2(i, j) = br;
      Cf.at2(i, j) = bff;
      bCr[i * l + j] = ar;
      bCf[i * l + j] = aff;
    }

  double best = kNegInf;
  std::size_t root = 0;
  for (std::size_t r = 0; r < l; ++r) {
    double sc = Cf.at2(0, r) + Cr.at2(r, l - 1) + mu.root.at(r);
    if (sc > best) {
      best = sc;
      root = r;
    }
  }

  DependencySet out;
  out.root = root;
  std::function<void(char, std::size_t, std::size_t)> walk =
      [&](char kind, std::size_t i, std::size_t j) {
        if (i == j && (kind == 'r' || kind == 'f')) return;
        if (kind == 'r') {
          std::size_t k = std::size_t(bCr[i * l + j]);
          walk('R', i, k);
          walk('r', k, j);
        } else if (kind == 'f') {
          std::size_t k = std::size_t(bCf[i * l + j]);
          walk('f', i, k);
          walk('F', k, j);
        } else if (kind == 'R') {
          out.arcs.emplace_back(i, j);
          std::size_t k = std::size_t(bIr[i * l + j]);
          walk('r', i, k);
          walk('f', k + 1, j);
        } else {  // 'F': arc j -> i
          out.arcs.emplace_back(j, i);
          std::size_t k = std::size_t(bIf[i * l + j]);
          walk('r', i, k);
          walk('f', k + 1, j);
        }
      };
  walk('f', 0, root);
  walk('r', root, l - 1);
  std::sort(out.arcs.begin(), out.arcs.end());
  return out;
}

}  // namespace nbl
