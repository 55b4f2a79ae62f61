#include <algorithm>
#include <chrono>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "nbl/inside.hpp"
#include "nbl/kernels.hpp"

// Bilexical inside engines over explicit p(B,D,C|A,w_p) p(w_q|C) tables.
// Both cachings share the emission-weighted dependent sum c1 (Term C1-1,
// keyed by dependent span). The C1_2 variant additionally caches its
// contraction against the rule table (Term C1-2), keyed by dependent
// span x (head word, A, B), which removes the split-point rule lookup
// from the innermost loop. Charts are in log space; caches in shifted
// exponential space, as in the CPD engines. The adjoint sweep always
// runs (the measured quantity is forward + backward).
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

struct ZSpan {
  std::size_t i = 0, j = 0, w = 0;
  Array logS;  // m x w
  Array E;     // m x w, exp(logS - sh)
  double sh = 0.0, S = 0.0;
  Array val;   // nN x w (linear, pre-log)
  Array c1;    // m      (Term C1-1, shift sh)
};

struct ZState {
  std::size_t l = 0, m = 0, nN = 0, nW = 0;
  std::vector<std::size_t> wloc;   // position -> local word
  std::vector<std::size_t> wlist;  // local word -> global id
  Array EM[2];      // [nW, nN*m, m]: exp rule, row (A*m+B), col C
  Array EMT[2];     // [nW, m, nN*m]: EM transposed, C1_2 only
  Array Eemit;      // m x l: exp p(w_q|C) per position
  std::vector<ZSpan> spans;
  // Term C1-2, batched per width: C2w[d][w] is [nW, l-w+1, nN*m];
  // the row for (wv, i) is the contraction EM[d][wv] . c1 of span (i,i+w)
  std::vector<Array> C2w[2];
  double logZ = kNegInf;

  std::size_t sid(std::size_t i, std::size_t j) const {
    std::size_t w = j - i, off = 0;
    for (std::size_t w2 = 1; w2 < w; ++w2) off += l - w2 + 1;
    return off + i;
  }
  const double* c2_at(int d, const ZSpan& dep, std::size_t wv) const {
    std::size_t ncols = l - dep.w + 1;
    return C2w[d][dep.w].data.data() + (wv * ncols + dep.i) * nN * m;
  }
};

void fill_span_caches(ZState& st, ZSpan& sp) {
  std::size_t m = st.m;
  sp.E = Array({m, sp.w});
  for (std::size_t x = 0; x < sp.E.numel(); ++x)
    sp.E.data[x] =
        sp.logS.data[x] == kNegInf ? 0.0 : std::exp(sp.logS.data[x] - sp.sh);
  sp.c1 = Array({m});
  for (std::size_t C = 0; C < m; ++C) {
    double acc = 0.0;
    for (std::size_t q = 0; q < sp.w; ++q)
      acc += sp.E.at2(C, q) * st.Eemit.at2(C, sp.i + q);
    sp.c1.at(C) = acc;
  }
}

// One GEMM per (direction, head word) fills Term C1-2 for every span of
// the width at once: C1T rows are the spans' c1 vectors.
void fill_width_c2(ZState& st, std::size_t w) {
  std::size_t m = st.m, nN = st.nN, ncols = st.l - w + 1;
  Array c1t({ncols, m});
  for (std::size_t i = 0; i < ncols; ++i) {
    const ZSpan& sp = st.spans[st.sid(i, i + w)];
    std::copy(sp.c1.data.begin(), sp.c1.data.end(),
              c1t.data.begin() + i * m);
  }
  for (int d = 0; d < 2; ++d) {
    st.C2w[d][w] = Array({st.nW, ncols, nN * m});
    for (std::size_t wv = 0; wv < st.nW; ++wv)
      kern::gemm(c1t.data.data(), st.EMT[d].data.data() + wv * m * nN * m,
                 st.C2w[d][w].data.data() + wv * ncols * nN * m, ncols, m,
                 nN * m, false);
  }
}

}  // namespace

InsideResult inside_zhu(const ZhuParams& p,
                        const std::vector<std::size_t>& words,
                        ZhuCaching caching, ZhuGradients* grads) {
  if (words.size() < 2)
    throw std::invalid_argument("inside: sentences must have length >= 2");
  std::size_t l = words.size(), m = p.inv.n_children(), nN = p.inv.n_N;
  std::size_t V = p.inv.n_words();
  for (std::size_t w : words)
    if (w >= V) throw std::out_of_range("inside_zhu: word id out of range");
  bool c12 = caching == ZhuCaching::C1_2;

  auto t0 = Clock::now();
  ZState st;
  st.l = l;
  st.m = m;
  st.nN = nN;
  st.wloc.resize(l);
  for (std::size_t q = 0; q < l; ++q) {
    auto it = std::find(st.wlist.begin(), st.wlist.end(), words[q]);
    if (it == st.wlist.end()) {
      st.wloc[q] = st.wlist.size();
      st.wlist.push_back(words[q]);
    } else {
      st.wloc[q] = std::size_t(it - st.wlist.begin());
    }
  }
  st.nW = st.wlist.size();

  // per-sentence exponential-space rule and emission tables
  for (int d = 0; d < 2; ++d) {
    st.EM[d] = Array({st.nW, nN * m, m});
    for (std::size_t wv = 0; wv < st.nW; ++wv)
      for (std::size_t A = 0; A < nN; ++A)
        for (std::size_t B = 0; B < m; ++B)
          for (std::size_t C = 0; C < m; ++C)
            st.EM[d].data[((wv * nN + A) * m + B) * m + C] = std::exp(
                p.rule.data[(((A * V + st.wlist[wv]) * m + B) * 2 + d) * m +
                            C]);
    if (c12) {
      st.EMT[d] = Array({st.nW, m, nN * m});
      for (std::size_t wv = 0; wv < st.nW; ++wv)
        for (std::size_t r = 0; r < nN * m; ++r)
          for (std::size_t C = 0; C < m; ++C)
            st.EMT[d].data[(wv * m + C) * nN * m + r] =
                st.EM[d].data[(wv * nN * m + r) * m + C];
      st.C2w[d].resize(l + 1);
    }
  }
  st.Eemit = Array({m, l});
  for (std::size_t C = 0; C < m; ++C)
    for (std::size_t q = 0; q < l; ++q)
      st.Eemit.at2(C, q) = std::exp(p.emit.at2(C, words[q]));

  st.spans.resize(l * (l + 1) / 2);
  for (std::size_t w = 1; w <= l; ++w) {
    for (std::size_t i = 0; i + w <= l; ++i) {
      std::size_t j = i + w;
      ZSpan& sp = st.spans[st.sid(i, j)];
      sp.i = i;
      sp.j = j;
      sp.w = w;
      sp.logS = Array::full({m, w}, kNegInf);
      if (w == 1) {
        for (std::size_t t = nN; t < m; ++t) sp.logS.at2(t, 0) = 0.0;
        sp.sh = 0.0;
      } else {
        double S = kNegInf;
        for (std::size_t k = i + 1; k < j; ++k)
          S = std::max(S, st.spans[st.sid(i, k)].sh +
                              st.spans[st.sid(k, j)].sh);
        sp.S = S;
        sp.val = Array({nN, w});
        if (c12) {
          for (std::size_t k = i + 1; k < j; ++k) {
            const ZSpan& left = st.spans[st.sid(i, k)];
            const ZSpan& right = st.spans[st.sid(k, j)];
            double scale = std::exp(left.sh + right.sh - S);
            if (scale == 0.0) continue;
            // head-left: p in [i,k), dependent span (k,j)
            for (std::size_t pc = 0; pc < left.w; ++pc) {
              const double* c2 = st.c2_at(0, right, st.wloc[i + pc]);
              for (std::size_t A = 0; A < nN; ++A) {
                double acc = 0.0;
                for (std::size_t B = 0; B < m; ++B)
                  acc += left.E.at2(B, pc) * c2[A * m + B];
                sp.val.at2(A, pc) += scale * acc;
              }
            }
            // head-right: p in [k,j), dependent span (i,k)
            for (std::size_t pc = 0; pc < right.w; ++pc) {
              const double* c2 = st.c2_at(1, left, st.wloc[k + pc]);
              for (std::size_t A = 0; A < nN; ++A) {
                double acc = 0.0;
                for (std::size_t B = 0; B < m; ++B)
                  acc += right.E.at2(B, pc) * c2[A * m + B];
                sp.val.at2(A, left.w + pc) += scale * acc;
              }
            }
          }
        } else {
          // C1_1: contract the rule table against c1 per (span, p)
          std::size_t K = w - 1;
          Array C1s[2] = {Array({m, K}), Array({m, K})};
          for (std::size_t k = i + 1; k < j; ++k) {
            const ZSpan& left = st.spans[st.sid(i, k)];
            const ZSpan& right = st.spans[st.sid(k, j)];
            double scale = std::exp(left.sh + right.sh - S);
            for (std::size_t C = 0; C < m; ++C) {
              C1s[0].at2(C, k - i - 1) = scale * right.c1.at(C);
              C1s[1].at2(C, k - i - 1) = scale * left.c1.at(C);
            }
          }
          Array Y({nN * m, K});
          for (std::size_t pc = 0; pc < w; ++pc) {
            std::size_t wv = st.wloc[i + pc];
            // head-left uses splits k > p
            kern::gemm(st.EM[0].data.data() + wv * nN * m * m,
                       C1s[0].data.data(), Y.data.data(), nN * m, m, K, false);
            for (std::size_t k = i + pc + 1; k < j; ++k) {
              const ZSpan& left = st.spans[st.sid(i, k)];
              for (std::size_t A = 0; A < nN; ++A) {
                double acc = 0.0;
                for (std::size_t B = 0; B < m; ++B)
                  acc += Y.at2(A * m + B, k - i - 1) * left.E.at2(B, pc);
                sp.val.at2(A, pc) += acc;
              }
            }
            // head-right uses splits k <= p
            kern::gemm(st.EM[1].data.data() + wv * nN * m * m,
                       C1s[1].data.data(), Y.data.data(), nN * m, m, K, false);
            for (std::size_t k = i + 1; k <= i + pc; ++k) {
              const ZSpan& right = st.spans[st.sid(k, j)];
              for (std::size_t A = 0; A < nN; ++A) {
                double acc = 0.0;
                for (std::size_t B = 0; B < m; ++B)
                  acc += Y.at2(A * m + B, k - i - 1) *
                         right.E.at2(B, i + pc - k);
                sp.val.at2(A, pc) += acc;
              }
            }
          }
        }
        for (std::size_t A = 0; A < nN; ++A)
          for (std::size_t pc = 0; pc < w; ++pc) {
            double v = sp.val.at2(A, pc);
            sp.logS.at2(A, pc) = v > 0.0 ? std::log(v) + sp.S : kNegInf;
          }
        double mx = kern::max_of(sp.logS.data.data(), sp.logS.numel());
        sp.sh = mx == kNegInf ? 0.0 : mx;
      }
      if (w < l) fill_span_caches(st, sp);
    }
    if (c12 && w < l) fill_width_c2(st, w);
  }

  const ZSpan& top = st.spans[st.sid(0, l)];
  double z = kNegInf;
  for (std::size_t A = 0; A < nN; ++A)
    for (std::size_t pc = 0; pc < l; ++pc)
      logadd(z, top.logS.at2(A, pc) + p.root_sym.at(A) +
                    p.root_word.at2(A, words[pc]));
  st.logZ = z;

  // adjoint sweep (mirrors the forward; always run so the timed cost is
  // forward + backward)
  Array gEM[2] = {Array({st.nW, nN * m, m}), Array({st.nW, nN * m, m})};
  Array gEemit({m, l});
  Array gRootSym({nN}), gRootWord({nN, V});
  std::vector<Array> gLogS(st.spans.size()), gE(st.spans.size()),
      gc1(st.spans.size());
  std::vector<Array> gC2w[2];  // adjoints of Term C1-2, per width (C1_2)
  for (std::size_t s = 0; s < st.spans.size(); ++s) {
    const ZSpan& sp = st.spans[s];
    gLogS[s] = Array({m, sp.w});
    if (sp.w < l) {
      gE[s] = Array({m, sp.w});
      gc1[s] = Array({m});
    }
  }
  if (c12)
    for (int d = 0; d < 2; ++d) {
      gC2w[d].resize(l);
      for (std::size_t w = 1; w < l; ++w)
        gC2w[d][w] = Array({st.nW, l - w + 1, nN * m});
    }
  auto gc2_at = [&](int d, const ZSpan& dep, std::size_t wv) {
    std::size_t ncols = l - dep.w + 1;
    return gC2w[d][dep.w].data.data() + (wv * ncols + dep.i) * nN * m;
  };
  if (z != kNegInf) {
    for (std::size_t A = 0; A < nN; ++A)
      for (std::size_t pc = 0; pc < l; ++pc) {
        double s0 = top.logS.at2(A, pc);
        if (s0 == kNegInf) continue;
        double gw = std::exp(s0 + p.root_sym.at(A) +
                             p.root_word.at2(A, words[pc]) - z);
        gLogS[st.sid(0, l)].at2(A, pc) += gw;
        gRootSym.at(A) += gw;
        gRootWord.at2(A, words[pc]) += gw;
      }
    for (std::size_t w = l; w >= 1; --w) {
      if (c12 && w < l) {
        // batched Term C1-2 adjoint: gc1 += gC2 . EM and gEM += the
        // transposed product of the spans' c1 with gC2, per (d, word)
        std::size_t ncols = l - w + 1;
        Array gc1rows({ncols, m});
        Array c1cols({m, ncols});
        for (std::size_t i2 = 0; i2 < ncols; ++i2) {
          const Array& c1 = st.spans[st.sid(i2, i2 + w)].c1;
          for (std::size_t C = 0; C < m; ++C) c1cols.at2(C, i2) = c1.at(C);
        }
        Array t({m, nN * m});
        for (int d = 0; d < 2; ++d)
          for (std::size_t wv = 0; wv < st.nW; ++wv) {
            const double* g = gC2w[d][w].data.data() + wv * ncols * nN * m;
            kern::gemm(g, st.EM[d].data.data() + wv * nN * m * m,
                       gc1rows.data.data(), ncols, nN * m, m, true);
            kern::gemm(c1cols.data.data(), g, t.data.data(), m, ncols,
                       nN * m, false);
            double* gem = gEM[d].data.data() + wv * nN * m * m;
            for (std::size_t r = 0; r < nN * m; ++r)
              for (std::size_t C = 0; C < m; ++C)
                gem[r * m + C] += t.data[C * nN * m + r];
          }
        for (std::size_t i2 = 0; i2 < ncols; ++i2) {
          double* dst = gc1[st.sid(i2, i2 + w)].data.data();
          const double* src = gc1rows.data.data() + i2 * m;
          for (std::size_t C = 0; C < m; ++C) dst[C] += src[C];
        }
      }
      for (std::size_t i = 0; i + w <= l; ++i) {
        std::size_t j = i + w, s = st.sid(i, j);
        ZSpan& sp = st.spans[s];
        if (w < l) {
          // finalize own adjoints: c1 -> E -> logS
          for (std::size_t C = 0; C < m; ++C) {
            double gcv = gc1[s].at(C);
            if (gcv == 0.0) continue;
            for (std::size_t q = 0; q < sp.w; ++q) {
              gE[s].at2(C, q) += gcv * st.Eemit.at2(C, sp.i + q);
              gEemit.at2(C, sp.i + q) += gcv * sp.E.at2(C, q);
            }
          }
          for (std::size_t x = 0; x < gE[s].numel(); ++x)
            gLogS[s].data[x] += gE[s].data[x] * sp.E.data[x];
        }
        if (w >= 2) {
          Array gval({nN, w});
          for (std::size_t A = 0; A < nN; ++A)
            for (std::size_t pc = 0; pc < w; ++pc) {
              double gs = gLogS[s].at2(A, pc);
              if (gs != 0.0 && sp.val.at2(A, pc) > 0.0)
                gval.at2(A, pc) = gs / sp.val.at2(A, pc);
            }
          if (c12) {
            for (std::size_t k = i + 1; k < j; ++k) {
              std::size_t sl = st.sid(i, k), sr = st.sid(k, j);
              const ZSpan& left = st.spans[sl];
              const ZSpan& right = st.spans[sr];
              double scale = std::exp(left.sh + right.sh - sp.S);
              if (scale == 0.0) continue;
              for (std::size_t pc = 0; pc < left.w; ++pc) {
                std::size_t wv = st.wloc[i + pc];
                const double* c2 = st.c2_at(0, right, wv);
                double* gc2 = gc2_at(0, right, wv);
                for (std::size_t A = 0; A < nN; ++A) {
                  double gv = scale * gval.at2(A, pc);
                  if (gv == 0.0) continue;
                  for (std::size_t B = 0; B < m; ++B) {
                    gE[sl].at2(B, pc) += gv * c2[A * m + B];
                    gc2[A * m + B] += gv * left.E.at2(B, pc);
                  }
                }
              }
              for (std::size_t pc = 0; pc < right.w; ++pc) {
                std::size_t wv = st.wloc[k + pc];
                const double* c2 = st.c2_at(1, left, wv);
                double* gc2 = gc2_at(1, left, wv);
                for (std::size_t A = 0; A < nN; ++A) {
                  double gv = scale * gval.at2(A, left.w + pc);
                  if (gv == 0.0) continue;
                  for (std::size_t B = 0; B < m; ++B) {
                    gE[sr].at2(B, pc) += gv * c2[A * m + B];
                    gc2[A * m + B] += gv * right.E.at2(B, pc);
                  }
                }
              }
            }
          } else {
            std::size_t K = w - 1;
            Array C1s[2] = {Array({m, K}), Array({m, K})};
            std::vector<double> scales(K);
            for (std::size_t k = i + 1; k < j; ++k) {
              const ZSpan& left = st.spans[st.sid(i, k)];
              const ZSpan& right = st.spans[st.sid(k, j)];
              double scale = std::exp(left.sh + right.sh - sp.S);
              scales[k - i - 1] = scale;
              for (std::size_t C = 0; C < m; ++C) {
                C1s[0].at2(C, k - i - 1) = scale * right.c1.at(C);
                C1s[1].at2(C, k - i - 1) = scale * left.c1.at(C);
              }
            }
            Array Y({nN * m, K}), gY({nN * m, K});
            for (std::size_t pc = 0; pc < w; ++pc) {
              std::size_t wv = st.wloc[i + pc];
              for (int d = 0; d < 2; ++d) {
                kern::gemm(st.EM[d].data.data() + wv * nN * m * m,
                           C1s[d].data.data(), Y.data.data(), nN * m, m, K,
                           false);
                std::fill(gY.data.begin(), gY.data.end(), 0.0);
                bool any = false;
                if (d == 0) {
                  for (std::size_t k = i + pc + 1; k < j; ++k) {
                    const ZSpan& left = st.spans[st.sid(i, k)];
                    for (std::size_t A = 0; A < nN; ++A) {
                      double gv = gval.at2(A, pc);
                      if (gv == 0.0) continue;
                      any = true;
                      for (std::size_t B = 0; B < m; ++B) {
                        gY.at2(A * m + B, k - i - 1) +=
                            gv * left.E.at2(B, pc);
                        gE[st.sid(i, k)].at2(B, pc) +=
                            gv * Y.at2(A * m + B, k - i - 1);
                      }
                    }
                  }
                } else {
                  for (std::size_t k = i + 1; k <= i + pc; ++k) {
                    const ZSpan& right = st.spans[st.sid(k, j)];
                    for (std::size_t A = 0; A < nN; ++A) {
                      double gv = gval.at2(A, pc);
                      if (gv == 0.0) continue;
                      any = true;
                      for (std::size_t B = 0; B < m; ++B) {
                        gY.at2(A * m + B, k - i - 1) +=
                            gv * right.E.at2(B, i + pc - k);
                        gE[st.sid(k, j)].at2(B, i + pc - k) +=
                            gv * Y.at2(A * m + B, k - i - 1);
                      }
                    }
                  }
                }
                if (!any) continue;
                // gEM += gY . C1s^T ; gC1s += EM^T . gY -> per-column c1
                for (std::size_t r = 0; r < nN * m; ++r)
                  for (std::size_t kc = 0; kc < K; ++kc) {
                    double gy = gY.at2(r, kc);
                    if (gy == 0.0) continue;
                    const double* em =
                        st.EM[d].data.data() + (wv * nN * m + r) * m;
                    double* gem =
                        gEM[d].data.data() + (wv * nN * m + r) * m;
                    std::size_t k = i + 1 + kc;
                    std::size_t dep = d == 0 ? st.sid(k, j) : st.sid(i, k);
                    for (std::size_t C = 0; C < m; ++C) {
                      gem[C] += gy * C1s[d].at2(C, kc);
                      gc1[dep].at(C) += gy * em[C] * scales[kc];
                    }
                  }
              }
            }
          }
        }
      }
      if (w == 1) break;
    }
  }
  double secs = secs_since(t0);

  if (grads) {
    grads->root_sym = gRootSym;
    grads->root_word = gRootWord;
    grads->rule = Array(p.rule.shape);
    grads->emit = Array(p.emit.shape);
    for (int d = 0; d < 2; ++d)
      for (std::size_t wv = 0; wv < st.nW; ++wv)
        for (std::size_t A = 0; A < nN; ++A)
          for (std::size_t B = 0; B < m; ++B)
            for (std::size_t C = 0; C < m; ++C) {
              double ge = gEM[d].data[((wv * nN + A) * m + B) * m + C];
              if (ge == 0.0) continue;
              std::size_t ix =
                  (((A * V + st.wlist[wv]) * m + B) * 2 + d) * m + C;
              grads->rule.data[ix] += ge * std::exp(p.rule.data[ix]);
            }
    for (std::size_t C = 0; C < m; ++C)
      for (std::size_t q = 0; q < l; ++q)
        grads->emit.at2(C, words[q]) +=
            gEemit.at2(C, q) * st.Eemit.at2(C, q);
  }

  return {st.logZ, c12 ? "zhu_c1_2" : "zhu_c1_1", secs, 0};
}

}  // namespace nbl
