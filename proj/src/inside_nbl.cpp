#include <chrono>
#include <cmath>
#include <memory>
#include <stdexcept>
#include <vector>

#include "nbl/inside.hpp"
#include "nbl/kernels.hpp"

// CPD-factored inside engines. Charts are kept in log space; the
// per-span head-side (D1-1 style) and dependent-side (D1-2 style)
// caches are kept in exponential space under a per-span max shift, so
// cache fills are plain GEMMs and the split-point combination rescales
// per split. Shifts cancel exactly, so treating them as constants in
// the adjoint sweep is exact, not approximate.
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

void require_shape(const ad::NodePtr& n, std::vector<std::size_t> want,
                   const char* name) {
  if (!n) throw std::invalid_argument(std::string(name) + ": missing input");
  if (n->value.shape != want)
    throw std::invalid_argument(std::string(name) + ": shape mismatch, got " +
                                n->value.shape_str() + " want " +
                                Array(want).shape_str());
}

// per-sentence effective tables in exponential space, direction-resolved
struct Eff {
  std::size_t l = 0, m = 0, nN = 0, dH = 0, V = 0;
  BindingMode binding = BindingMode::D_with_C;
  std::vector<std::size_t> words;
  Array EB[2];  // dH x m
  Array EC[2];  // dH x m (factor_D folded in when D_alone)
  Array EW[2];  // dH x l (gathered per position)
  Array EpH;    // l x nN x dH
};

Eff build_eff(const NblInputs& in) {
  Eff e;
  e.binding = in.binding;
  e.nN = in.n_N;
  e.m = in.n_N + in.n_P;
  e.dH = in.d_H;
  e.words = in.words;
  e.l = in.words.size();
  if (e.l < 2)
    throw std::invalid_argument("inside: sentences must have length >= 2");
  std::size_t m = e.m, dH = e.dH, l = e.l;

  const Array& fw = in.factor_w->value;
  e.V = fw.shape.back();
  require_shape(in.root_sym, {e.nN}, "root_sym");
  require_shape(in.root_word, {e.nN, l}, "root_word");
  require_shape(in.head_latent, {l, e.nN, dH}, "head_latent");
  bool bB = in.binding == BindingMode::D_with_B;
  bool bC = in.binding == BindingMode::D_with_C;
  bool bW = in.binding == BindingMode::D_with_Wq;
  require_shape(in.factor_B,
                bB ? std::vector<std::size_t>{dH, 2, m}
                   : std::vector<std::size_t>{dH, m},
                "factor_B");
  require_shape(in.factor_C,
                bC ? std::vector<std::size_t>{dH, 2, m}
                   : std::vector<std::size_t>{dH, m},
                "factor_C");
  require_shape(in.factor_w,
                bW ? std::vector<std::size_t>{dH, 2, e.V}
                   : std::vector<std::size_t>{dH, e.V},
                "factor_w");
  if (in.binding == BindingMode::D_alone)
    require_shape(in.factor_D, {dH, 2}, "factor_D");
  for (std::size_t w : in.words)
    if (w >= e.V)
      throw std::out_of_range("inside: word id " + std::to_string(w) +
                              " outside factor_w columns");

  const Array& fB = in.factor_B->value;
  const Array& fC = in.factor_C->value;
  for (int d = 0; d < 2; ++d) {
    e.EB[d] = Array({dH, m});
    e.EC[d] = Array({dH, m});
    e.EW[d] = Array({dH, l});
    for (std::size_t h = 0; h < dH; ++h) {
      for (std::size_t b = 0; b < m; ++b)
        e.EB[d].at2(h, b) = std::exp(bB ? fB.at3(h, d, b) : fB.at2(h, b));
      for (std::size_t c = 0; c < m; ++c) {
        double v = bC ? fC.at3(h, d, c) : fC.at2(h, c);
        if (in.binding == BindingMode::D_alone)
          v += in.factor_D->value.at2(h, d);
        e.EC[d].at2(h, c) = std::exp(v);
      }
      for (std::size_t q = 0; q < l; ++q)
        e.EW[d].at2(h, q) =
            std::exp(bW ? fw.at3(h, d, in.words[q]) : fw.at2(h, in.words[q]));
    }
  }
  e.EpH = in.head_latent->value;
  for (auto& v : e.EpH.data) v = std::exp(v);
  return e;
}

// Scatter exp-space effective-table adjoints back into the log-space
// parameter node gradients (chain rule d/d log x = x * d/d exp).
void scatter_eff_grads(const NblInputs& in, const Eff& e, const Array gEB[2],
                       const Array gEC[2], const Array gEW[2],
                       const Array& gEpH) {
  std::size_t m = e.m, dH = e.dH, l = e.l;
  bool bB = in.binding == BindingMode::D_with_B;
  bool bC = in.binding == BindingMode::D_with_C;
  bool bW = in.binding == BindingMode::D_with_Wq;
  if (in.factor_B->requires_grad) {
    Array& g = in.factor_B->ensure_grad();
    for (std::size_t h = 0; h < dH; ++h)
      for (std::size_t b = 0; b < m; ++b)
        for (int d = 0; d < 2; ++d) {
          double v = gEB[d].at2(h, b) * e.EB[d].at2(h, b);
          if (bB)
            g.at3(h, d, b) += v;
          else
            g.at2(h, b) += v;
        }
  }
  if (in.factor_C->requires_grad) {
    Array& g = in.factor_C->ensure_grad();
    for (std::size_t h = 0; h < dH; ++h)
      for (std::size_t c = 0; c < m; ++c)
        for (int d = 0; d < 2; ++d) {
          double v = gEC[d].at2(h, c) * e.EC[d].at2(h, c);
          if (bC)
            g.at3(h, d, c) += v;
          else
            g.at2(h, c) += v;
        }
  }
  if (in.binding == BindingMode::D_alone && in.factor_D->requires_grad) {
    Array& g = in.factor_D->ensure_grad();
    for (std::size_t h = 0; h < dH; ++h)
      for (int d = 0; d < 2; ++d) {
        double acc = 0.0;
        for (std::size_t c = 0; c < m; ++c)
          acc += gEC[d].at2(h, c) * e.EC[d].at2(h, c);
        g.at2(h, d) += acc;
      }
  }
  if (in.factor_w->requires_grad) {
    Array& g = in.factor_w->ensure_grad();
    for (std::size_t h = 0; h < dH; ++h)
      for (std::size_t q = 0; q < l; ++q)
        for (int d = 0; d < 2; ++d) {
          double v = gEW[d].at2(h, q) * e.EW[d].at2(h, q);
          if (bW)
            g.at3(h, d, e.words[q]) += v;
          else
            g.at2(h, e.words[q]) += v;
        }
  }
  if (in.head_latent->requires_grad) {
    Array& g = in.head_latent->ensure_grad();
    for (std::size_t i = 0; i < gEpH.numel(); ++i)
      g.data[i] += gEpH.data[i] * e.EpH.data[i];
  }
}

struct SpanGrid {
  std::size_t l;
  explicit SpanGrid(std::size_t l_) : l(l_) {}
  std::size_t count() const { return l * (l + 1) / 2; }
  std::size_t sid(std::size_t i, std::size_t j) const {
    std::size_t w = j - i, off = 0;
    for (std::size_t w2 = 1; w2 < w; ++w2) off += l - w2 + 1;
    return off + i;
  }
};

struct Span {
  std::size_t i = 0, j = 0, w = 0;
  Array logS;   // m x w
  double sh = 0.0;
  Array Eh[2];  // dH x w      head-side cache (shift sh)
  Array Ed[2];  // dH          dep-side cache, q pre-summed (fast engine)
  Array Edq[2]; // dH x w      dep-side cache, q resolved (exact engine)
  Array val;    // nN x w      linear-space cell value pre-log
  Array inner;  // dH x w
  double S = 0.0;
};

Array exp_span(const Span& sp, std::size_t m) {
  Array E({m, sp.w});
  for (std::size_t x = 0; x < E.numel(); ++x)
    E.data[x] = sp.logS.data[x] == kNegInf
                    ? 0.0
                    : std::exp(sp.logS.data[x] - sp.sh);
  return E;
}

void init_span(Span& sp, std::size_t i, std::size_t j, std::size_t m,
               std::size_t nN) {
  sp.i = i;
  sp.j = j;
  sp.w = j - i;
  sp.logS = Array::full({m, sp.w}, kNegInf);
  if (sp.w == 1) {
    for (std::size_t t = nN; t < m; ++t) sp.logS.at2(t, 0) = 0.0;
    sp.sh = 0.0;
  }
}

void set_shift(Span& sp) {
  double mx = kern::max_of(sp.logS.data.data(), sp.logS.numel());
  sp.sh = mx == kNegInf ? 0.0 : mx;
}

// fills Eh (both engines) and Ed or Edq depending on `resolved`
void fill_caches(Span& sp, const Eff& e, bool resolved) {
  Array E = exp_span(sp, e.m);
  for (int d = 0; d < 2; ++d) {
    sp.Eh[d] = Array({e.dH, sp.w});
    kern::gemm(e.EB[d].data.data(), E.data.data(), sp.Eh[d].data.data(), e.dH,
               e.m, sp.w, false);
    Array Y({e.dH, sp.w});
    kern::gemm(e.EC[d].data.data(), E.data.data(), Y.data.data(), e.dH, e.m,
               sp.w, false);
    if (resolved) {
      sp.Edq[d] = Array({e.dH, sp.w});
      for (std::size_t h = 0; h < e.dH; ++h)
        for (std::size_t q = 0; q < sp.w; ++q)
          sp.Edq[d].at2(h, q) = Y.at2(h, q) * e.EW[d].at2(h, sp.i + q);
    } else {
      sp.Ed[d] = Array({e.dH});
      for (std::size_t h = 0; h < e.dH; ++h) {
        double acc = 0.0;
        for (std::size_t q = 0; q < sp.w; ++q)
          acc += Y.at2(h, q) * e.EW[d].at2(h, sp.i + q);
        sp.Ed[d].at(h) = acc;
      }
    }
  }
}

// shared log-of-val finalization: logS = log(val) + S (+ pot)
void finalize_cell(Span& sp, const Eff& e, double pot) {
  sp.val = Array({e.nN, sp.w});
  for (std::size_t pc = 0; pc < sp.w; ++pc) {
    const double* ph = e.EpH.data.data() + ((sp.i + pc) * e.nN) * e.dH;
    for (std::size_t A = 0; A < e.nN; ++A) {
      double acc = 0.0;
      for (std::size_t h = 0; h < e.dH; ++h)
        acc += ph[A * e.dH + h] * sp.inner.at2(h, pc);
      sp.val.at2(A, pc) = acc;
      sp.logS.at2(A, pc) = acc > 0.0 ? std::log(acc) + sp.S + pot : kNegInf;
    }
  }
}

struct ForwardState {
  Eff eff;
  SpanGrid grid{0};
  std::vector<Span> spans;
  double logZ = kNegInf;
};

double root_combine(const ForwardState& st, const Array& rs, const Array& rw,
                    const double* root_pot) {
  const Span& top = st.spans[st.grid.sid(0, st.eff.l)];
  double z = kNegInf;
  for (std::size_t A = 0; A < st.eff.nN; ++A)
    for (std::size_t p = 0; p < st.eff.l; ++p)
      logadd(z, top.logS.at2(A, p) + rs.at(A) + rw.at2(A, p) +
                    (root_pot ? root_pot[p] : 0.0));
  return z;
}

// distributes d logZ / d s at the root; also root-parameter grads
void root_backward(const ForwardState& st, const NblInputs& in,
                   const ad::NodePtr& root_pot, double g, Array& gTop) {
  const Span& top = st.spans[st.grid.sid(0, st.eff.l)];
  const Array& rs = in.root_sym->value;
  const Array& rw = in.root_word->value;
  for (std::size_t A = 0; A < st.eff.nN; ++A)
    for (std::size_t p = 0; p < st.eff.l; ++p) {
      double s = top.logS.at2(A, p);
      if (s == kNegInf) continue;
      double pot = root_pot ? root_pot->value.at(p) : 0.0;
      double w = g * std::exp(s + rs.at(A) + rw.at2(A, p) + pot - st.logZ);
      gTop.at2(A, p) += w;
      if (in.root_sym->requires_grad) in.root_sym->ensure_grad().at(A) += w;
      if (in.root_word->requires_grad)
        in.root_word->ensure_grad().at2(A, p) += w;
      if (root_pot && root_pot->requires_grad)
        root_pot->ensure_grad().at(p) += w;
    }
}

// converts accumulated cache adjoints of one span into (a) adjoints of
// its own log chart entries and (b) effective-table gradients
void cache_backward(const Span& sp, const Eff& e, const Array gEh[2],
                    const Array* gEd, const Array* gEdq, Array& gLogS,
                    Array gEB[2], Array gEC[2], Array gEW[2]) {
  Array E = exp_span(sp, e.m);
  Array gE({e.m, sp.w});
  for (int d = 0; d < 2; ++d) {
    // Eh[d] = EB[d] * E
    for (std::size_t h = 0; h < e.dH; ++h)
      for (std::size_t p = 0; p < sp.w; ++p) {
        double gh = gEh[d].at2(h, p);
        if (gh == 0.0) continue;
        for (std::size_t b = 0; b < e.m; ++b) {
          gE.at2(b, p) += e.EB[d].at2(h, b) * gh;
          gEB[d].at2(h, b) += gh * E.at2(b, p);
        }
      }
    // Ed[d][h] = sum_c sum_q EC[d][h,c] E[c,q] EW[d][h, i+q]
    // Edq[d][h,q] = sum_c EC[d][h,c] E[c,q] EW[d][h, i+q]
    for (std::size_t h = 0; h < e.dH; ++h)
      for (std::size_t q = 0; q < sp.w; ++q) {
        double gd = gEdq ? gEdq[d].at2(h, q) : gEd[d].at(h);
        if (gd == 0.0) continue;
        double ew = e.EW[d].at2(h, sp.i + q);
        double yq = 0.0;  // sum_c EC[h,c] E[c,q]
        for (std::size_t c = 0; c < e.m; ++c) {
          double ec = e.EC[d].at2(h, c);
          yq += ec * E.at2(c, q);
          gE.at2(c, q) += gd * ec * ew;
          gEC[d].at2(h, c) += gd * E.at2(c, q) * ew;
        }
        gEW[d].at2(h, sp.i + q) += gd * yq;
      }
  }
  if (sp.w >= 2)
    for (std::size_t x = 0; x < gE.numel(); ++x)
      gLogS.data[x] += gE.data[x] * E.data[x];
}

}  // namespace

NblInputs wrap_params(const NblParams& p, const std::vector<std::size_t>& words,
                      bool requires_grad) {
  std::size_t l = words.size(), nN = p.inv.n_N;
  NblInputs in;
  in.binding = p.binding;
  in.n_N = nN;
  in.n_P = p.inv.n_P;
  in.d_H = p.d_H;
  in.words = words;
  in.root_sym = ad::make_leaf(p.root_sym, requires_grad);
  Array rw({nN, l});
  Array hl({l, nN, p.d_H});
  for (std::size_t pos = 0; pos < l; ++pos)
    for (std::size_t A = 0; A < nN; ++A) {
      rw.at2(A, pos) = p.root_word.at2(A, words[pos]);
      for (std::size_t h = 0; h < p.d_H; ++h)
        hl.at3(pos, A, h) = p.head_latent.at3(A, words[pos], h);
    }
  in.root_word = ad::make_leaf(rw, requires_grad);
  in.head_latent = ad::make_leaf(hl, requires_grad);
  in.factor_B = ad::make_leaf(p.factor_B, requires_grad);
  in.factor_C = ad::make_leaf(p.factor_C, requires_grad);
  in.factor_w = ad::make_leaf(p.factor_w, requires_grad);
  if (p.binding == BindingMode::D_alone)
    in.factor_D = ad::make_leaf(p.factor_D, requires_grad);
  return in;
}

ad::NodePtr inside_nbl(const NblInputs& in, const ad::NodePtr& span_pot,
                       InsideResult* info) {
  auto st = std::make_shared<ForwardState>();
  st->eff = build_eff(in);
  const Eff& e = st->eff;
  std::size_t l = e.l;
  if (span_pot) require_shape(span_pot, {n_spans(l)}, "span_pot");
  auto t0 = Clock::now();
  st->grid = SpanGrid(l);
  st->spans.resize(st->grid.count());

  for (std::size_t w = 1; w <= l; ++w)
    for (std::size_t i = 0; i + w <= l; ++i) {
      std::size_t j = i + w;
      Span& sp = st->spans[st->grid.sid(i, j)];
      init_span(sp, i, j, e.m, e.nN);
      if (w >= 2) {
        // split shift over sh(i,k) + sh(k,j)
        double S = kNegInf;
        for (std::size_t k = i + 1; k < j; ++k)
          S = std::max(S, st->spans[st->grid.sid(i, k)].sh +
                              st->spans[st->grid.sid(k, j)].sh);
        sp.S = S;
        sp.inner = Array({e.dH, w});
        for (std::size_t k = i + 1; k < j; ++k) {
          const Span& left = st->spans[st->grid.sid(i, k)];
          const Span& right = st->spans[st->grid.sid(k, j)];
          double scale = std::exp(left.sh + right.sh - S);
          if (scale == 0.0) continue;
          for (std::size_t h = 0; h < e.dH; ++h) {
            double dr = scale * right.Ed[0].at(h);
            if (dr != 0.0)
              for (std::size_t pc = 0; pc < left.w; ++pc)
                sp.inner.at2(h, pc) += dr * left.Eh[0].at2(h, pc);
            double dl = scale * left.Ed[1].at(h);
            if (dl != 0.0)
              for (std::size_t pc = 0; pc < right.w; ++pc)
                sp.inner.at2(h, left.w + pc) += dl * right.Eh[1].at2(h, pc);
          }
        }
        double pot =
            span_pot ? span_pot->value.at(span_index(i, j, l)) : 0.0;
        finalize_cell(sp, e, pot);
        set_shift(sp);
      }
      if (w < l) fill_caches(sp, e, false);
    }
  st->logZ = root_combine(*st, in.root_sym->value, in.root_word->value, nullptr);
  if (info) {
    info->log_likelihood = st->logZ;
    info->variant = "nbl";
    info->seconds = secs_since(t0);
  }

  std::vector<ad::NodePtr> inputs = {in.root_sym,  in.root_word,
                                     in.head_latent, in.factor_B,
                                     in.factor_C,  in.factor_w};
  if (in.factor_D) inputs.push_back(in.factor_D);
  if (span_pot) inputs.push_back(span_pot);
  NblInputs cap = in;
  ad::NodePtr pot_cap = span_pot;

  return ad::make_node(
      Array::scalar(st->logZ), inputs,
      [st, cap, pot_cap](ad::Node& n) {
        const Eff& e = st->eff;
        double g = n.grad.data[0];
        if (g == 0.0 || st->logZ == kNegInf) return;
        std::size_t l = e.l;
        std::vector<Array> gLogS(st->spans.size());
        std::vector<Array> gEh(st->spans.size() * 2), gEd(st->spans.size() * 2);
        for (std::size_t s = 0; s < st->spans.size(); ++s) {
          const Span& sp = st->spans[s];
          gLogS[s] = Array({e.m, sp.w});
          if (sp.w < l)
            for (int d = 0; d < 2; ++d) {
              gEh[2 * s + d] = Array({e.dH, sp.w});
              gEd[2 * s + d] = Array({e.dH});
            }
        }
        Array gEB[2] = {Array({e.dH, e.m}), Array({e.dH, e.m})};
        Array gEC[2] = {Array({e.dH, e.m}), Array({e.dH, e.m})};
        Array gEW[2] = {Array({e.dH, l}), Array({e.dH, l})};
        Array gEpH({l, e.nN, e.dH});

        root_backward(*st, cap, nullptr, g, gLogS[st->grid.sid(0, l)]);
        for (std::size_t w = l; w >= 1; --w) {
          for (std::size_t i = 0; i + w <= l; ++i) {
            std::size_t j = i + w, s = st->grid.sid(i, j);
            const Span& sp = st->spans[s];
            // cache adjoints (from parents, all processed already) become
            // adjoints of this span's own log chart before its cell pass
            if (w < l)
              cache_backward(sp, e, &gEh[2 * s], &gEd[2 * s], nullptr,
                             gLogS[s], gEB, gEC, gEW);
            if (w >= 2) {
              // cell equation backward
              Array gInner({e.dH, w});
              double gpot = 0.0;
              for (std::size_t pc = 0; pc < w; ++pc) {
                const double* ph =
                    e.EpH.data.data() + ((i + pc) * e.nN) * e.dH;
                for (std::size_t A = 0; A < e.nN; ++A) {
                  double gs = gLogS[s].at2(A, pc);
                  if (gs == 0.0 || sp.val.at2(A, pc) <= 0.0) continue;
                  gpot += gs;
                  double gv = gs / sp.val.at2(A, pc);
                  for (std::size_t h = 0; h < e.dH; ++h) {
                    gEpH.at3(i + pc, A, h) += gv * sp.inner.at2(h, pc);
                    gInner.at2(h, pc) += gv * ph[A * e.dH + h];
                  }
                }
              }
              if (pot_cap && pot_cap->requires_grad)
                pot_cap->ensure_grad().at(span_index(i, j, l)) += gpot;
              for (std::size_t k = i + 1; k < j; ++k) {
                std::size_t sl = st->grid.sid(i, k), sr = st->grid.sid(k, j);
                const Span& left = st->spans[sl];
                const Span& right = st->spans[sr];
                double scale = std::exp(left.sh + right.sh - sp.S);
                if (scale == 0.0) continue;
                for (std::size_t h = 0; h < e.dH; ++h) {
                  double dr = scale * right.Ed[0].at(h);
                  double accR = 0.0;
                  for (std::size_t pc = 0; pc < left.w; ++pc) {
                    double gi = gInner.at2(h, pc);
                    gEh[2 * sl].at2(h, pc) += gi * dr;
                    accR += gi * left.Eh[0].at2(h, pc);
                  }
                  gEd[2 * sr].at(h) += scale * accR;
                  double dl = scale * left.Ed[1].at(h);
                  double accL = 0.0;
                  for (std::size_t pc = 0; pc < right.w; ++pc) {
                    double gi = gInner.at2(h, left.w + pc);
                    gEh[2 * sr + 1].at2(h, pc) += gi * dl;
                    accL += gi * right.Eh[1].at2(h, pc);
                  }
                  gEd[2 * sl + 1].at(h) += scale * accL;
                }
              }
            }
          }
          if (w == 1) break;
        }
        scatter_eff_grads(cap, e, gEB, gEC, gEW, gEpH);
      },
      "inside_nbl");
}

ad::NodePtr inside_nbl_exact(const NblInputs& in, const ad::NodePtr& arc_pot,
                             const ad::NodePtr& root_pot, InsideResult* info) {
  auto st = std::make_shared<ForwardState>();
  st->eff = build_eff(in);
  const Eff& e = st->eff;
  std::size_t l = e.l;
  if (arc_pot) require_shape(arc_pot, {l, l}, "arc_pot");
  if (root_pot) require_shape(root_pot, {l}, "root_pot");
  auto Phi = std::make_shared<Array>(Array::full({l, l}, 1.0));
  if (arc_pot)
    for (std::size_t x = 0; x < l * l; ++x)
      Phi->data[x] = std::exp(arc_pot->value.data[x]);

  auto t0 = Clock::now();
  st->grid = SpanGrid(l);
  st->spans.resize(st->grid.count());
  for (std::size_t w = 1; w <= l; ++w)
    for (std::size_t i = 0; i + w <= l; ++i) {
      std::size_t j = i + w;
      Span& sp = st->spans[st->grid.sid(i, j)];
      init_span(sp, i, j, e.m, e.nN);
      if (w >= 2) {
        double S = kNegInf;
        for (std::size_t k = i + 1; k < j; ++k)
          S = std::max(S, st->spans[st->grid.sid(i, k)].sh +
                              st->spans[st->grid.sid(k, j)].sh);
        sp.S = S;
        sp.inner = Array({e.dH, w});
        for (std::size_t k = i + 1; k < j; ++k) {
          const Span& left = st->spans[st->grid.sid(i, k)];
          const Span& right = st->spans[st->grid.sid(k, j)];
          double scale = std::exp(left.sh + right.sh - S);
          if (scale == 0.0) continue;
          for (std::size_t h = 0; h < e.dH; ++h) {
            for (std::size_t pc = 0; pc < left.w; ++pc) {
              double eh = left.Eh[0].at2(h, pc);
              if (eh == 0.0) continue;
              double acc = 0.0;
              for (std::size_t qc = 0; qc < right.w; ++qc)
                acc += right.Edq[0].at2(h, qc) * Phi->at2(i + pc, k + qc);
              sp.inner.at2(h, pc) += scale * eh * acc;
            }
            for (std::size_t pc = 0; pc < right.w; ++pc) {
              double eh = right.Eh[1].at2(h, pc);
              if (eh == 0.0) continue;
              double acc = 0.0;
              for (std::size_t qc = 0; qc < left.w; ++qc)
                acc += left.Edq[1].at2(h, qc) * Phi->at2(k + pc, i + qc);
              sp.inner.at2(h, left.w + pc) += scale * eh * acc;
            }
          }
        }
        finalize_cell(sp, e, 0.0);
        set_shift(sp);
      }
      if (w < l) fill_caches(sp, e, true);
    }
  st->logZ = root_combine(*st, in.root_sym->value, in.root_word->value,
                          root_pot ? root_pot->value.data.data() : nullptr);
  if (info) {
    info->log_likelihood = st->logZ;
    info->variant = "nbl_exact";
    info->seconds = secs_since(t0);
  }

  std::vector<ad::NodePtr> inputs;
  if (arc_pot) inputs.push_back(arc_pot);
  if (root_pot) inputs.push_back(root_pot);
  NblInputs cap = in;
  ad::NodePtr arc_cap = arc_pot, rpot_cap = root_pot;

  return ad::make_node(
      Array::scalar(st->logZ), inputs,
      [st, cap, arc_cap, rpot_cap, Phi](ad::Node& n) {
        const Eff& e = st->eff;
        double g = n.grad.data[0];
        if (g == 0.0 || st->logZ == kNegInf) return;
        std::size_t l = e.l;
        std::vector<Array> gLogS(st->spans.size());
        std::vector<Array> gEh(st->spans.size() * 2),
            gEdq(st->spans.size() * 2);
        for (std::size_t s = 0; s < st->spans.size(); ++s) {
          const Span& sp = st->spans[s];
          gLogS[s] = Array({e.m, sp.w});
          if (sp.w < l)
            for (int d = 0; d < 2; ++d) {
              gEh[2 * s + d] = Array({e.dH, sp.w});
              gEdq[2 * s + d] = Array({e.dH, sp.w});
            }
        }
        Array gPhi({l, l});
        Array gEB[2] = {Array({e.dH, e.m}), Array({e.dH, e.m})};
        Array gEC[2] = {Array({e.dH, e.m}), Array({e.dH, e.m})};
        Array gEW[2] = {Array({e.dH, l}), Array({e.dH, l})};

        root_backward(*st, cap, rpot_cap, g, gLogS[st->grid.sid(0, l)]);
        for (std::size_t w = l; w >= 1; --w) {
          for (std::size_t i = 0; i + w <= l; ++i) {
            std::size_t j = i + w, s = st->grid.sid(i, j);
            const Span& sp = st->spans[s];
            if (w < l)
              cache_backward(sp, e, &gEh[2 * s], nullptr, &gEdq[2 * s],
                             gLogS[s], gEB, gEC, gEW);
            if (w >= 2) {
              Array gInner({e.dH, w});
              for (std::size_t pc = 0; pc < w; ++pc) {
                const double* ph =
                    e.EpH.data.data() + ((i + pc) * e.nN) * e.dH;
                for (std::size_t A = 0; A < e.nN; ++A) {
                  double gs = gLogS[s].at2(A, pc);
                  if (gs == 0.0 || sp.val.at2(A, pc) <= 0.0) continue;
                  double gv = gs / sp.val.at2(A, pc);
                  for (std::size_t h = 0; h < e.dH; ++h)
                    gInner.at2(h, pc) += gv * ph[A * e.dH + h];
                }
              }
              for (std::size_t k = i + 1; k < j; ++k) {
                std::size_t sl = st->grid.sid(i, k), sr = st->grid.sid(k, j);
                const Span& left = st->spans[sl];
                const Span& right = st->spans[sr];
                double scale = std::exp(left.sh + right.sh - sp.S);
                if (scale == 0.0) continue;
                for (std::size_t h = 0; h < e.dH; ++h) {
                  for (std::size_t pc = 0; pc < left.w; ++pc) {
                    double gi = gInner.at2(h, pc);
                    if (gi == 0.0) continue;
                    double eh = left.Eh[0].at2(h, pc);
                    double acc = 0.0;
                    for (std::size_t qc = 0; qc < right.w; ++qc) {
                      double phi = Phi->at2(i + pc, k + qc);
                      double edq = right.Edq[0].at2(h, qc);
                      acc += edq * phi;
                      gEdq[2 * sr].at2(h, qc) += gi * scale * eh * phi;
                      gPhi.at2(i + pc, k + qc) += gi * scale * eh * edq;
                    }
                    gEh[2 * sl].at2(h, pc) += gi * scale * acc;
                  }
                  for (std::size_t pc = 0; pc < right.w; ++pc) {
                    double gi = gInner.at2(h, left.w + pc);
                    if (gi == 0.0) continue;
                    double eh = right.Eh[1].at2(h, pc);
                    double acc = 0.0;
                    for (std::size_t qc = 0; qc < left.w; ++qc) {
                      double phi = Phi->at2(k + pc, i + qc);
                      double edq = left.Edq[1].at2(h, qc);
                      acc += edq * phi;
                      gEdq[2 * sl + 1].at2(h, qc) += gi * scale * eh * phi;
                      gPhi.at2(k + pc, i + qc) += gi * scale * eh * edq;
                    }
                    gEh[2 * sr + 1].at2(h, pc) += gi * scale * acc;
                  }
                }
              }
            }
          }
          if (w == 1) break;
        }
        if (arc_cap && arc_cap->requires_grad) {
          Array& ga = arc_cap->ensure_grad();
          for (std::size_t x = 0; x < l * l; ++x)
            ga.data[x] += gPhi.data[x] * Phi->data[x];
        }
      },
      "inside_nbl_exact");
}

}  // namespace nbl
