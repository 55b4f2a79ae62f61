#pragma once

#include <cstddef>
#include <vector>

#include "nbl/grammar.hpp"
#include "nbl/tape.hpp"

// Inside-algorithm variants. All return the sentence log marginal
// likelihood log p(w) = log sum over lexicalized trees of p(t).
//
// The dense variants (brute force, naive, Eisner-Satta) are oracles and
// baselines over the order-6 rule tensor. The bilexical (zhu) and
// CPD-factored (nbl) engines work on the factored parameters and carry
// hand-written adjoints; the nbl engines integrate with the autodiff
// tape so gradients flow to parameter nodes and injected potentials.
namespace nbl {

struct InsideResult {
  double log_likelihood = kNegInf;
  const char* variant = "?";
  double seconds = 0.0;   // forward (+ adjoint where applicable) only
  long cache_hits = 0;    // instrumentation where applicable
};

// Every distinct lexicalized binary tree over l leaves: bracketing x
// per-node head direction x parent symbol in N x leaf category in N+P.
// Nonterminal-labeled leaves are enumerated (they carry zero mass).
std::vector<LexTreePtr> enumerate_lexicalized_trees(std::size_t l,
                                                    const SymbolInventory& inv);

InsideResult inside_brute_force(const DenseLpcfg& g,
                                const std::vector<std::size_t>& words);

// O(l^5 m^3): the literal double split-point/head-position sums (Eq. 2).
InsideResult inside_naive(const DenseLpcfg& g,
                          const std::vector<std::size_t>& words);

// O(l^4 m^2 + l^3 m^3)-style caching of the dependent-span contraction
// keyed by (A, p, dep-span); cache_hits counts reuses.
InsideResult inside_eisner_satta(const DenseLpcfg& g,
                                 const std::vector<std::size_t>& words);

enum class ZhuCaching { C1_1, C1_2 };

// Bilexical engine over explicit p(B,D,C|A,w_p) p(w_q|C) tables.
// C1_1 caches only the emission-weighted dependent sum (re-impl-1);
// C1_2 additionally caches its (A,w_p,B)-contraction (re-impl-2).
// Timed region covers forward and the adjoint (gradient) sweep.
struct ZhuGradients {
  Array root_sym, root_word, rule, emit;  // d logZ / d log-table
};
InsideResult inside_zhu(const ZhuParams& p,
                        const std::vector<std::size_t>& words,
                        ZhuCaching caching, ZhuGradients* grads = nullptr);

// Canonical indexing of spans with width >= 2 (span potentials).
std::size_t n_spans(std::size_t l);
std::size_t span_index(std::size_t i, std::size_t j, std::size_t l);

// Sentence-level tape inputs for the CPD-factored engines. root_word and
// head_latent are per-position gathers; factor tables are the full
// (vocabulary-wide) nodes and the engine gathers columns internally.
struct NblInputs {
  BindingMode binding = BindingMode::D_with_C;
  std::size_t n_N = 1, n_P = 1, d_H = 1;
  std::vector<std::size_t> words;       // global ids, define l
  ad::NodePtr root_sym;                 // [n_N]
  ad::NodePtr root_word;                // [n_N, l]
  ad::NodePtr head_latent;              // [l, n_N, d_H]
  ad::NodePtr factor_B;                 // [d_H, m] or [d_H, 2, m]
  ad::NodePtr factor_C;                 // [d_H, m] or [d_H, 2, m]
  ad::NodePtr factor_w;                 // [d_H, |V|] or [d_H, 2, |V|]
  ad::NodePtr factor_D;                 // [d_H, 2] when D_alone, else null
};

NblInputs wrap_params(const NblParams& p, const std::vector<std::size_t>& words,
                      bool requires_grad);

// Fast engine, O(l^4 d_H) combine with D1-1/D1-2-style caches filled by
// GEMM in shifted exp space. span_pot (optional, [n_spans(l)], log
// space) is added to every cell of its span; its gradient at zero is
// the span marginal. Returns the scalar log-likelihood node.
ad::NodePtr inside_nbl(const NblInputs& in, const ad::NodePtr& span_pot,
                       InsideResult* info = nullptr);

// Dependent-position-resolved engine, O(l^5 d_H / 20): supports per-arc
// potentials arc_pot ([l, l], entry (p, q) on head p -> dependent q) and
// per-root potentials root_pot ([l]). Gradients flow to the potentials
// only; parameter inputs are treated as constants here.
ad::NodePtr inside_nbl_exact(const NblInputs& in, const ad::NodePtr& arc_pot,
                             const ad::NodePtr& root_pot,
                             InsideResult* info = nullptr);

}  // namespace nbl
