#pragma once

#include <memory>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "nbl/array.hpp"

// Lexicalized PCFG parameter representations. Rules are binary:
// A[w_p] -> B[w_p] C[w_q] (head child on the left, dir = kHeadLeft) or
// A[w_p] -> C[w_q] B[w_p] (head child on the right, dir = kHeadRight),
// plus the start rule S -> A[w] and probability-1 preterminal rules.
// Child symbols are indexed 0..n_N+n_P-1: the first n_N are the
// nonterminals (same ids as parents), the rest are preterminals.
namespace nbl {

constexpr int kHeadLeft = 0;   // head child precedes the dependent
constexpr int kHeadRight = 1;  // dependent precedes the head child

struct SymbolInventory {
  std::size_t n_N = 1;
  std::size_t n_P = 1;
  std::vector<std::string> vocab;

  std::size_t n_children() const { return n_N + n_P; }
  std::size_t n_words() const { return vocab.size(); }
  bool is_preterminal(std::size_t child) const { return child >= n_N; }
  void check() const;
};

enum class BindingMode { D_with_C, D_alone, D_with_Wq, D_with_B };

const char* binding_name(BindingMode m);
BindingMode binding_from_name(const std::string& name);

// CPD-factored rule probabilities:
//   p(B, D, C, w_q | A, w_p) = sum_H p(H|A,w_p) p(B|H) p(C|H) p(w_q|H)
// with the direction D folded into exactly one factor per BindingMode.
struct NblParams {
  SymbolInventory inv;
  BindingMode binding = BindingMode::D_with_C;
  std::size_t d_H = 1;
  Array root_sym;     // [n_N]              log p(A|S)
  Array root_word;    // [n_N, |V|]         log p(w|A)
  Array head_latent;  // [n_N, |V|, d_H]    log p(H|A,w)
  Array factor_B;     // [d_H, m] or [d_H, 2, m] when D_with_B
  Array factor_C;     // [d_H, m] or [d_H, 2, m] when D_with_C
  Array factor_w;     // [d_H, |V|] or [d_H, 2, |V|] when D_with_Wq
  Array factor_D;     // [d_H, 2] only when D_alone

  // log p(B, D, C, w_q | A, w_p) for one full outcome tuple
  double rule_logprob(std::size_t A, std::size_t wp, std::size_t B,
                      std::size_t C, int dir, std::size_t wq) const;
};

// Explicit bilexical rule probabilities (the paper's second baseline):
//   p(B, D, C | A, w_p) jointly, times an emission p(w_q | C).
struct ZhuParams {
  SymbolInventory inv;
  Array root_sym;   // [n_N]
  Array root_word;  // [n_N, |V|]
  Array rule;       // [n_N, |V|, m, 2, m]  log p(B, D, C | A, w_p)
  Array emit;       // [m, |V|]             log p(w_q | C)
};

// Fully materialized order-6 rule tensor; the equivalence oracle.
// Feasible only at tiny scale (guard: <= 6 words x 8 child symbols).
struct DenseLpcfg {
  SymbolInventory inv;
  std::vector<std::size_t> words;  // global word ids covered by the table
  bool covers_vocab = false;
  Array binary;  // [n_N, nw, m, m, 2, nw]  (A, w_p, B, C, D, w_q)
  Array start;   // [n_N, nw]               log p(A|S) + log p(w|A)

  std::size_t local_word(std::size_t global) const;
  double bin_at(std::size_t A, std::size_t wp, std::size_t B, std::size_t C,
                int dir, std::size_t wq) const;  // local word indices
};

struct LexTree;
using LexTreePtr = std::shared_ptr<const LexTree>;

struct LexTree {
  // Leaf: left == nullptr; symbol is a child index (preterminals are the
  // realizable case; a nonterminal leaf is enumerable but has prob 0).
  // Binary: symbol is the parent A in N; head_pos is inherited from the
  // head child (left child iff dir == kHeadLeft).
  std::size_t symbol = 0;
  std::size_t head_pos = 0;
  int dir = kHeadLeft;
  LexTreePtr left, right;

  bool is_leaf() const { return left == nullptr; }
  std::size_t span_begin() const;
  std::size_t span_end() const;  // exclusive
};

LexTreePtr make_leaf_node(std::size_t position, std::size_t symbol);
// head_pos is taken from the left child iff dir == kHeadLeft
LexTreePtr make_binary_node(std::size_t parent, int dir, LexTreePtr left,
                            LexTreePtr right);

// Validation: lists every distribution axis whose exponentiated sum
// deviates from 1 by more than 1e-8. Empty report means valid.
std::vector<std::string> validate_params(const NblParams& p);
std::vector<std::string> validate_params(const ZhuParams& p);
std::vector<std::string> validate_params(const DenseLpcfg& p);

DenseLpcfg expand_nbl_to_dense(const NblParams& p,
                               const std::vector<std::size_t>& words);
DenseLpcfg expand_nbl_to_dense(const NblParams& p);  // full vocabulary
DenseLpcfg expand_zhu_to_dense(const ZhuParams& p,
                               const std::vector<std::size_t>& words);
DenseLpcfg expand_zhu_to_dense(const ZhuParams& p);

// Exact probability of one lexicalized tree over `words` (global ids).
// Preterminal leaves contribute 0; nonterminal leaves yield -inf.
double tree_log_probability(const DenseLpcfg& g, const LexTreePtr& tree,
                            const std::vector<std::size_t>& words);
double tree_log_probability(const NblParams& p, const LexTreePtr& tree,
                            const std::vector<std::size_t>& words);

struct SampledTree {
  std::vector<std::size_t> words;
  LexTreePtr tree;
};

// Ancestral sampling from the start rule downward; nullopt when the
// derivation exceeds max_len words (rejection).
std::optional<SampledTree> sample_tree(const NblParams& p, std::size_t max_len,
                                       std::mt19937& rng);

struct DependencySet {
  std::size_t root = 0;                                  // position of the head of S
  std::vector<std::pair<std::size_t, std::size_t>> arcs;  // head -> dependent
};

DependencySet extract_dependencies(const LexTreePtr& tree);

// Test/bench plumbing: normalized parameter constructors.
NblParams make_uniform_nbl(const SymbolInventory& inv, std::size_t d_H,
                           BindingMode binding);
NblParams make_random_nbl(const SymbolInventory& inv, std::size_t d_H,
                          BindingMode binding, std::mt19937& rng,
                          double sigma = 1.0);
ZhuParams make_uniform_zhu(const SymbolInventory& inv);
ZhuParams make_random_zhu(const SymbolInventory& inv, std::mt19937& rng,
                          double sigma = 1.0);

}  // namespace nbl
