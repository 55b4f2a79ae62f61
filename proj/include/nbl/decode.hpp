#pragma once

#include <utility>
#include <vector>

#include "nbl/grammar.hpp"

namespace nbl {

// mu(i, j) for 0 <= i < j <= l, stored at mu.at2(i, j); width-1 spans
// are identically 1 (every position is a leaf of every binary tree).
struct SpanMarginals {
  std::size_t l = 0;
  Array mu;  // [l+1, l+1]

  double at(std::size_t i, std::size_t j) const { return mu.at2(i, j); }
};

// arc(p, q) = mu(p -> q); root(p) = probability that p heads the tree.
struct ArcMarginals {
  std::size_t l = 0;
  Array arc;   // [l, l], diagonal zero
  Array root;  // [l]
};

struct ParseOutput {
  LexTreePtr tree;
  DependencySet deps;
  double log_likelihood = kNegInf;  // max-semiring chart root value
};

// Argmax lexicalized tree under the H-marginalized rule probabilities,
// max-product CYK with an Eisner-Satta-style dependent-side cache.
// Ties broken by (lower split k, lower head p, lower symbol index).
ParseOutput viterbi_cyk(const NblParams& p,
                        const std::vector<std::size_t>& words);

// Marginals via differentiation of zero-valued injected log-potentials.
SpanMarginals span_marginals(const NblParams& p,
                             const std::vector<std::size_t>& words);
ArcMarginals arc_marginals(const NblParams& p,
                           const std::vector<std::size_t>& words);

// MBR constituency: the binary bracketing maximizing the sum of span
// marginals (expected span recall). Returns all internal spans (width
// >= 2, including (0, l)), sorted. Ties resolve to the lower split.
std::vector<std::pair<std::size_t, std::size_t>> mbr_constituency(
    const SpanMarginals& mu);

// MBR dependency: best projective tree under arc scores mu(p -> q) plus
// a root score rho(r); the virtual root takes exactly one child.
DependencySet mbr_dependency(const ArcMarginals& mu);

}  // namespace nbl
