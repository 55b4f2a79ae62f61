#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "nbl/grammar.hpp"
#include "nbl/inside.hpp"
#include "nbl/tape.hpp"

namespace nbl {

struct ModelConfig {
  std::size_t embed_dim = 256;
  std::size_t n_N = 15;
  std::size_t n_P = 30;  // default ratio 1:2 to n_N
  std::size_t d_H = 300;
  std::size_t vocab = 0;
  BindingMode binding = BindingMode::D_with_C;
  std::uint64_t seed = 0;

  std::size_t n_children() const { return n_N + n_P; }
  void check() const;
};

// Named leaf-weight registry. Iteration order is fixed at construction,
// which makes initialization and the checkpoint layout deterministic.
struct Model {
  ModelConfig cfg;
  std::vector<std::pair<std::string, ad::NodePtr>> weights;

  const ad::NodePtr& w(const std::string& name) const;
};

// Xavier-uniform initialization: matrices use fan (rows, cols),
// embedding tables use fan (1, embed_dim). Deterministic per seed.
Model init_model(const ModelConfig& cfg);

// Appendix building blocks. Inputs are row batches [n, dim].
ad::NodePtr residual_block(const ad::NodePtr& y, const ad::NodePtr& U,
                           const ad::NodePtr& V);
ad::NodePtr mlp_h(const Model& m, int i, const ad::NodePtr& x);

// Sentence-independent log distributions (softmax forms of section 3).
// factor_D is null except in D_alone mode.
struct GlobalDists {
  ad::NodePtr root_sym;   // [n_N]          log p(A | S)
  ad::NodePtr root_word;  // [n_N, |V|]     log p(w | A)
  ad::NodePtr factor_B;   // [d_H, m] or [d_H, 2, m]
  ad::NodePtr factor_C;   // [d_H, m] or [d_H, 2, m]
  ad::NodePtr factor_w;   // [d_H, |V|] or [d_H, 2, |V|]
  ad::NodePtr factor_D;   // [d_H, 2] when D_alone
};
GlobalDists compute_global_distributions(const Model& m);

// log p(H | A, w_p) for each sentence position, shape [l, n_N, d_H];
// computed lazily per sentence (never materialized over all of Sigma).
ad::NodePtr compute_sentence_conditionals(const Model& m,
                                          const std::vector<std::size_t>& words);

// Bundle the global tables with per-sentence gathers for the inside engine.
NblInputs sentence_inputs(const Model& m, const GlobalDists& g,
                          const std::vector<std::size_t>& words);

// Full NblParams table materialization (head_latent over all of Sigma);
// test/debug plumbing for validate_params at tiny scale.
NblParams materialize_params(const Model& m);

// Self-describing binary checkpoint: magic "NBLPCFG1", array count, then
// per array name / rank / u64 LE dims / float32 LE payload.
void save_checkpoint(const Model& m, const std::string& path);
Model load_checkpoint(const std::string& path, const ModelConfig& cfg);

}  // namespace nbl
