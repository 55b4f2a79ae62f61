// Generates the bundled synthetic treebank: samples sentences from a
// fixed random factored grammar and writes WSJ-formatted splits
// (bracketed trees, CoNLL heads, plain text). Run from the repo root:
//   gen_synth data/synth
#include <fstream>
#include <iostream>
#include <random>
#include <string>
#include <vector>

#include "nbl/corpus.hpp"
#include "nbl/grammar.hpp"

using namespace nbl;

namespace {

const char* kNtNames[] = {"NP", "VP", "PP"};

struct Rendered {
  std::string bracket;
  std::string conll;
  std::string text;
};

// Leaf tags PT<k>; nonterminal labels cycle through kNtNames with the
// root relabeled S. An occasional trailing period exercises the
// punctuation stripper downstream.
std::string bracket_of(const LexTreePtr& t, const SymbolInventory& inv,
                       const std::vector<std::size_t>& words, bool root) {
  if (t->is_leaf()) {
    std::size_t pt = t->symbol - inv.n_N;
    return "(PT" + std::to_string(pt) + " " + inv.vocab[words[t->head_pos]] +
           ")";
  }
  std::string label = root ? "S" : kNtNames[t->symbol % 3];
  return "(" + label + " " + bracket_of(t->left, inv, words, false) + " " +
         bracket_of(t->right, inv, words, false) + ")";
}

Rendered render(const SampledTree& s, const SymbolInventory& inv,
                bool add_period) {
  Rendered r;
  std::string body = bracket_of(s.tree, inv, s.words, true);
  DependencySet deps = extract_dependencies(s.tree);
  std::vector<std::size_t> heads(s.words.size(), 0);
  for (auto [h, d] : deps.arcs) heads[d] = h + 1;
  heads[deps.root] = 0;

  if (add_period) {
    r.bracket = "(S " + body + " (. .))";
  } else {
    r.bracket = body;
  }
  for (std::size_t t = 0; t < s.words.size(); ++t) {
    const std::string& w = inv.vocab[s.words[t]];
    r.conll += std::to_string(t + 1) + "\t" + w + "\t_\t_\t_\t_\t" +
               std::to_string(heads[t]) + "\n";
    r.text += (t ? " " : "") + w;
  }
  if (add_period) {
    // the period attaches to the root word
    r.conll += std::to_string(s.words.size() + 1) + "\t.\t_\t_\t_\t_\t" +
               std::to_string(deps.root + 1) + "\n";
    r.text += " .";
  }
  r.conll += "\n";
  return r;
}

void write_split(const std::string& stem, const NblParams& params,
                 std::size_t n_sentences, std::mt19937& rng) {
  std::ofstream brackets(stem + ".brackets");
  std::ofstream conll(stem + ".conll");
  std::ofstream text(stem + ".txt");
  std::bernoulli_distribution punct(0.3);
  std::size_t done = 0;
  while (done < n_sentences) {
    auto s = sample_tree(params, 12, rng);
    if (!s || s->words.size() < 2) continue;
    Rendered r = render(*s, params.inv, punct(rng));
    brackets << r.bracket << "\n";
    conll << r.conll;
    text << r.text << "\n";
    ++done;
  }
}

}  // namespace

int main(int argc, char** argv) {
  std::string stem = argc > 1 ? argv[1] : "data/synth";
  SymbolInventory inv;
  inv.n_N = 3;
  inv.n_P = 6;
  for (int i = 0; i < 50; ++i) inv.vocab.push_back("w" + std::to_string(i));
  inv.check();
  std::mt19937 rng(20240901);
  NblParams params = make_random_nbl(inv, 8, BindingMode::D_with_C, rng);

  write_split(stem + ".train", params, 2000, rng);
  write_split(stem + ".dev", params, 200, rng);
  write_split(stem + ".test", params, 200, rng);
  std::cout << "wrote " << stem << ".{train,dev,test}.{brackets,conll,txt}\n";
  return 0;
}
