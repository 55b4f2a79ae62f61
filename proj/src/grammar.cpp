#include "nbl/grammar.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "nbl/kernels.hpp"

namespace nbl {

void SymbolInventory::check() const {
  if (n_N < 1 || n_P < 1 || vocab.size() < 2)
    throw std::invalid_argument(
        "SymbolInventory: need n_N >= 1, n_P >= 1, |vocab| >= 2");
}

const char* binding_name(BindingMode m) {
  switch (m) {
    case BindingMode::D_with_C: return "D_with_C";
    case BindingMode::D_alone: return "D_alone";
    case BindingMode::D_with_Wq: return "D_with_Wq";
    case BindingMode::D_with_B: return "D_with_B";
  }
  return "?";
}

BindingMode binding_from_name(const std::string& name) {
  if (name == "D_with_C") return BindingMode::D_with_C;
  if (name == "D_alone") return BindingMode::D_alone;
  if (name == "D_with_Wq") return BindingMode::D_with_Wq;
  if (name == "D_with_B") return BindingMode::D_with_B;
  throw std::invalid_argument("unknown binding mode: " + name);
}

double NblParams::rule_logprob(std::size_t A, std::size_t wp, std::size_t B,
                               std::size_t C, int dir, std::size_t wq) const {
  std::vector<double> terms(d_H);
  for (std::size_t h = 0; h < d_H; ++h) {
    double t = head_latent.at3(A, wp, h);
    t += binding == BindingMode::D_with_B ? factor_B.at3(h, dir, B)
                                          : factor_B.at2(h, B);
    t += binding == BindingMode::D_with_C ? factor_C.at3(h, dir, C)
                                          : factor_C.at2(h, C);
    t += binding == BindingMode::D_with_Wq ? factor_w.at3(h, dir, wq)
                                           : factor_w.at2(h, wq);
    if (binding == BindingMode::D_alone) t += factor_D.at2(h, dir);
    terms[h] = t;
  }
  return kern::logsumexp(terms.data(), terms.size());
}

std::size_t DenseLpcfg::local_word(std::size_t global) const {
  for (std::size_t i = 0; i < words.size(); ++i)
    if (words[i] == global) return i;
  throw std::out_of_range("DenseLpcfg: word id " + std::to_string(global) +
                          " not covered by this table");
}

double DenseLpcfg::bin_at(std::size_t A, std::size_t wp, std::size_t B,
                          std::size_t C, int dir, std::size_t wq) const {
  std::size_t m = inv.n_children(), nw = words.size();
  return binary.data[((((A * nw + wp) * m + B) * m + C) * 2 + dir) * nw + wq];
}

std::size_t LexTree::span_begin() const {
  return is_leaf() ? head_pos : left->span_begin();
}

std::size_t LexTree::span_end() const {
  return is_leaf() ? head_pos + 1 : right->span_end();
}

LexTreePtr make_leaf_node(std::size_t position, std::size_t symbol) {
  auto n = std::make_shared<LexTree>();
  n->symbol = symbol;
  n->head_pos = position;
  return n;
}

LexTreePtr make_binary_node(std::size_t parent, int dir, LexTreePtr left,
                            LexTreePtr right) {
  if (!left || !right) throw std::invalid_argument("binary node needs children");
  auto n = std::make_shared<LexTree>();
  n->symbol = parent;
  n->dir = dir;
  n->head_pos = dir == kHeadLeft ? left->head_pos : right->head_pos;
  n->left = std::move(left);
  n->right = std::move(right);
  return n;
}

namespace {

void log_normalize_rows(Array& a, std::size_t row_len) {
  std::size_t rows = a.numel() / row_len;
  for (std::size_t r = 0; r < rows; ++r) {
    double* row = a.data.data() + r * row_len;
    double z = kern::logsumexp(row, row_len);
    for (std::size_t i = 0; i < row_len; ++i) row[i] -= z;
  }
}

void check_rows(std::vector<std::string>& out, const Array& a,
                std::size_t row_len, const std::string& name) {
  if (a.numel() == 0 || row_len == 0) return;
  std::size_t rows = a.numel() / row_len;
  for (std::size_t r = 0; r < rows; ++r) {
    double s = 0.0;
    for (std::size_t i = 0; i < row_len; ++i)
      s += std::exp(a.data[r * row_len + i]);
    if (std::abs(s - 1.0) > 1e-8)
      out.push_back(name + " row " + std::to_string(r) + " sums to " +
                    std::to_string(s));
  }
}

}  // namespace

std::vector<std::string> validate_params(const NblParams& p) {
  std::vector<std::string> out;
  std::size_t m = p.inv.n_children(), V = p.inv.n_words();
  check_rows(out, p.root_sym, p.inv.n_N, "root_sym");
  check_rows(out, p.root_word, V, "root_word");
  check_rows(out, p.head_latent, p.d_H, "head_latent");
  check_rows(out, p.factor_B,
             p.binding == BindingMode::D_with_B ? 2 * m : m, "factor_B");
  check_rows(out, p.factor_C,
             p.binding == BindingMode::D_with_C ? 2 * m : m, "factor_C");
  check_rows(out, p.factor_w,
             p.binding == BindingMode::D_with_Wq ? 2 * V : V, "factor_w");
  if (p.binding == BindingMode::D_alone)
    check_rows(out, p.factor_D, 2, "factor_D");
  return out;
}

std::vector<std::string> validate_params(const ZhuParams& p) {
  std::vector<std::string> out;
  std::size_t m = p.inv.n_children(), V = p.inv.n_words();
  check_rows(out, p.root_sym, p.inv.n_N, "root_sym");
  check_rows(out, p.root_word, V, "root_word");
  check_rows(out, p.rule, m * 2 * m, "rule");
  check_rows(out, p.emit, V, "emit");
  return out;
}

std::vector<std::string> validate_params(const DenseLpcfg& p) {
  std::vector<std::string> out;
  if (!p.covers_vocab) return out;  // restricted tables cannot normalize
  std::size_t m = p.inv.n_children(), nw = p.words.size();
  check_rows(out, p.binary, m * m * 2 * nw, "binary");
  double s = 0.0;
  for (double v : p.start.data) s += std::exp(v);
  if (std::abs(s - 1.0) > 1e-8)
    out.push_back("start sums to " + std::to_string(s));
  return out;
}

namespace {

std::vector<std::size_t> all_words(const SymbolInventory& inv) {
  std::vector<std::size_t> w(inv.n_words());
  std::iota(w.begin(), w.end(), std::size_t{0});
  return w;
}

DenseLpcfg dense_shell(const SymbolInventory& inv,
                       const std::vector<std::size_t>& words,
                       const Array& root_sym, const Array& root_word) {
  inv.check();
  std::size_t m = inv.n_children(), nw = words.size();
  if (nw == 0 || nw > 6 || m > 8)
    throw std::invalid_argument(
        "dense expansion guard: need 1..6 words and <= 8 child symbols, got " +
        std::to_string(nw) + " words x " + std::to_string(m) + " symbols");
  DenseLpcfg g;
  g.inv = inv;
  g.words = words;
  auto sorted = words;
  std::sort(sorted.begin(), sorted.end());
  g.covers_vocab = sorted == all_words(inv);
  g.binary = Array({inv.n_N, nw, m, m, 2, nw});
  g.start = Array({inv.n_N, nw});
  for (std::size_t A = 0; A < inv.n_N; ++A)
    for (std::size_t i = 0; i < nw; ++i)
      g.start.at2(A, i) = root_sym.at(A) + root_word.at2(A, words[i]);
  return g;
}

}  // namespace

DenseLpcfg expand_nbl_to_dense(const NblParams& p,
                               const std::vector<std::size_t>& words) {
  DenseLpcfg g = dense_shell(p.inv, words, p.root_sym, p.root_word);
  std::size_t m = p.inv.n_children(), nw = words.size();
  std::size_t ix = 0;
  for (std::size_t A = 0; A < p.inv.n_N; ++A)
    for (std::size_t i = 0; i < nw; ++i)
      for (std::size_t B = 0; B < m; ++B)
        for (std::size_t C = 0; C < m; ++C)
          for (int d = 0; d < 2; ++d)
            for (std::size_t j = 0; j < nw; ++j)
              g.binary.data[ix++] =
                  p.rule_logprob(A, words[i], B, C, d, words[j]);
  return g;
}

DenseLpcfg expand_nbl_to_dense(const NblParams& p) {
  return expand_nbl_to_dense(p, all_words(p.inv));
}

DenseLpcfg expand_zhu_to_dense(const ZhuParams& p,
                               const std::vector<std::size_t>& words) {
  DenseLpcfg g = dense_shell(p.inv, words, p.root_sym, p.root_word);
  std::size_t m = p.inv.n_children(), nw = words.size();
  std::size_t ix = 0;
  for (std::size_t A = 0; A < p.inv.n_N; ++A)
    for (std::size_t i = 0; i < nw; ++i)
      for (std::size_t B = 0; B < m; ++B)
        for (std::size_t C = 0; C < m; ++C)
          for (int d = 0; d < 2; ++d)
            for (std::size_t j = 0; j < nw; ++j) {
              double r = p.rule.data[(((A * p.inv.n_words() + words[i]) * m +
                                       B) * 2 + d) * m + C];
              g.binary.data[ix++] = r + p.emit.at2(C, words[j]);
            }
  return g;
}

DenseLpcfg expand_zhu_to_dense(const ZhuParams& p) {
  return expand_zhu_to_dense(p, all_words(p.inv));
}

namespace {

// shared tree walk: score(A, w_p, B, C, dir, w_q) per binary node
template <typename RuleScore>
double walk_tree(const LexTreePtr& node, const SymbolInventory& inv,
                 const std::vector<std::size_t>& words,
                 const RuleScore& score) {
  if (node->is_leaf())
    return inv.is_preterminal(node->symbol) ? 0.0 : kNegInf;
  const LexTreePtr& head = node->dir == kHeadLeft ? node->left : node->right;
  const LexTreePtr& dep = node->dir == kHeadLeft ? node->right : node->left;
  if (head->head_pos != node->head_pos)
    throw std::invalid_argument(
        "tree violates head inheritance at position " +
        std::to_string(node->head_pos));
  if (node->symbol >= inv.n_N)
    throw std::invalid_argument("binary node parent not a nonterminal");
  double lp = score(node->symbol, words.at(node->head_pos), head->symbol,
                    dep->symbol, node->dir, words.at(dep->head_pos));
  lp += walk_tree(node->left, inv, words, score);
  lp += walk_tree(node->right, inv, words, score);
  return lp;
}

}  // namespace

double tree_log_probability(const DenseLpcfg& g, const LexTreePtr& tree,
                            const std::vector<std::size_t>& words) {
  if (tree->is_leaf())
    throw std::invalid_argument("tree_log_probability: length-1 tree");
  double lp = g.start.at2(tree->symbol, g.local_word(words.at(tree->head_pos)));
  lp += walk_tree(tree, g.inv, words,
                  [&](std::size_t A, std::size_t wp, std::size_t B,
                      std::size_t C, int d, std::size_t wq) {
                    return g.bin_at(A, g.local_word(wp), B, C, d,
                                    g.local_word(wq));
                  });
  return lp;
}

double tree_log_probability(const NblParams& p, const LexTreePtr& tree,
                            const std::vector<std::size_t>& words) {
  if (tree->is_leaf())
    throw std::invalid_argument("tree_log_probability: length-1 tree");
  double lp = p.root_sym.at(tree->symbol) +
              p.root_word.at2(tree->symbol, words.at(tree->head_pos));
  lp += walk_tree(tree, p.inv, words,
                  [&](std::size_t A, std::size_t wp, std::size_t B,
                      std::size_t C, int d, std::size_t wq) {
                    return p.rule_logprob(A, wp, B, C, d, wq);
                  });
  return lp;
}

namespace {

std::size_t sample_log_row(const double* row, std::size_t n,
                           std::mt19937& rng) {
  std::uniform_real_distribution<double> ud(0.0, 1.0);
  double u = ud(rng), acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    acc += std::exp(row[i]);
    if (u < acc) return i;
  }
  return n - 1;  // guard against rounding
}

struct Draft {
  std::size_t sym = 0;  // child index (leaf) or parent in N (binary)
  std::size_t word = 0;
  int dir = kHeadLeft;
  std::unique_ptr<Draft> left, right;
};

// returns false when the node budget is exhausted (rejection)
bool grow(const NblParams& p, std::size_t A, std::size_t word, Draft& node,
          long& budget, std::mt19937& rng) {
  if (--budget < 0) return false;
  std::size_t m = p.inv.n_children();
  node.sym = A;
  node.word = word;
  const double* hrow =
      p.head_latent.data.data() + (A * p.inv.n_words() + word) * p.d_H;
  std::size_t H = sample_log_row(hrow, p.d_H, rng);

  std::size_t B, C, wq;
  int dir;
  switch (p.binding) {
    case BindingMode::D_with_B: {
      std::size_t j = sample_log_row(p.factor_B.data.data() + H * 2 * m, 2 * m, rng);
      dir = int(j / m);
      B = j % m;
      C = sample_log_row(p.factor_C.data.data() + H * m, m, rng);
      wq = sample_log_row(p.factor_w.data.data() + H * p.inv.n_words(),
                          p.inv.n_words(), rng);
      break;
    }
    case BindingMode::D_with_C: {
      B = sample_log_row(p.factor_B.data.data() + H * m, m, rng);
      std::size_t j = sample_log_row(p.factor_C.data.data() + H * 2 * m, 2 * m, rng);
      dir = int(j / m);
      C = j % m;
      wq = sample_log_row(p.factor_w.data.data() + H * p.inv.n_words(),
                          p.inv.n_words(), rng);
      break;
    }
    case BindingMode::D_with_Wq: {
      B = sample_log_row(p.factor_B.data.data() + H * m, m, rng);
      C = sample_log_row(p.factor_C.data.data() + H * m, m, rng);
      std::size_t V = p.inv.n_words();
      std::size_t j = sample_log_row(p.factor_w.data.data() + H * 2 * V, 2 * V, rng);
      dir = int(j / V);
      wq = j % V;
      break;
    }
    case BindingMode::D_alone:
    default: {
      B = sample_log_row(p.factor_B.data.data() + H * m, m, rng);
      C = sample_log_row(p.factor_C.data.data() + H * m, m, rng);
      wq = sample_log_row(p.factor_w.data.data() + H * p.inv.n_words(),
                          p.inv.n_words(), rng);
      dir = int(sample_log_row(p.factor_D.data.data() + H * 2, 2, rng));
    }
  }
  node.dir = dir;
  node.left = std::make_unique<Draft>();
  node.right = std::make_unique<Draft>();
  Draft& headc = dir == kHeadLeft ? *node.left : *node.right;
  Draft& depc = dir == kHeadLeft ? *node.right : *node.left;
  auto fill = [&](Draft& c, std::size_t sym, std::size_t w) -> bool {
    if (sym < p.inv.n_N) return grow(p, sym, w, c, budget, rng);
    c.sym = sym;
    c.word = w;
    return true;
  };
  return fill(headc, B, word) && fill(depc, C, wq);
}

LexTreePtr draft_to_tree(const Draft& d, std::vector<std::size_t>& words) {
  if (!d.left) {
    words.push_back(d.word);
    return make_leaf_node(words.size() - 1, d.sym);
  }
  LexTreePtr l = draft_to_tree(*d.left, words);
  LexTreePtr r = draft_to_tree(*d.right, words);
  return make_binary_node(d.sym, d.dir, std::move(l), std::move(r));
}

}  // namespace

std::optional<SampledTree> sample_tree(const NblParams& p, std::size_t max_len,
                                       std::mt19937& rng) {
  std::size_t A = sample_log_row(p.root_sym.data.data(), p.inv.n_N, rng);
  std::size_t w = sample_log_row(
      p.root_word.data.data() + A * p.inv.n_words(), p.inv.n_words(), rng);
  Draft root;
  long budget = long(max_len) - 1;  // a tree with n leaves has n-1 binary nodes
  if (!grow(p, A, w, root, budget, rng)) return std::nullopt;
  SampledTree out;
  out.tree = draft_to_tree(root, out.words);
  if (out.words.size() > max_len) return std::nullopt;
  return out;
}

namespace {

void collect_arcs(const LexTreePtr& node, DependencySet& out) {
  if (node->is_leaf()) return;
  const LexTreePtr& head = node->dir == kHeadLeft ? node->left : node->right;
  const LexTreePtr& dep = node->dir == kHeadLeft ? node->right : node->left;
  if (head->head_pos != node->head_pos)
    throw std::invalid_argument("malformed tree: head inheritance violated");
  out.arcs.emplace_back(node->head_pos, dep->head_pos);
  collect_arcs(node->left, out);
  collect_arcs(node->right, out);
}

}  // namespace

DependencySet extract_dependencies(const LexTreePtr& tree) {
  if (!tree) throw std::invalid_argument("malformed tree: null");
  DependencySet out;
  out.root = tree->head_pos;
  collect_arcs(tree, out);
  return out;
}

namespace {

NblParams nbl_shell(const SymbolInventory& inv, std::size_t d_H,
                    BindingMode binding) {
  inv.check();
  std::size_t m = inv.n_children(), V = inv.n_words();
  NblParams p;
  p.inv = inv;
  p.binding = binding;
  p.d_H = d_H;
  p.root_sym = Array({inv.n_N});
  p.root_word = Array({inv.n_N, V});
  p.head_latent = Array({inv.n_N, V, d_H});
  p.factor_B = binding == BindingMode::D_with_B ? Array({d_H, 2, m})
                                                : Array({d_H, m});
  p.factor_C = binding == BindingMode::D_with_C ? Array({d_H, 2, m})
                                                : Array({d_H, m});
  p.factor_w = binding == BindingMode::D_with_Wq ? Array({d_H, 2, V})
                                                 : Array({d_H, V});
  if (binding == BindingMode::D_alone) p.factor_D = Array({d_H, 2});
  return p;
}

void normalize_nbl(NblParams& p) {
  std::size_t m = p.inv.n_children(), V = p.inv.n_words();
  log_normalize_rows(p.root_sym, p.inv.n_N);
  log_normalize_rows(p.root_word, V);
  log_normalize_rows(p.head_latent, p.d_H);
  log_normalize_rows(p.factor_B,
                     p.binding == BindingMode::D_with_B ? 2 * m : m);
  log_normalize_rows(p.factor_C,
                     p.binding == BindingMode::D_with_C ? 2 * m : m);
  log_normalize_rows(p.factor_w,
                     p.binding == BindingMode::D_with_Wq ? 2 * V : V);
  if (p.binding == BindingMode::D_alone) log_normalize_rows(p.factor_D, 2);
}

void fill_gauss(Array& a, std::mt19937& rng, double sigma) {
  std::normal_distribution<double> nd(0.0, sigma);
  for (auto& x : a.data) x = nd(rng);
}

}  // namespace

NblParams make_uniform_nbl(const SymbolInventory& inv, std::size_t d_H,
                           BindingMode binding) {
  NblParams p = nbl_shell(inv, d_H, binding);
  normalize_nbl(p);
  return p;
}

NblParams make_random_nbl(const SymbolInventory& inv, std::size_t d_H,
                          BindingMode binding, std::mt19937& rng,
                          double sigma) {
  NblParams p = nbl_shell(inv, d_H, binding);
  fill_gauss(p.root_sym, rng, sigma);
  fill_gauss(p.root_word, rng, sigma);
  fill_gauss(p.head_latent, rng, sigma);
  fill_gauss(p.factor_B, rng, sigma);
  fill_gauss(p.factor_C, rng, sigma);
  fill_gauss(p.factor_w, rng, sigma);
  if (binding == BindingMode::D_alone) fill_gauss(p.factor_D, rng, sigma);
  normalize_nbl(p);
  return p;
}

namespace {

ZhuParams zhu_shell(const SymbolInventory& inv) {
  inv.check();
  std::size_t m = inv.n_children(), V = inv.n_words();
  ZhuParams p;
  p.inv = inv;
  p.root_sym = Array({inv.n_N});
  p.root_word = Array({inv.n_N, V});
  p.rule = Array({inv.n_N, V, m, 2, m});
  p.emit = Array({m, V});
  return p;
}

void normalize_zhu(ZhuParams& p) {
  std::size_t m = p.inv.n_children(), V = p.inv.n_words();
  log_normalize_rows(p.root_sym, p.inv.n_N);
  log_normalize_rows(p.root_word, V);
  log_normalize_rows(p.rule, m * 2 * m);
  log_normalize_rows(p.emit, V);
}

}  // namespace

ZhuParams make_uniform_zhu(const SymbolInventory& inv) {
  ZhuParams p = zhu_shell(inv);
  normalize_zhu(p);
  return p;
}

ZhuParams make_random_zhu(const SymbolInventory& inv, std::mt19937& rng,
                          double sigma) {
  ZhuParams p = zhu_shell(inv);
  fill_gauss(p.root_sym, rng, sigma);
  fill_gauss(p.root_word, rng, sigma);
  fill_gauss(p.rule, rng, sigma);
  fill_gauss(p.emit, rng, sigma);
  normalize_zhu(p);
  return p;
}

}  // namespace nbl
