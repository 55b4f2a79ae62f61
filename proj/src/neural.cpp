#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <random>
#include <stdexcept>

#include "nbl/neural.hpp"

namespace nbl {

namespace {

using ad::NodePtr;

std::vector<std::size_t> iota_idx(std::size_t n) {
  std::vector<std::size_t> v(n);
  std::iota(v.begin(), v.end(), std::size_t{0});
  return v;
}

// rows of `table` are embeddings: fan pair (1, dim); plain matrices use
// (fan_in, fan_out) = (cols, rows)
double xavier_bound(std::size_t fan_in, std::size_t fan_out) {
  return std::sqrt(6.0 / double(fan_in + fan_out));
}

void add_weight(Model& m, std::mt19937_64& rng, const std::string& name,
                std::vector<std::size_t> shape, double bound) {
  Array a(shape);
  std::uniform_real_distribution<double> u(-bound, bound);
  for (auto& x : a.data) x = u(rng);
  m.weights.emplace_back(name, ad::make_leaf(std::move(a), true));
}

NodePtr pair_logits(const Model& m, const NodePtr& table) {
  return ad::matmul(m.w("u_H"), ad::transpose(table));
}

}  // namespace

void ModelConfig::check() const {
  if (embed_dim < 1 || n_N < 1 || n_P < 1 || d_H < 1 || vocab < 1)
    throw std::invalid_argument("ModelConfig: all dims must be >= 1");
}

const ad::NodePtr& Model::w(const std::string& name) const {
  for (const auto& [n, node] : weights)
    if (n == name) return node;
  throw std::out_of_range("Model: unknown weight " + name);
}

Model init_model(const ModelConfig& cfg) {
  cfg.check();
  Model m;
  m.cfg = cfg;
  std::mt19937_64 rng(cfg.seed);
  std::size_t d = cfg.embed_dim, mm = cfg.n_children();
  double eb = xavier_bound(1, d);
  add_weight(m, rng, "u_S", {1, d}, eb);
  add_weight(m, rng, "u_A", {cfg.n_N, d}, eb);
  add_weight(m, rng, "u_H", {cfg.d_H, d}, eb);
  add_weight(m, rng, "w_sym", {mm, d}, eb);
  add_weight(m, rng, "w_pair", {2 * mm, d}, eb);
  add_weight(m, rng, "e_dir", {2, d}, eb);
  add_weight(m, rng, "w_word", {cfg.vocab, d}, eb);
  double sq = xavier_bound(d, d);
  for (int i = 1; i <= 4; ++i) {
    std::string h = "h" + std::to_string(i);
    add_weight(m, rng, h + "_W", {d, d}, sq);
    for (int j = 1; j <= 2; ++j) {
      std::string g = h + "_g" + std::to_string(j);
      add_weight(m, rng, g + "_U", {d, d}, sq);
      add_weight(m, rng, g + "_V", {d, d}, sq);
    }
  }
  add_weight(m, rng, "f_W", {d, 2 * d}, xavier_bound(2 * d, d));
  return m;
}

ad::NodePtr residual_block(const NodePtr& y, const NodePtr& U,
                           const NodePtr& V) {
  return ad::add(ad::relu(ad::matmul(ad::relu(ad::matmul(y, ad::transpose(U))),
                                     ad::transpose(V))),
                 y);
}

ad::NodePtr mlp_h(const Model& m, int i, const NodePtr& x) {
  std::string h = "h" + std::to_string(i);
  NodePtr z = ad::matmul(x, ad::transpose(m.w(h + "_W")));
  z = residual_block(z, m.w(h + "_g2_U"), m.w(h + "_g2_V"));
  return residual_block(z, m.w(h + "_g1_U"), m.w(h + "_g1_V"));
}

GlobalDists compute_global_distributions(const Model& m) {
  const ModelConfig& c = m.cfg;
  std::size_t mm = c.n_children();
  GlobalDists g;

  NodePtr w_A = ad::gather_rows(m.w("w_sym"), iota_idx(c.n_N));
  g.root_sym = ad::reshape(
      ad::log_softmax(ad::matmul(m.w("u_S"), ad::transpose(mlp_h(m, 1, w_A))),
                      1),
      {c.n_N});
  g.root_word = ad::log_softmax(
      ad::matmul(m.w("u_A"), ad::transpose(mlp_h(m, 2, m.w("w_word")))), 1);

  NodePtr symL = pair_logits(m, m.w("w_sym"));    // [d_H, m]
  NodePtr wordL =
      ad::matmul(m.w("u_H"), ad::transpose(mlp_h(m, 3, m.w("w_word"))));
  NodePtr dirL = pair_logits(m, m.w("e_dir"));    // [d_H, 2]

  auto with_dir_pairs = [&](std::size_t n) {
    // joint softmax over M = (N u P) x {left, right}, direction-major
    return ad::reshape(
        ad::log_softmax(pair_logits(m, m.w("w_pair")), 1), {c.d_H, 2, n});
  };
  g.factor_B = c.binding == BindingMode::D_with_B
                   ? with_dir_pairs(mm)
                   : ad::log_softmax(symL, 1);
  g.factor_C = c.binding == BindingMode::D_with_C
                   ? with_dir_pairs(mm)
                   : ad::log_softmax(symL, 1);
  if (c.binding == BindingMode::D_with_Wq) {
    NodePtr l0 = ad::add_col_broadcast(wordL, ad::slice_cols(dirL, 0, 1));
    NodePtr l1 = ad::add_col_broadcast(wordL, ad::slice_cols(dirL, 1, 2));
    g.factor_w = ad::reshape(ad::log_softmax(ad::concat(l0, l1, 1), 1),
                             {c.d_H, 2, c.vocab});
  } else {
    g.factor_w = ad::log_softmax(wordL, 1);
  }
  if (c.binding == BindingMode::D_alone)
    g.factor_D = ad::log_softmax(dirL, 1);
  return g;
}

ad::NodePtr compute_sentence_conditionals(
    const Model& m, const std::vector<std::size_t>& words) {
  const ModelConfig& c = m.cfg;
  std::size_t l = words.size();
  std::vector<std::size_t> sym_ix(l * c.n_N), word_ix(l * c.n_N);
  for (std::size_t p = 0; p < l; ++p) {
    if (words[p] >= c.vocab)
      throw std::out_of_range("compute_sentence_conditionals: word id " +
                              std::to_string(words[p]) + " >= vocab");
    for (std::size_t A = 0; A < c.n_N; ++A) {
      sym_ix[p * c.n_N + A] = A;
      word_ix[p * c.n_N + A] = words[p];
    }
  }
  NodePtr Wa = ad::gather_rows(m.w("w_sym"), sym_ix);
  NodePtr Ww = ad::gather_rows(m.w("w_word"), word_ix);
  // f([x; y]) = h4(ReLU(W [x; y]) + y): residual on the word embedding
  NodePtr z = ad::add(
      ad::relu(ad::matmul(ad::concat(Wa, Ww, 1), ad::transpose(m.w("f_W")))),
      Ww);
  NodePtr logits = ad::matmul(mlp_h(m, 4, z), ad::transpose(m.w("u_H")));
  return ad::reshape(ad::log_softmax(logits, 1), {l, c.n_N, c.d_H});
}

NblInputs sentence_inputs(const Model& m, const GlobalDists& g,
                          const std::vector<std::size_t>& words) {
  NblInputs in;
  in.binding = m.cfg.binding;
  in.n_N = m.cfg.n_N;
  in.n_P = m.cfg.n_P;
  in.d_H = m.cfg.d_H;
  in.words = words;
  in.root_sym = g.root_sym;
  in.root_word = ad::gather_cols(g.root_word, words);
  in.head_latent = compute_sentence_conditionals(m, words);
  in.factor_B = g.factor_B;
  in.factor_C = g.factor_C;
  in.factor_w = g.factor_w;
  in.factor_D = g.factor_D;
  return in;
}

NblParams materialize_params(const Model& m) {
  const ModelConfig& c = m.cfg;
  GlobalDists g = compute_global_distributions(m);
  NblParams p;
  p.inv.n_N = c.n_N;
  p.inv.n_P = c.n_P;
  p.inv.vocab.resize(c.vocab);
  for (std::size_t w = 0; w < c.vocab; ++w)
    p.inv.vocab[w] = "w" + std::to_string(w);
  p.binding = c.binding;
  p.d_H = c.d_H;
  p.root_sym = g.root_sym->value;
  p.root_word = g.root_word->value;
  p.factor_B = g.factor_B->value;
  p.factor_C = g.factor_C->value;
  p.factor_w = g.factor_w->value;
  if (g.factor_D) p.factor_D = g.factor_D->value;
  NodePtr cond = compute_sentence_conditionals(m, iota_idx(c.vocab));
  p.head_latent = Array({c.n_N, c.vocab, c.d_H});
  for (std::size_t w = 0; w < c.vocab; ++w)
    for (std::size_t A = 0; A < c.n_N; ++A)
      for (std::size_t H = 0; H < c.d_H; ++H)
        p.head_latent.at3(A, w, H) = cond->value.at3(w, A, H);
  return p;
}

namespace {

constexpr char kMagic[8] = {'N', 'B', 'L', 'P', 'C', 'F', 'G', '1'};

void put_u64(std::ostream& os, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = (unsigned char)(v >> (8 * i));
  os.write(reinterpret_cast<char*>(b), 8);
}

std::uint64_t get_u64(std::istream& is) {
  unsigned char b[8];
  if (!is.read(reinterpret_cast<char*>(b), 8))
    throw std::runtime_error("checkpoint: truncated file");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= std::uint64_t(b[i]) << (8 * i);
  return v;
}

}  // namespace

void save_checkpoint(const Model& m, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("checkpoint: cannot open " + path);
  os.write(kMagic, 8);
  put_u64(os, m.weights.size());
  for (const auto& [name, node] : m.weights) {
    put_u64(os, name.size());
    os.write(name.data(), std::streamsize(name.size()));
    put_u64(os, node->value.rank());
    for (std::size_t d : node->value.shape) put_u64(os, d);
    for (double x : node->value.data) {
      float f = float(x);
      static_assert(sizeof(float) == 4);
      os.write(reinterpret_cast<char*>(&f), 4);
    }
  }
  if (!os) throw std::runtime_error("checkpoint: write failed for " + path);
}

Model load_checkpoint(const std::string& path, const ModelConfig& cfg) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("checkpoint: cannot open " + path);
  char magic[8];
  if (!is.read(magic, 8) || std::memcmp(magic, kMagic, 8) != 0)
    throw std::runtime_error("checkpoint: bad magic");
  Model m = init_model(cfg);
  std::uint64_t count = get_u64(is);
  if (count != m.weights.size())
    throw std::runtime_error("checkpoint: config mismatch (array count " +
                             std::to_string(count) + ", expected " +
                             std::to_string(m.weights.size()) + ")");
  std::vector<bool> seen(m.weights.size(), false);
  for (std::uint64_t k = 0; k < count; ++k) {
    std::uint64_t nl = get_u64(is);
    std::string name(nl, '\0');
    if (!is.read(name.data(), std::streamsize(nl)))
      throw std::runtime_error("checkpoint: truncated file");
    std::uint64_t rank = get_u64(is);
    std::vector<std::size_t> shape(rank);
    for (auto& d : shape) d = std::size_t(get_u64(is));
    std::size_t slot = m.weights.size();
    for (std::size_t s = 0; s < m.weights.size(); ++s)
      if (m.weights[s].first == name) slot = s;
    if (slot == m.weights.size())
      throw std::runtime_error("checkpoint: unknown array " + name);
    Array& dst = m.weights[slot].second->value;
    if (shape != dst.shape)
      throw std::runtime_error("checkpoint: config mismatch for " + name +
                               " (stored " + Array(shape).shape_str() +
                               ", expected " + dst.shape_str() + ")");
    for (double& x : dst.data) {
      float f;
      if (!is.read(reinterpret_cast<char*>(&f), 4))
        throw std::runtime_error("checkpoint: truncated file");
      x = double(f);
    }
    seen[slot] = true;
  }
  for (std::size_t s = 0; s < seen.size(); ++s)
    if (!seen[s])
      throw std::runtime_error("checkpoint: missing array " +
                               m.weights[s].first);
  return m;
}

}  // namespace nbl
