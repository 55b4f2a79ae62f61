#include <doctest.h>

#include <cmath>
#include <map>
#include <random>
#include <set>

#include "nbl/decode.hpp"
#include "nbl/inside.hpp"

using namespace nbl;

namespace {

SymbolInventory tiny11() { return {1, 1, {"a", "b"}}; }

NblParams onehot_grammar() {
  NblParams p = make_uniform_nbl(tiny11(), 1, BindingMode::D_with_C);
  p.root_sym.data = {0.0};
  p.root_word.data = {0.0, kNegInf};                   // w_p = a
  p.factor_B.data = {kNegInf, 0.0};                    // B = T
  p.factor_C.data = {kNegInf, 0.0, kNegInf, kNegInf};  // (left, C = T)
  p.factor_w.data = {kNegInf, 0.0};                    // w_q = b
  return p;
}

std::vector<std::size_t> random_sentence(std::mt19937& rng, std::size_t l,
                                         std::size_t V) {
  std::uniform_int_distribution<std::size_t> d(0, V - 1);
  std::vector<std::size_t> w(l);
  for (auto& x : w) x = d(rng);
  return w;
}

void collect_spans(const LexTreePtr& t,
                   std::set<std::pair<std::size_t, std::size_t>>& out) {
  if (t->is_leaf()) return;
  out.insert({t->span_begin(), t->span_end()});
  collect_spans(t->left, out);
  collect_spans(t->right, out);
}

// posterior span / arc / root frequencies by full tree enumeration
struct Posterior {
  std::map<std::pair<std::size_t, std::size_t>, double> spans;
  std::map<std::pair<std::size_t, std::size_t>, double> arcs;
  std::vector<double> root;
  double logZ = kNegInf;
};

Posterior enumerate_posterior(const NblParams& p,
                              const std::vector<std::size_t>& words) {
  auto trees = enumerate_lexicalized_trees(words.size(), p.inv);
  std::vector<double> lp(trees.size());
  Posterior post;
  post.root.assign(words.size(), 0.0);
  for (std::size_t t = 0; t < trees.size(); ++t) {
    lp[t] = tree_log_probability(p, trees[t], words);
    if (lp[t] == kNegInf) continue;
    post.logZ = post.logZ == kNegInf
                    ? lp[t]
                    : std::max(post.logZ, lp[t]) +
                          std::log1p(std::exp(-std::abs(lp[t] - post.logZ)));
  }
  for (std::size_t t = 0; t < trees.size(); ++t) {
    if (lp[t] == kNegInf) continue;
    double w = std::exp(lp[t] - post.logZ);
    std::set<std::pair<std::size_t, std::size_t>> sp;
    collect_spans(trees[t], sp);
    for (auto s : sp) post.spans[s] += w;
    auto d = extract_dependencies(trees[t]);
    for (auto a : d.arcs) post.arcs[a] += w;
    post.root[d.root] += w;
  }
  return post;
}

double fast_loglik(const NblParams& p, const std::vector<std::size_t>& words) {
  return inside_nbl(wrap_params(p, words, false), nullptr)->value.data[0];
}

}  // namespace

TEST_SUITE("decode") {

TEST_CASE("viterbi recovers the unique tree of a one-hot grammar") {
  NblParams p = onehot_grammar();
  auto out = viterbi_cyk(p, {0, 1});
  CHECK(out.log_likelihood == doctest::Approx(0.0));
  CHECK(out.tree->symbol == 0);
  CHECK(out.tree->dir == kHeadLeft);
  CHECK(out.deps.root == 0);
  REQUIRE(out.deps.arcs.size() == 1);
  CHECK(out.deps.arcs[0] == std::pair<std::size_t, std::size_t>{0, 1});
  CHECK_THROWS_AS(viterbi_cyk(p, {0}), std::invalid_argument);
}

TEST_CASE("viterbi tie on 'a b' under the uniform grammar picks head 0") {
  NblParams p = make_uniform_nbl(tiny11(), 1, BindingMode::D_with_C);
  auto out = viterbi_cyk(p, {0, 1});
  CHECK(out.log_likelihood == doctest::Approx(std::log(1.0 / 32.0)));
  CHECK(out.deps.root == 0);
}

TEST_CASE("viterbi score is exact and bounded by the marginal likelihood") {
  std::mt19937 rng(31);
  SymbolInventory inv{2, 2, {"a", "b", "c"}};
  for (int trial = 0; trial < 100; ++trial) {
    NblParams p = make_random_nbl(inv, 2, BindingMode::D_with_C, rng);
    auto words = random_sentence(rng, 2 + trial % 4, 3);
    auto out = viterbi_cyk(p, words);
    CHECK(tree_log_probability(p, out.tree, words) ==
          doctest::Approx(out.log_likelihood).epsilon(1e-9));
    CHECK(out.log_likelihood <= fast_loglik(p, words) + 1e-9);
  }
}

TEST_CASE("span marginals: basic shapes and the uniform length-3 split") {
  NblParams p = make_uniform_nbl(tiny11(), 1, BindingMode::D_with_C);
  auto mu2 = span_marginals(p, {0, 1});
  CHECK(mu2.at(0, 2) == doctest::Approx(1.0));
  auto mu3 = span_marginals(p, {0, 1, 0});
  CHECK(mu3.at(0, 2) + mu3.at(1, 3) == doctest::Approx(1.0));
  CHECK(mu3.at(0, 2) > 0.0);
  CHECK(mu3.at(0, 2) < 1.0);
}

TEST_CASE("span and arc marginals match enumeration posteriors") {
  std::mt19937 rng(32);
  SymbolInventory inv{1, 2, {"a", "b"}};
  for (int trial = 0; trial < 4; ++trial) {
    NblParams p = make_random_nbl(inv, 2, BindingMode::D_with_C, rng);
    for (std::size_t l = 2; l <= 4; ++l) {
      auto words = random_sentence(rng, l, 2);
      auto post = enumerate_posterior(p, words);
      auto mu = span_marginals(p, words);
      for (std::size_t w = 2; w <= l; ++w)
        for (std::size_t i = 0; i + w <= l; ++i) {
          double ref = 0.0;
          auto it = post.spans.find({i, i + w});
          if (it != post.spans.end()) ref = it->second;
          CHECK(mu.at(i, i + w) == doctest::Approx(ref).epsilon(1e-6));
        }
      auto am = arc_marginals(p, words);
      for (std::size_t h = 0; h < l; ++h)
        for (std::size_t q = 0; q < l; ++q) {
          if (h == q) continue;
          double ref = 0.0;
          auto it = post.arcs.find({h, q});
          if (it != post.arcs.end()) ref = it->second;
          CHECK(am.arc.at2(h, q) == doctest::Approx(ref).epsilon(1e-6));
        }
      for (std::size_t r = 0; r < l; ++r)
        CHECK(am.root.at(r) == doctest::Approx(post.root[r]).epsilon(1e-6));
    }
  }
}

TEST_CASE("marginal invariants hold on random instances up to length 8") {
  std::mt19937 rng(33);
  SymbolInventory inv{2, 3, {"a", "b", "c", "d"}};
  for (std::size_t l = 2; l <= 8; l += 2) {
    NblParams p = make_random_nbl(inv, 3, BindingMode::D_alone, rng);
    auto words = random_sentence(rng, l, 4);
    auto mu = span_marginals(p, words);
    CHECK(mu.at(0, l) == doctest::Approx(1.0).epsilon(1e-6));
    double tot = 0.0;
    for (std::size_t w = 2; w <= l; ++w)
      for (std::size_t i = 0; i + w <= l; ++i) {
        CHECK(mu.at(i, i + w) >= 0.0);
        CHECK(mu.at(i, i + w) <= 1.0 + 1e-6);
        tot += mu.at(i, i + w);
      }
    CHECK(tot == doctest::Approx(double(l - 1)).epsilon(1e-6));
    auto am = arc_marginals(p, words);
    double rho = 0.0;
    for (std::size_t r = 0; r < l; ++r) rho += am.root.at(r);
    CHECK(rho == doctest::Approx(1.0).epsilon(1e-6));
    for (std::size_t q = 0; q < l; ++q) {
      double mass = am.root.at(q);
      for (std::size_t h = 0; h < l; ++h)
        if (h != q) mass += am.arc.at2(h, q);
      CHECK(mass == doctest::Approx(1.0).epsilon(1e-6));
    }
  }
}

TEST_CASE("arc marginals: uniform 'a b' and the one-hot grammar") {
  NblParams u = make_uniform_nbl(tiny11(), 1, BindingMode::D_with_C);
  auto am = arc_marginals(u, {0, 1});
  CHECK(am.arc.at2(0, 1) == doctest::Approx(0.5));
  CHECK(am.arc.at2(1, 0) == doctest::Approx(0.5));
  CHECK(am.root.at(0) == doctest::Approx(0.5));
  CHECK(am.root.at(1) == doctest::Approx(0.5));

  auto oh = arc_marginals(onehot_grammar(), {0, 1});
  CHECK(oh.arc.at2(0, 1) == doctest::Approx(1.0));
  CHECK(oh.arc.at2(1, 0) == doctest::Approx(0.0));
  CHECK(oh.root.at(0) == doctest::Approx(1.0));
}

TEST_CASE("mbr constituency: forced l=2, dominant span, recall optimality") {
  SpanMarginals mu2;
  mu2.l = 2;
  mu2.mu = Array({3, 3});
  mu2.mu.at2(0, 2) = 1.0;
  auto spans2 = mbr_constituency(mu2);
  REQUIRE(spans2.size() == 1);
  CHECK(spans2[0] == std::pair<std::size_t, std::size_t>{0, 2});

  SpanMarginals mu3;
  mu3.l = 3;
  mu3.mu = Array({4, 4});
  mu3.mu.at2(0, 3) = 1.0;
  mu3.mu.at2(0, 2) = 0.9;
  mu3.mu.at2(1, 3) = 0.1;
  auto spans3 = mbr_constituency(mu3);
  REQUIRE(spans3.size() == 2);
  CHECK(spans3[0] == std::pair<std::size_t, std::size_t>{0, 2});

  // expected span recall of the MBR tree >= that of the Viterbi tree
  std::mt19937 rng(34);
  SymbolInventory inv{1, 2, {"a", "b"}};
  for (int trial = 0; trial < 5; ++trial) {
    NblParams p = make_random_nbl(inv, 2, BindingMode::D_with_C, rng);
    auto words = random_sentence(rng, 4, 2);
    auto mu = span_marginals(p, words);
    auto mbr = mbr_constituency(mu);
    std::set<std::pair<std::size_t, std::size_t>> vit;
    collect_spans(viterbi_cyk(p, words).tree, vit);
    double rm = 0.0, rv = 0.0;
    for (auto s : mbr) rm += mu.at(s.first, s.second);
    for (auto s : vit) rv += mu.at(s.first, s.second);
    CHECK(rm >= rv - 1e-9);
  }
}

TEST_CASE("mbr dependency: dominant scores and brute-force agreement") {
  ArcMarginals m2;
  m2.l = 2;
  m2.arc = Array({2, 2});
  m2.root = Array::vec({0.8, 0.2});
  m2.arc.at2(0, 1) = 0.9;
  m2.arc.at2(1, 0) = 0.1;
  auto d2 = mbr_dependency(m2);
  CHECK(d2.root == 0);
  REQUIRE(d2.arcs.size() == 1);
  CHECK(d2.arcs[0] == std::pair<std::size_t, std::size_t>{0, 1});

  // exhaustive projective search oracle on l <= 4
  std::mt19937 rng(35);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (std::size_t l = 2; l <= 4; ++l)
    for (int trial = 0; trial < 20; ++trial) {
      ArcMarginals mu;
      mu.l = l;
      mu.arc = Array({l, l});
      mu.root = Array({l});
      for (std::size_t a = 0; a < l; ++a) {
        mu.root.at(a) = u(rng);
        for (std::size_t b = 0; b < l; ++b)
          if (a != b) mu.arc.at2(a, b) = u(rng);
      }
      auto got = mbr_dependency(mu);
      CHECK(got.arcs.size() == l - 1);
      double got_score = mu.root.at(got.root);
      for (auto a : got.arcs) got_score += mu.arc.at2(a.first, a.second);

      // enumerate all projective dependency trees via lexicalized trees
      auto trees = enumerate_lexicalized_trees(l, tiny11());
      double best = kNegInf;
      for (const auto& t : trees) {
        auto d = extract_dependencies(t);
        double sc = mu.root.at(d.root);
        for (auto a : d.arcs) sc += mu.arc.at2(a.first, a.second);
        best = std::max(best, sc);
      }
      CHECK(got_score == doctest::Approx(best).epsilon(1e-12));
    }
}

TEST_CASE("viterbi tree and its extracted dependencies are consistent") {
  std::mt19937 rng(36);
  SymbolInventory inv{2, 2, {"a", "b", "c"}};
  for (int trial = 0; trial < 10; ++trial) {
    NblParams p = make_random_nbl(inv, 2, BindingMode::D_with_B, rng);
    auto words = random_sentence(rng, 5, 3);
    auto out = viterbi_cyk(p, words);
    CHECK(out.deps.arcs.size() == words.size() - 1);
    CHECK(out.tree->head_pos == out.deps.root);
  }
}

}  // TEST_SUITE
