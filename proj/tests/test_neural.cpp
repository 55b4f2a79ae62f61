#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>

#include "nbl/inside.hpp"
#include "nbl/neural.hpp"

using namespace nbl;

namespace {

ModelConfig tiny_cfg(BindingMode b = BindingMode::D_with_C) {
  ModelConfig c;
  c.embed_dim = 8;
  c.n_N = 2;
  c.n_P = 4;
  c.d_H = 3;
  c.vocab = 6;
  c.binding = b;
  c.seed = 11;
  return c;
}

void zero_weights(Model& m) {
  for (auto& [name, node] : m.weights)
    std::fill(node->value.data.begin(), node->value.data.end(), 0.0);
}

void check_log_rows(const Array& a, std::size_t row_len) {
  REQUIRE(a.numel() % row_len == 0);
  for (std::size_t r = 0; r < a.numel() / row_len; ++r) {
    double s = 0.0;
    for (std::size_t k = 0; k < row_len; ++k)
      s += std::exp(a.data[r * row_len + k]);
    CHECK(s == doctest::Approx(1.0).epsilon(1e-9));
  }
}

const BindingMode kModes[] = {BindingMode::D_with_C, BindingMode::D_alone,
                              BindingMode::D_with_Wq, BindingMode::D_with_B};

}  // namespace

TEST_SUITE("neural") {

TEST_CASE("xavier init: bounds, determinism, 256x256 constant") {
  ModelConfig c;
  c.vocab = 20;
  Model m1 = init_model(c), m2 = init_model(c);
  double sq_bound = std::sqrt(6.0 / 512.0);
  CHECK(sq_bound == doctest::Approx(0.108253).epsilon(1e-5));
  for (std::size_t k = 0; k < m1.weights.size(); ++k) {
    const auto& [name, node] = m1.weights[k];
    const Array& a = node->value;
    double bound;
    if (name == "f_W")
      bound = std::sqrt(6.0 / double(256 + 512));
    else if (name[0] == 'h')
      bound = sq_bound;
    else
      bound = std::sqrt(6.0 / 257.0);  // embeddings: fan pair (1, dim)
    double mx = 0.0;
    for (double x : a.data) mx = std::max(mx, std::abs(x));
    CHECK(mx <= bound);
    CHECK(mx > 0.5 * bound);  // the sampler actually uses its range
    CHECK(m2.weights[k].second->value.data == a.data);  // bit-identical
  }
  CHECK(m1.w("h1_W")->value.shape == std::vector<std::size_t>{256, 256});
  CHECK_THROWS_AS(init_model(ModelConfig{}), std::invalid_argument);  // vocab 0
}

TEST_CASE("residual block: identity at zero weights, shape, gradients") {
  auto U = ad::make_leaf(Array({4, 4}), true);
  auto V = ad::make_leaf(Array({4, 4}), true);
  auto y = ad::make_leaf(Array::vec({1.5, -2.0, 0.25, 3.0}), true);
  auto yr = ad::reshape(y, {1, 4});
  auto out = residual_block(yr, U, V);
  CHECK(out->value.shape == yr->value.shape);
  for (std::size_t k = 0; k < 4; ++k)
    CHECK(out->value.data[k] == yr->value.data[k]);

  std::mt19937 rng(3);
  std::uniform_real_distribution<double> u(-0.8, 0.8);
  std::vector<Array> pt;
  for (int t = 0; t < 3; ++t) {
    Array a(t == 2 ? std::vector<std::size_t>{1, 4}
                   : std::vector<std::size_t>{4, 4});
    for (auto& x : a.data) x = u(rng);
    pt.push_back(std::move(a));
  }
  auto f = [](const std::vector<ad::NodePtr>& in) {
    return ad::sum_all(residual_block(in[2], in[0], in[1]));
  };
  auto rep = ad::finite_diff_check(f, pt, 1e-6, 1e-4);
  CHECK(rep.max_rel_err < 1e-4);
}

TEST_CASE("global distributions normalize; D_with_C axis is 2(n_N+n_P)") {
  for (auto b : kModes) {
    Model m = init_model(tiny_cfg(b));
    GlobalDists g = compute_global_distributions(m);
    std::size_t mm = m.cfg.n_children();
    check_log_rows(g.root_sym->value, m.cfg.n_N);
    check_log_rows(g.root_word->value, m.cfg.vocab);
    bool dirB = b == BindingMode::D_with_B, dirC = b == BindingMode::D_with_C;
    bool dirW = b == BindingMode::D_with_Wq;
    check_log_rows(g.factor_B->value, dirB ? 2 * mm : mm);
    check_log_rows(g.factor_C->value, dirC ? 2 * mm : mm);
    check_log_rows(g.factor_w->value, dirW ? 2 * m.cfg.vocab : m.cfg.vocab);
    if (b == BindingMode::D_alone) {
      check_log_rows(g.factor_D->value, 2);
    } else {
      CHECK(g.factor_D == nullptr);
    }
    if (dirC)
      CHECK(g.factor_C->value.shape ==
            std::vector<std::size_t>{m.cfg.d_H, 2, mm});
  }
}

TEST_CASE("zero weights give uniform distributions") {
  Model m = init_model(tiny_cfg());
  zero_weights(m);
  GlobalDists g = compute_global_distributions(m);
  for (double x : g.root_sym->value.data)
    CHECK(x == doctest::Approx(std::log(1.0 / 2.0)));
  for (double x : g.root_word->value.data)
    CHECK(x == doctest::Approx(std::log(1.0 / 6.0)));
  for (double x : g.factor_C->value.data)
    CHECK(x == doctest::Approx(std::log(1.0 / 12.0)));  // joint over 2m
  for (double x : g.factor_B->value.data)
    CHECK(x == doctest::Approx(std::log(1.0 / 6.0)));
}

TEST_CASE("sentence conditionals: shape, softmax, position independence") {
  Model m = init_model(tiny_cfg());
  std::vector<std::size_t> words{3, 1, 3, 5};
  auto cond = compute_sentence_conditionals(m, words);
  CHECK(cond->value.shape == std::vector<std::size_t>{4, 2, 3});
  check_log_rows(cond->value, 3);
  for (std::size_t A = 0; A < 2; ++A)
    for (std::size_t H = 0; H < 3; ++H)
      CHECK(cond->value.at3(0, A, H) == cond->value.at3(2, A, H));
  CHECK_THROWS_AS(compute_sentence_conditionals(m, {0, 6}),
                  std::out_of_range);

  ModelConfig c1 = tiny_cfg();
  c1.d_H = 1;
  auto cond1 = compute_sentence_conditionals(init_model(c1), words);
  for (double x : cond1->value.data) CHECK(x == 0.0);
}

TEST_CASE("materialized parameters pass validate_params in every mode") {
  for (auto b : kModes) {
    Model m = init_model(tiny_cfg(b));
    NblParams p = materialize_params(m);
    CHECK(validate_params(p).empty());
  }
}

TEST_CASE("checkpoint round trip and error cases") {
  ModelConfig c = tiny_cfg();
  Model m = init_model(c);
  const char* path = "ckpt_test.bin";
  save_checkpoint(m, path);
  Model back = load_checkpoint(path, c);
  double mx = 0.0;
  for (std::size_t k = 0; k < m.weights.size(); ++k)
    for (std::size_t x = 0; x < m.weights[k].second->value.numel(); ++x)
      mx = std::max(mx, std::abs(m.weights[k].second->value.data[x] -
                                 back.weights[k].second->value.data[x]));
  CHECK(mx <= 1e-6);

  ModelConfig other = c;
  other.n_N = 3;
  other.n_P = 6;
  CHECK_THROWS_WITH_AS(load_checkpoint(path, other),
                       doctest::Contains("config mismatch"),
                       std::runtime_error);

  {
    std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(0);
    f.write("XXXXXXXX", 8);
  }
  CHECK_THROWS_WITH_AS(load_checkpoint(path, c),
                       doctest::Contains("bad magic"), std::runtime_error);

  save_checkpoint(m, path);
  {
    std::ifstream in(path, std::ios::binary);
    std::string all((std::istreambuf_iterator<char>(in)),
                    std::istreambuf_iterator<char>());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out.write(all.data(), std::streamsize(all.size() / 2));
  }
  CHECK_THROWS_WITH_AS(load_checkpoint(path, c),
                       doctest::Contains("truncated"), std::runtime_error);
  std::remove(path);
}

TEST_CASE("whole-model gradient matches finite differences") {
  for (auto b : kModes) {
    ModelConfig c = tiny_cfg(b);
    c.seed = 23;
    Model m = init_model(c);
    std::vector<std::size_t> words{2, 0, 4};
    auto loglik = [&]() {
      GlobalDists g = compute_global_distributions(m);
      return inside_nbl(sentence_inputs(m, g, words), nullptr);
    };
    auto root = loglik();
    ad::backward(root);
    std::mt19937 pick(5);
    std::uniform_int_distribution<std::size_t> wd(0, m.weights.size() - 1);
    int checked = 0;
    while (checked < 12) {
      auto& node = m.weights[wd(pick)].second;
      std::uniform_int_distribution<std::size_t> cd(0, node->value.numel() - 1);
      std::size_t ix = cd(pick);
      double save = node->value.data[ix], h = 1e-5;
      node->value.data[ix] = save + h;
      double up = loglik()->value.data[0];
      node->value.data[ix] = save - h;
      double dn = loglik()->value.data[0];
      node->value.data[ix] = save;
      double fd = (up - dn) / (2 * h);
      double an = node->grad.numel() ? node->grad.data[ix] : 0.0;
      double rel = std::abs(fd - an) /
                   std::max({std::abs(fd), std::abs(an), 1e-8});
      CHECK(rel < 1e-4);
      ++checked;
    }
  }
}

}  // TEST_SUITE
